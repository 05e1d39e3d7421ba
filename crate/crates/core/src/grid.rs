//! Time grids used for suprema over continuous time.

use crate::error::{QsdError, Result};

/// Points per decade used by the certificate searches.
pub const PER_DECADE: usize = 64;

/// Log-spaced grid on `[t_min, t_max]` (both endpoints included).
pub fn log_grid(t_min: f64, t_max: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(t_min > 0.0 && t_max >= t_min && t_max.is_finite()) || per_decade == 0 {
        return Err(QsdError::invalid(format!(
            "log grid needs 0 < t_min <= t_max, got [{t_min}, {t_max}]"
        )));
    }
    let decades = (t_max / t_min).log10();
    let n = ((decades * per_decade as f64).ceil() as usize).max(1);
    let mut out: Vec<f64> = (0..=n)
        .map(|k| t_min * 10f64.powf(decades * k as f64 / n as f64))
        .collect();
    *out.last_mut().unwrap() = t_max;
    out.dedup();
    Ok(out)
}

/// `n` evenly spaced points on `[a, b]`.
pub fn linear_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|k| a + (b - a) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}
