use thiserror::Error;

use crate::coupling::CouplingState;

pub type Result<T, E = QsdError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum QsdError {
    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// The surviving mass is too small to condition on.
    #[error("surviving mass {mass:e} is below the underflow threshold")]
    ExtinctMass { mass: f64 },

    #[error("generator is not irreducible ({components} communicating classes)")]
    NotIrreducible { components: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("empty domain")]
    EmptyDomain,

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("horizon {t_h} does not exceed t_ps = {t_ps}")]
    HorizonTooShort { t_h: f64, t_ps: f64 },

    /// The coupling induction failed; the full state is kept for post-mortem.
    #[error("coupling induction broken at step {}: {reason}", state.j)]
    InductionBroken {
        reason: String,
        state: Box<CouplingState>,
    },

    #[error("domination violated at state {state} (deficit {deficit:e})")]
    DominationViolated { state: usize, deficit: f64 },

    #[error("all {n_paths} paths went extinct")]
    AllExtinct { n_paths: usize },

    #[error("ODE integration failed: {0}")]
    OdeFailure(String),

    #[error("assumption set violated: {0}")]
    AssumptionViolated(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl QsdError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        QsdError::InvalidArgument(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        QsdError::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
