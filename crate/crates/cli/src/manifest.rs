//! Self-describing run directories: the manifest embeds the model, the
//! exhaustion and the resolved task, so a run can be repeated from it alone.

use std::path::Path;

use qsd_core::assumptions::Exhaustion;
use qsd_core::models::ModelConfig;
use qsd_core::QsdError;
use serde::{Deserialize, Serialize};

use crate::task::{execute, Inputs, Status, Task};
use crate::{read, write, CliError};

/// A file of a run directory: name and contents.
type RunFile = (String, Vec<u8>);

pub const SCHEMA: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema: u32,
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub tol: f64,
    pub model: ModelConfig,
    pub exhaustion: Option<Exhaustion>,
    pub task: Task,
    /// Filled in after execution.
    #[serde(default)]
    pub outputs: Vec<String>,
    #[serde(default)]
    pub status: Option<Status>,
}

impl Manifest {
    pub fn new(
        seed: u64,
        tol: f64,
        model: ModelConfig,
        exhaustion: Option<Exhaustion>,
        task: Task,
    ) -> Self {
        Self {
            schema: SCHEMA,
            tool: "qsd".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            tol,
            model,
            exhaustion,
            task,
            outputs: Vec::new(),
            status: None,
        }
    }

    fn inputs(&self) -> Inputs<'_> {
        Inputs {
            model: &self.model,
            exhaustion: self.exhaustion.as_ref(),
            seed: self.seed,
            tol: self.tol,
        }
    }

    pub fn load(run: &Path) -> Result<Self, CliError> {
        let path = run.join(MANIFEST);
        let m: Self = serde_json::from_str(&read(&path)?).map_err(QsdError::from)?;
        if m.schema != SCHEMA {
            return Err(CliError::Usage(format!(
                "{}: schema {} is not supported (expected {SCHEMA})",
                path.display(),
                m.schema
            )));
        }
        if let Some(e) = &m.exhaustion {
            e.validate(m.model.generator()?.len())?;
        }
        Ok(m)
    }

    /// Runs the task and returns every file of the run, manifest last.
    fn produce(&self) -> Result<(Vec<RunFile>, Status), CliError> {
        let out = execute(&self.task, &self.inputs())?;
        let mut done = self.clone();
        done.outputs = out.files.iter().map(|f| f.0.clone()).collect();
        done.status = Some(out.status);
        let mut files = out.files;
        let mut bytes = serde_json::to_vec_pretty(&done).map_err(QsdError::from)?;
        bytes.push(b'\n');
        files.push((MANIFEST.to_string(), bytes));
        Ok((files, out.status))
    }

    pub fn execute_into(&self, dir: &Path) -> Result<Status, CliError> {
        let (files, status) = self.produce()?;
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        for (name, bytes) in &files {
            write(&dir.join(name), bytes)?;
        }
        Ok(status)
    }
}

/// Re-executes a recorded run into `out` and compares every file with the
/// recorded one.
pub fn replay(recorded: &Manifest, run: &Path, out: &Path) -> Result<Status, CliError> {
    let mut fresh = recorded.clone();
    fresh.outputs.clear();
    fresh.status = None;
    let status = fresh.execute_into(out)?;
    let mut names = recorded.outputs.clone();
    names.push(MANIFEST.to_string());
    for name in names {
        let a = std::fs::read(run.join(&name)).map_err(|source| CliError::Io {
            path: run.join(&name),
            source,
        })?;
        let b = std::fs::read(out.join(&name)).map_err(|source| CliError::Io {
            path: out.join(&name),
            source,
        })?;
        if a != b {
            return Err(CliError::ReplayMismatch(name));
        }
    }
    Ok(status)
}
