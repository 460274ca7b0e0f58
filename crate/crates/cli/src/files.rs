//! JSON and directory inputs, and the error type every command reports.

use std::fs;
use std::path::{Path, PathBuf};

use hvsim_core::policy::{Policy, RuleTable};
use hvsim_core::scenario::{ScenarioError, ScenarioTrace};

use crate::image::ImageError;

/// Rule-table form of the builtin policy. `--policy` accepts this file and
/// it must route exactly like `builtin`.
pub const BUILTIN_RULES: &str = include_str!("../policies/builtin.json");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Config(String),
    #[error("threaded run diverged from the in-process run at {0}")]
    Divergence(String),
}

impl CliError {
    /// Process exit status: 2 for anything that stops a run from being judged.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Divergence(_) => 1,
            _ => 2,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_trace(path: &Path) -> Result<ScenarioTrace, CliError> {
    serde_json::from_str(&read(path)?).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// `builtin`, `passthrough`, or the path of a rule-table JSON file.
pub fn parse_policy(spec: &str) -> Result<Policy, CliError> {
    match spec {
        "builtin" => Ok(Policy::Builtin),
        "passthrough" => Ok(Policy::Passthrough),
        path => load_policy(Path::new(path)),
    }
}

pub fn load_policy(path: &Path) -> Result<Policy, CliError> {
    let table: RuleTable = serde_json::from_str(&read(path)?).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(Policy::Table(table))
}

pub fn builtin_rules() -> RuleTable {
    serde_json::from_str(BUILTIN_RULES).expect("bundled rule table parses")
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}
