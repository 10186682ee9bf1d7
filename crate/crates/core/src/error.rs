use std::io;

use thiserror::Error;

use crate::mdp::Violation;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown state `{0}`")]
    UnknownState(String),

    #[error("unknown action `{0}`")]
    UnknownAction(String),

    #[error("invalid MDP: {}", format_violations(.0))]
    InvalidMdp(Vec<Violation>),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("decomposition does not match the MDP: {0}")]
    DecompositionMismatch(String),

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("not ergodic: some memoryless policy cuts off or traps states {states:?}")]
    NotErgodic { states: Vec<String> },

    #[error("dense assembly needs {columns} columns, cap is {cap}")]
    DenseCapExceeded { columns: usize, cap: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("automaton error: {0}")]
    Automaton(String),

    #[error("gridworld error: {0}")]
    Grid(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("{path}: {source}")]
    File { path: String, source: Box<Error> },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

impl Error {
    /// Attaches the file the error came from.
    pub fn in_file(self, path: &std::path::Path) -> Error {
        Error::File { path: path.display().to_string(), source: Box::new(self) }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
