use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A single config problem, located by its dotted key path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub key: String,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid field spec: {}", .0.join("; "))]
    InvalidSpec(Vec<String>),

    #[error("{0}")]
    Validation(String),

    #[error("zero pivot in tridiagonal solve at row {row}")]
    ZeroPivot { row: usize },

    #[error("Picard iteration did not converge after {iterations} iterations (relative change {residual:.3e})")]
    PicardNotConverged { iterations: usize, residual: f64 },

    #[error("non-finite value in solution")]
    NonFinite,

    #[error("at t = {t}: {source}")]
    AtTime { t: f64, source: Box<Error> },

    #[error("seed {seed}: {source}")]
    AtSeed { seed: u64, source: Box<Error> },

    #[error("epsilon = {epsilon}: {source}")]
    AtEpsilon { epsilon: f64, source: Box<Error> },

    #[error("invalid config:\n{}", render_issues(.0))]
    Config(Vec<ConfigIssue>),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn render_issues(issues: &[ConfigIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("  {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl Error {
    pub(crate) fn at_time(self, t: f64) -> Self {
        Error::AtTime {
            t,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_seed(self, seed: u64) -> Self {
        Error::AtSeed {
            seed,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_epsilon(self, epsilon: f64) -> Self {
        Error::AtEpsilon {
            epsilon,
            source: Box::new(self),
        }
    }
}
