//! Error type shared across the toolkit.
//!
//! Variants are grouped into the four exit classes the CLI reports:
//! configuration/schema problems, I/O failures, numerical failures, and
//! oracle-budget exhaustion.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad configuration: unknown/missing key, malformed value, or an
    /// invalid combination of settings. The message names the offending key.
    #[error("config error: {0}")]
    Config(String),

    /// Invalid input to a library operation (dimension mismatch, out-of-box
    /// point, malformed sequence).
    #[error("input error: {0}")]
    Input(String),

    /// File-system failure, annotated with the path involved.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    /// Linear-algebra failure that survived jitter escalation, or any other
    /// non-recoverable numeric breakdown.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// The metered oracle refused an evaluation because the budget is spent.
    #[error("oracle budget exhausted: {used} of {budget} calls used")]
    BudgetExhausted { used: u64, budget: u64 },

    /// Model training produced a non-finite loss.
    #[error("training diverged at step {step}: {what}")]
    Training { step: usize, what: String },

    /// Latent inversion hit a non-finite gradient.
    #[error("inversion failed at step {step}: {what}")]
    Inversion { step: usize, what: String },

    /// An empirical estimate could not be formed (e.g. all sampled pairs
    /// coincide when estimating a Lipschitz constant).
    #[error("estimation error: {0}")]
    Estimation(String),
}

impl Error {
    /// Process exit code class for the CLI: 2 config/input, 3 io,
    /// 4 numerical (incl. training/inversion/estimation), 5 budget.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Input(_) => 2,
            Error::Io { .. } => 3,
            Error::Numerical(_)
            | Error::Training { .. }
            | Error::Inversion { .. }
            | Error::Estimation(_) => 4,
            Error::BudgetExhausted { .. } => 5,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
