use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("wrong problem case: {0}")]
    WrongCase(String),

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("step size too large: {0}")]
    StepTooLarge(String),

    #[error("diverged at epoch {epoch}, step {step} (eta = {eta:e})")]
    Divergence { epoch: usize, step: usize, eta: f64 },

    #[error("iteration budget exhausted after {epochs} epochs (best objective {best:e})")]
    BudgetExhausted { epochs: usize, best: f64 },

    #[error("spec error at {field}: {message}")]
    Spec { field: String, message: String },

    #[error("traces are not comparable: {0}")]
    Comparability(String),

    #[error("label error: {0}")]
    Label(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("run {solver} (seed {seed}): {source}")]
    Run {
        solver: String,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Short machine-readable tag used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::InvalidData(_) => "invalid_data",
            Error::Parameter(_) => "parameter",
            Error::Dimension { .. } => "dimension",
            Error::WrongCase(_) => "wrong_case",
            Error::Unsupported(_) => "unsupported",
            Error::StepTooLarge(_) => "step_too_large",
            Error::Divergence { .. } => "divergence",
            Error::BudgetExhausted { .. } => "budget_exhausted",
            Error::Spec { .. } => "spec",
            Error::Comparability(_) => "comparability",
            Error::Label(_) => "label",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Run { source, .. } => source.kind(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
