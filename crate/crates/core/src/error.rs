use thiserror::Error;

/// Errors produced while building designs, fitting learners or running the estimator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in row {row} ({what})")]
    NonFinite { row: usize, what: String },

    #[error("singular design (condition estimate {condition:.3e})")]
    SingularDesign { condition: f64 },

    #[error("stage {stage} weighted Gram matrix is not positive definite (condition estimate {condition:.3e})")]
    SingularStage { stage: u8, condition: f64 },

    #[error("degenerate labels: only one class present")]
    DegenerateLabels,

    #[error("not enough rows: need more than {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("{nuisance}: training complement of fold {fold} contains a single treatment class")]
    DegenerateFold { nuisance: &'static str, fold: usize },

    #[error("all base learners failed: {0}")]
    AllLearnersFailed(String),

    #[error("bootstrap: {failed} of {total} resamples failed (limit 5%)")]
    BootstrapFailures { failed: usize, total: usize },

    #[error("config: {0}")]
    Config(String),

    #[error("csv line {line}: {msg}")]
    Csv { line: u64, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        Error::Csv {
            line,
            msg: e.to_string(),
        }
    }
}
