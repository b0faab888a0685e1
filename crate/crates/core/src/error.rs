use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid data-generating process: {0}")]
    InvalidSpec(String),

    #[error("too few labelled units for K folds (labelled = {labelled}, k = {k})")]
    TooFewLabelled { labelled: usize, k: usize },

    #[error("no labelled units available")]
    NoLabelled,

    #[error("insufficient Monte Carlo budget: {got} < {min}")]
    InsufficientBudget { got: usize, min: usize },

    #[error("separation detected, increase ridge penalty")]
    Separation,

    #[error("singular design")]
    SingularDesign,

    #[error("treatment arm {arm} has no labelled training units")]
    MissingArm { arm: u8 },

    #[error("unit {index} is labelled but carries no outcome")]
    MissingOutcome { index: usize },

    #[error("ψ̃ defined on labelled units")]
    UnlabelledTilde,

    #[error("non-finite value in term `{term}` at unit {index}")]
    NonFinite { index: usize, term: &'static str },

    #[error("estimator requirement violated: {0}")]
    Requirement(String),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("bound decomposition inconsistency for {bound}: monte carlo {mc} vs closed form {closed} (combined se {se})")]
    BoundInconsistency {
        bound: &'static str,
        mc: f64,
        closed: f64,
        se: f64,
    },

    #[error("{failed} of {total} replications failed for estimator `{estimator}`: {first_error}")]
    TooManyFailures {
        estimator: String,
        failed: usize,
        total: usize,
        first_error: String,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps an error with the fold it came from.
    pub fn in_fold(self, fold: usize) -> Self {
        Error::Fold {
            fold,
            source: Box::new(self),
        }
    }

    /// True for errors caused by the caller's input rather than the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io(_) | Error::TooManyFailures { .. } | Error::BoundInconsistency { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
