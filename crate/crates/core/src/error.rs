use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DrError {
    #[error("design matrix is rank deficient (collinear regressors or instruments)")]
    RankDeficient,

    #[error("objective or gradient evaluated to a non-finite value")]
    NonFiniteObjective,

    #[error("binary outcome is degenerate: every indicator equals {value}")]
    DegenerateOutcome { value: u8 },

    #[error("probit coefficients diverge; complete or quasi-complete separation suspected")]
    SeparationSuspected,

    #[error("maximum likelihood stalled at the boundary of the correlation parameter")]
    BoundarySolution,

    #[error("non-finite quantity: {0}")]
    NonFinite(&'static str),

    #[error("first stage fits the endogenous regressor exactly")]
    DegenerateFirstStage,

    #[error("optimizer did not converge within {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("every grid point failed to estimate")]
    CurveFailed,

    #[error("only {succeeded} of {requested} bootstrap replicates succeeded")]
    ReplicateFailure { succeeded: usize, requested: usize },

    #[error("column `{0}` not found in header")]
    MissingColumn(String),

    #[error("no rows left after dropping missing values")]
    EmptyAfterFiltering,

    #[error("invalid value in row {row}, column `{column}`: {reason}")]
    NonNumeric { row: usize, column: String, reason: String },

    #[error("i/o failure: {0}")]
    Io(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl From<std::io::Error> for DrError {
    fn from(e: std::io::Error) -> Self {
        DrError::Io(e.to_string())
    }
}

impl From<csv::Error> for DrError {
    fn from(e: csv::Error) -> Self {
        DrError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, DrError>;
