use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: cannot use value `{value}`")]
    Parse {
        /// 1-based data row (the header is not counted).
        row: usize,
        column: String,
        value: String,
    },

    #[error("size error: {0}")]
    Size(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("estimated score variance is not positive ({0})")]
    DegenerateVariance(f64),

    #[error("estimator denominator is numerically zero ({0})")]
    NonInvertible(f64),

    #[error("test inversion failed: {0}")]
    Inversion(String),

    #[error("learner failed on fold {fold} ({nuisance}): {source}")]
    Fold {
        fold: usize,
        nuisance: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("every stack member failed: {}", .0.join("; "))]
    StackFailed(Vec<String>),

    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures caused by the data or numerics rather than by invalid
    /// configuration or input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::DegenerateVariance(_)
            | Error::NonInvertible(_)
            | Error::Inversion(_)
            | Error::StackFailed(_)
            | Error::Experiment(_) => true,
            Error::Fold { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
