use thiserror::Error;

/// Everything that can go wrong between loading data and reporting a decision.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("quadrature did not converge: change {change:e} exceeds tolerance {tol:e}")]
    QuadratureNotConverged { change: f64, tol: f64 },

    #[error("error characteristic function is degenerate at t = {t} (|value| = {value:e})")]
    DegenerateCf { t: f64, value: f64 },

    #[error("moment order {0} is not supported (maximum is 2)")]
    UnsupportedOrder(usize),

    #[error("variance must be positive, got {0}")]
    NonPositiveVariance(f64),

    #[error("replicate set is empty or too small (need at least 2 differences)")]
    EmptyReplicates,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid error model: {0}")]
    InvalidErrorModel(String),

    #[error("corrected moment matrix is singular or not positive")]
    NonInvertibleCorrectedMoments,

    #[error("variance estimate is negative ({0:e})")]
    NegativeVarianceEstimate(f64),

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("invalid frequency grid: {0}")]
    InvalidGrid(String),

    #[error("invalid bandwidth {0}")]
    InvalidBandwidth(f64),

    #[error("{replicates} bootstrap replicates are too few for alpha = {alpha}")]
    InsufficientReplicates { replicates: usize, alpha: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("perturbed characteristic function hit its floor {attempts} times in a row")]
    PerturbationFailed { attempts: usize },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("non-numeric or non-finite cell at row {row}, column `{col}`")]
    NonNumericCell { row: usize, col: String },

    #[error("too few rows: {0} (need at least 5)")]
    TooFewRows(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Attach the pipeline stage that produced this error.
    pub fn at(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, with stage wrappers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    /// Configuration and input problems, as opposed to numerical failures.
    pub fn is_config(&self) -> bool {
        matches!(
            self.root(),
            Error::Config(_)
                | Error::Io(_)
                | Error::MissingColumn(_)
                | Error::NonNumericCell { .. }
                | Error::TooFewRows(_)
                | Error::InvalidArgument(_)
                | Error::InvalidGrid(_)
                | Error::InvalidBandwidth(_)
                | Error::InvalidSample(_)
                | Error::InsufficientReplicates { .. }
                | Error::NonPositiveVariance(_)
                | Error::InvalidErrorModel(_)
                | Error::EmptyReplicates
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
