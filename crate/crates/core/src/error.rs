use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the library. [`Error::module`] names the
/// subsystem that produced the error so front ends can report it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient points: need at least {needed}, found {found}")]
    InsufficientPoints { needed: usize, found: usize },

    #[error("radius must be positive and finite, got {0}")]
    InvalidRadius(f64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("location {index} has a non-finite coordinate")]
    NonFiniteCoordinate { index: usize },

    #[error("duplicate locations at indices {first} and {second}")]
    DuplicateLocation { first: usize, second: usize },

    #[error("locations already partitioned: new point {index} coincides with point {existing}")]
    AlreadyPartitioned { index: usize, existing: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("location already observed: coincides with training point {index}")]
    LocationAlreadyObserved { index: usize },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("negative distance {0}")]
    NegativeDistance(f64),

    #[error("radius advisor precondition violated: {0}")]
    RadiusPrecondition(String),

    #[error("parent covariance block for row {row} is numerically singular (minimum eigenvalue {min_eigenvalue:.3e})")]
    SingularBlock { row: usize, min_eigenvalue: f64 },

    #[error("matrix of size {n} exceeds the diagnostic cap {cap}; dense routines are for diagnostics only")]
    DiagnosticCap { n: usize, cap: usize },

    #[error("ordering mismatch between factors")]
    OrderingMismatch,

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("posterior precision for beta is singular")]
    SingularPosterior,

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("MCMC iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("empty sample set")]
    EmptySamples,

    #[error("misaligned inputs: {0}")]
    Misaligned(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse: {0}")]
    Parse(String),
}

impl Error {
    /// Name of the subsystem the error originates from.
    pub fn module(&self) -> &'static str {
        match self {
            Error::InsufficientPoints { .. }
            | Error::InvalidRadius(_)
            | Error::DimensionMismatch { .. }
            | Error::NonFiniteCoordinate { .. }
            | Error::DuplicateLocation { .. } => "geometry",
            Error::AlreadyPartitioned { .. } | Error::InvalidPartition(_) => "partition",
            Error::LocationAlreadyObserved { .. } => "dag",
            Error::InvalidKernel(_) | Error::NegativeDistance(_) | Error::RadiusPrecondition(_) => {
                "kernels"
            }
            Error::SingularBlock { .. } | Error::DiagnosticCap { .. } => "precision",
            Error::CgNotConverged { .. }
            | Error::SingularPosterior
            | Error::InvalidPrior(_)
            | Error::InvalidData(_) => "inference",
            Error::Iteration { source, .. } => source.module(),
            Error::OrderingMismatch
            | Error::InvalidMatrix(_)
            | Error::EmptySamples
            | Error::Misaligned(_) => "metrics",
            Error::InvalidConfig(_) => "config",
            Error::Csv(_) | Error::Io(_) | Error::Parse(_) => "io",
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Error {
        Error::Iteration {
            iteration,
            source: Box::new(self),
        }
    }
}
