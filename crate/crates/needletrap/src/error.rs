use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or operation was handed a value violating its contract.
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// Interpolation query outside the tabulated range; extrapolation is not
    /// offered for efficiency-factor tables.
    #[error("query {x} outside table range [{min}, {max}]")]
    TableRange { x: f64, min: f64, max: f64 },

    /// Fixed-step monodromy integration failed its Richardson consistency
    /// check at the requested tolerance.
    #[error("monodromy integration tolerance failure: {0}")]
    IntegrationTolerance(String),

    /// Floquet coefficient truncation too small for the tail-decay invariant.
    #[error(
        "floquet truncation N={n} leaves tail ratio {tail:.3e} above {limit:.3e}; increase N"
    )]
    TruncationTooSmall { n: usize, tail: f64, limit: f64 },

    /// Time series too short for the requested operation.
    #[error("series too short: {0}")]
    SeriesTooShort(String),

    /// No spectral peak rises above the detection threshold.
    #[error("no peak above {factor}x median background in the search window")]
    NoPeak { factor: f64 },

    /// More than one comparable peak in the search window.
    #[error("multiple comparable peaks in the search window ({0})")]
    AmbiguousPeak(String),

    /// Iterative fit exhausted its budget without converging.
    #[error("fit did not converge within {0} iterations")]
    NonConvergence(usize),

    /// Every evaluated operating point of a model was Mathieu-unstable.
    #[error("model is unstable over the entire evaluated region")]
    AllUnstable,

    /// CSV parse failure with file/line context.
    #[error("{path}:{line}: {reason}")]
    CsvParse {
        path: String,
        line: u64,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
