use thiserror::Error;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;

/// Coarse error classification used for process exit codes: data errors map
/// to exit code 2, numerical errors to exit code 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("matrix not Hermitian (max |A - A\u{2020}| entry {dev:.3e})")]
    NotHermitian { dev: f64 },
    #[error("operator not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPositiveSemidefinite { min_eig: f64 },
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("parse error in {path} line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("embedded hash does not match recomputed hash for {path}")]
    HashMismatch { path: String },
    #[error("event stream is not sorted by timestamp")]
    UnsortedEvents,
    #[error("background windows overlap the coincidence window")]
    OverlappingWindows,
    #[error("measurement effects do not span the operator space")]
    IncompleteEffectSpan,
    #[error("total counts are zero")]
    ZeroTotalCounts,
    #[error("no count records supplied")]
    EmptyRecords,
    #[error("no posterior samples supplied")]
    EmptySamples,
    #[error("no coincidence peak above background")]
    NoCoincidencePeak,
    #[error("no dominant fringe frequency in pattern")]
    NoFringePeak,
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("did not converge: {0}")]
    NonConvergence(String),
    #[error("coherence c = 0: correction undefined")]
    ZeroCoherence,
}

impl Error {
    /// Maps the error to its exit-code class.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::NoCoincidencePeak
            | Error::NoFringePeak
            | Error::DegenerateFit(_)
            | Error::NonConvergence(_)
            | Error::ZeroCoherence => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }
}
