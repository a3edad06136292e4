use alloc::string::String;

/// Errors raised by the numerical core.
///
/// Variants split into two families: contract violations (bad shapes, bad
/// labels, bad configuration) and numeric/degenerate conditions (a matrix that
/// is not positive definite, a batch with no spread). [`Error::is_numeric`]
/// tells them apart; the command line maps them to different exit codes.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("label {label} out of range for {num_classes} classes")]
    InvalidLabel { label: usize, num_classes: usize },
    #[error("class {class} is missing or has fewer than {required} samples on one side")]
    MissingClass { class: usize, required: usize },
    #[error("modality {index} does not exist (model has {count})")]
    UnknownModality { index: usize, count: usize },
    #[error("degenerate batch: need at least 2 rows, got {rows}")]
    DegenerateBatch { rows: usize },
    #[error("degenerate matrix: {0}")]
    DegenerateMatrix(&'static str),
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    /// True for numeric or degenerate-input conditions, false for contract
    /// and usage errors.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::DegenerateBatch { .. }
                | Error::DegenerateMatrix(_)
                | Error::NotPositiveDefinite { .. }
                | Error::NonFinite(_)
                | Error::Numeric(_)
        )
    }
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! ensure {
    ($cond:expr, $err:expr) => {
        if !$cond {
            return Err($err);
        }
    };
}
pub(crate) use ensure;
