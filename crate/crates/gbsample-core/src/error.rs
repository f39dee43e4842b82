use alloc::string::String;
use core::fmt;

/// Errors surfaced by the numeric core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied value violated a precondition.
    InvalidInput(String),
    /// Class label outside `[0, dim)`.
    LabelOutOfRange { label: usize, dim: usize },
    /// Two containers that must agree in length did not.
    DimensionMismatch { expected: usize, got: usize },
    /// A non-finite value appeared where finite reals are required.
    NonFinite(&'static str),
    /// The linear system has no unique solution.
    SingularSystem,
    /// An internal invariant was violated; indicates a bug.
    Internal(&'static str),
    /// Failed to parse a text matrix dump.
    Parse(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::LabelOutOfRange { label, dim } => {
                write!(f, "label {label} out of range for {dim} classes")
            }
            Error::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
            Error::SingularSystem => write!(f, "linear system is singular"),
            Error::Internal(what) => write!(f, "internal invariant violated: {what}"),
            Error::Parse(msg) => write!(f, "parse error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
