use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

/// Errors produced by the numeric core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes do not conform for the named operation.
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// A caller violated an operation contract (bad index, wrong mode, ...).
    Contract(String),
    /// Input data is structurally invalid (bad annotation, empty class, ...).
    Data(String),
    /// A specific annotation line failed to parse.
    Parse { line: usize, message: String },
    /// Training produced a non-finite loss or gradient.
    Train(String),
}

impl Error {
    pub fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn train(msg: impl Into<String>) -> Self {
        Error::Train(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, lhs, rhs } => {
                write!(f, "{op}: shape mismatch {lhs:?} vs {rhs:?}")
            }
            Error::Contract(m) => write!(f, "contract violation: {m}"),
            Error::Data(m) => write!(f, "data error: {m}"),
            Error::Parse { line, message } => write!(f, "line {line}: {message}"),
            Error::Train(m) => write!(f, "training error: {m}"),
        }
    }
}

impl core::error::Error for Error {}
