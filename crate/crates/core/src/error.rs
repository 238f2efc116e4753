//! Error type shared across the toolkit.

use std::fmt;
use std::io;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// Malformed input data (TSV, config file, checkpoint container).
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    /// Tensor shapes do not conform to an operation.
    Shape {
        op: &'static str,
        detail: String,
    },
    /// Caller violated an operation contract.
    Usage(String),
    /// Unknown character/tag/language id.
    Vocab(String),
    /// Non-finite value where a finite one is required.
    Numeric(String),
    Io(io::Error),
}

impl Error {
    pub fn usage(msg: impl Into<String>) -> Error {
        Error::Usage(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Error {
        Error::Numeric(msg.into())
    }

    pub fn parse(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Parse { path, line, msg } => {
                if *line == 0 {
                    write!(f, "{path}: {msg}")
                } else {
                    write!(f, "{path}:{line}: {msg}")
                }
            }
            Error::Shape { op, detail } => write!(f, "shape error in {op}: {detail}"),
            Error::Usage(msg) => write!(f, "usage error: {msg}"),
            Error::Vocab(msg) => write!(f, "vocabulary error: {msg}"),
            Error::Numeric(msg) => write!(f, "numeric error: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Error::Io(e)
    }
}
