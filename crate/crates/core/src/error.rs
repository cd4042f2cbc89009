use alloc::string::String;
use core::fmt;

use crate::lp::LpError;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A vector did not have the length the network or box expects.
    InputShape { expected: usize, found: usize },
    EmptyBatch,
    /// A value fell outside the domain an operation is defined on.
    Domain(String),
    Config(String),
    Lp(LpError),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InputShape { expected, found } => {
                write!(f, "input shape mismatch: expected length {expected}, found {found}")
            }
            Error::EmptyBatch => f.write_str("empty batch"),
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Lp(e) => write!(f, "lp solver: {e}"),
        }
    }
}

impl core::error::Error for Error {}

impl From<LpError> for Error {
    fn from(e: LpError) -> Self {
        Error::Lp(e)
    }
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::InputShape { expected, found })
    }
}
