//! Exit codes and the error type every command returns.

use std::fmt;

use spectail::Error;

pub const OK: u8 = 0;
pub const ASSERTION: u8 = 1;
pub const IO: u8 = 2;
pub const DIMENSION: u8 = 3;
pub const INVALID: u8 = 4;

pub const EXIT_CODES_HELP: &str = "\
Exit codes:
  0  success
  1  verification assertion failed
  2  I/O or image decode error
  3  image dimension or size error
  4  invalid input (flags, manifest, configuration)

Environment:
  SPECTAIL_THREADS  maximum number of worker threads";

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new(IO, message)
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(INVALID, message)
    }
}

pub fn code_for(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Decode { .. } => IO,
        Error::Dimension(_) | Error::Size { .. } => DIMENSION,
        Error::Numeric(_) => ASSERTION,
        Error::Domain(_)
        | Error::Fit(_)
        | Error::Precondition(_)
        | Error::Config(_)
        | Error::Data(_) => INVALID,
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self::new(code_for(&e), e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}
