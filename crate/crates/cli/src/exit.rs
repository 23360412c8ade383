use std::fmt;

use prefaudit_core::Error;

/// A failed run and the exit code it maps to.
#[derive(Debug)]
pub enum Exit {
    /// Bad flags, settings or parameter values: exit 1.
    Usage(String),
    /// Input data that cannot be loaded or does not support the analysis: exit 2.
    Data(String),
    /// Anything else that went wrong while running: exit 3.
    Runtime(String),
}

pub type Outcome<T> = Result<T, Exit>;

impl Exit {
    pub fn code(&self) -> i32 {
        match self {
            Exit::Usage(_) => 1,
            Exit::Data(_) => 2,
            Exit::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for Exit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, msg) = match self {
            Exit::Usage(m) => ("usage error", m),
            Exit::Data(m) => ("data error", m),
            Exit::Runtime(m) => ("error", m),
        };
        write!(f, "{kind}: {msg}")
    }
}

impl From<Error> for Exit {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidParameter(_) | Error::Infeasible(_) => Exit::Usage(msg),
            Error::Io { .. } => Exit::Data(msg),
            e if e.is_data_error() => Exit::Data(msg),
            _ => Exit::Runtime(msg),
        }
    }
}

pub fn runtime(e: impl fmt::Display) -> Exit {
    Exit::Runtime(e.to_string())
}
