use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("budget exceeded: {what} needs {needed}, limit {limit}")]
    Budget { what: String, needed: f64, limit: f64 },
    #[error("hyperplane is not admissible (det M_h = {det:e})")]
    Inadmissible { det: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("argument {0} is too close to a pole")]
    Pole(String),
    #[error("element is not coprime to the modulus")]
    NotCoprime,
    #[error("tail could not be certified: achieved {achieved:e}, requested {requested:e}")]
    Tail { achieved: f64, requested: f64 },
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn budget(what: impl Into<String>, needed: f64, limit: f64) -> Self {
        Error::Budget { what: what.into(), needed, limit }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Budget { .. } | Error::Tail { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
