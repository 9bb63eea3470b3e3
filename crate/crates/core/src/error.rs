use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown facility index {0}")]
    UnknownFacility(usize),

    #[error("unknown client index {0}")]
    UnknownClient(usize),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("instance too large for {what}: {size} exceeds cap {cap}")]
    SizeCap {
        what: &'static str,
        size: usize,
        cap: usize,
    },

    #[error("lower bound is zero, relative gap undefined")]
    UndefinedGap,

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
