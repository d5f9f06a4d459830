use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("chain is empty")]
    EmptyChain,
    #[error("illegal action by player {player} in round {round}: {reason}")]
    IllegalAction {
        player: usize,
        round: u32,
        reason: String,
    },
    #[error("game is not over: round {round} <= {rounds}")]
    GameNotOver { round: u32, rounds: u32 },
    #[error("instance too large: requires {required} leaves, limit {limit}")]
    InstanceTooLarge { required: f64, limit: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unknown strategy: {0}")]
    UnknownStrategy(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("empty input")]
    EmptyInput,
    #[error("conflict violation: {0}")]
    ConflictViolation(String),
    #[error("condition violation: {0}")]
    ConditionViolation(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
