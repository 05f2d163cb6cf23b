use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("binomial coefficient C({a}, {b}) overflows u128")]
    Overflow { a: i64, b: i64 },
    #[error("denominator C({n}, {k}) is zero")]
    ZeroDenominator { n: i64, k: i64 },
    #[error("invalid k = {k} for a group of n = {n} (need 1 <= k <= n)")]
    InvalidK { k: usize, n: usize },
    #[error("invalid count c = {c} for n = {n}")]
    InvalidCount { c: usize, n: usize },
    #[error("reward group must be non-empty")]
    EmptyGroup,
    #[error("reward #{index} = {value} lies outside [0, 1]")]
    RewardOutOfRange { index: usize, value: f64 },
    #[error("group of n = {n} is too small (need n >= {min})")]
    InsufficientGroup { n: usize, min: usize },
    #[error("leave-one-out baseline is undefined for k = {k} (need k >= 2)")]
    LooUndefined { k: usize },
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("oracle enumeration limited to n <= {max}, got n = {n}")]
    OracleTooLarge { n: usize, max: usize },
    #[error("clamp must be a positive finite number, got {0}")]
    InvalidClamp(f64),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid environment: {0}")]
    InvalidEnv(String),
    #[error("action index {index} out of range for {len} actions")]
    InvalidIndex { index: usize, len: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical failure at step {step}: {detail}")]
    NumericalFailure { step: usize, detail: String },
    #[error("report error: {0}")]
    Report(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(format!("malformed JSON: {e}"))
    }
}
