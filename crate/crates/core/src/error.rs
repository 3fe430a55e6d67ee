use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// No core is registered under this name.
    #[error("unknown core `{0}`")]
    UnknownCore(String),

    #[error("unsupported configuration key `{key}` for core `{core}`")]
    UnknownConfigKey { core: String, key: String },

    #[error("invalid value `{value}` for configuration key `{key}` (allowed: {allowed})")]
    InvalidConfigValue {
        key: String,
        value: String,
        allowed: String,
    },

    /// A configuration file or parameter set failed validation.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was invoked in a state that does not permit it.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("incompatible state: expected {expected}, found {found}")]
    IncompatibleState { expected: String, found: String },

    #[error("corrupt state: {0}")]
    CorruptState(String),

    #[error("shaping requires state variable `{0}`")]
    MissingStateVar(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("normalization undefined: human reference {human} equals random mean {random}")]
    DegenerateNormalization { human: f64, random: f64 },

    #[error("model parse error at line {line}: {reason}")]
    ModelParse { line: usize, reason: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Errors caused by bad user-supplied configuration rather than by a
    /// failure while running.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::UnknownCore(_)
                | Error::UnknownConfigKey { .. }
                | Error::InvalidConfigValue { .. }
                | Error::Config(_)
                | Error::MissingStateVar(_)
        )
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
