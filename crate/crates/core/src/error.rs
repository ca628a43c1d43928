use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller violated an operation's preconditions (shapes, ranges, layers).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint adapter format error: {0}")]
    AdapterFormat(String),

    #[error("layout incomplete: missing {component} evidence")]
    LayoutIncomplete { component: &'static str },

    #[error("bank corruption in asset `{asset}`: {reason}")]
    Corruption { asset: String, reason: String },

    #[error("unsupported manifest version {0}")]
    Version(u32),

    /// Edit-script schema violation; `pointer` is a JSON pointer into the script.
    #[error("parse error at {pointer}: {message}")]
    Parse { pointer: String, message: String },

    #[error("unknown object `{0}`")]
    UnknownObject(String),

    #[error("execution failed at layer {layer} (object `{object}`): {source}")]
    Execution {
        layer: usize,
        object: String,
        #[source]
        source: Box<Error>,
    },

    #[error("image codec error: {0}")]
    Codec(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            pointer: pointer.into(),
            message: message.into(),
        }
    }

    /// True for errors that originate in reading an edit script rather than running it.
    pub fn is_parse_error(&self) -> bool {
        matches!(self, Error::Parse { .. } | Error::UnknownObject(_))
    }
}
