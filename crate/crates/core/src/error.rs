use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} = {value} is out of bounds (limit {limit})")]
    Bounds {
        what: &'static str,
        value: i64,
        limit: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("transform error: {0}")]
    Transform(String),

    #[error("wrong batch type: {0}")]
    BatchType(String),

    #[error("unknown environment `{0}`")]
    UnknownEnv(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the CLI: 2 for configuration/input problems,
    /// 3 for numeric failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Usage(_)
            | Error::Parse { .. }
            | Error::Schema(_)
            | Error::UnknownEnv(_)
            | Error::Transform(_)
            | Error::BatchType(_)
            | Error::Dimension { .. }
            | Error::Bounds { .. }
            | Error::Empty(_) => 2,
            Error::Numeric(_) | Error::Diverged { .. } => 3,
            Error::Io(_) | Error::Json(_) => 1,
        }
    }
}
