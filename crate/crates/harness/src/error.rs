use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// `position` is a byte offset for binary-capable formats and a 1-based
    /// line number for line-oriented ones, as named in `unit`.
    #[error("{context}: parse error at {unit} {position}: {message}")]
    Parse { context: String, unit: &'static str, position: usize, message: String },
    #[error("{context}: missing field `{field}`")]
    MissingField { context: String, field: String },
    #[error("{context}: unsupported element: {message}")]
    UnsupportedElement { context: String, message: String },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] pose_forge::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn parse_at_byte(context: impl Into<String>, offset: usize, message: impl Into<String>) -> Self {
        Self::Parse { context: context.into(), unit: "byte", position: offset, message: message.into() }
    }

    pub fn parse_at_line(context: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Self::Parse { context: context.into(), unit: "line", position: line, message: message.into() }
    }

    pub fn missing(context: impl Into<String>, field: impl Into<String>) -> Self {
        Self::MissingField { context: context.into(), field: field.into() }
    }

    /// Process exit status: 1 for I/O failures, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io { .. } => 1,
            _ => 2,
        }
    }
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| HarnessError::io(path, e))
}

pub(crate) fn write_file(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}
