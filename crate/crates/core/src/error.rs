use std::path::PathBuf;

/// Errors produced by the relighting pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("light component is identically zero")]
    NoLight,

    #[error("degenerate color: channel {channel} of the source light color is zero")]
    DegenerateColor { channel: usize },

    #[error("degenerate exposure{}: {reason}", frame.map(|i| format!(" in frame {i}")).unwrap_or_default())]
    DegenerateExposure { frame: Option<usize>, reason: String },

    #[error("relative error undefined: positive residual is zero while negative residual is not")]
    UndefinedRatio,

    #[error("sampler: {0}")]
    Sampler(String),

    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error("records do not reconcile: {} orphan id(s): {}", orphans.len(), orphans.join(", "))]
    Reconciliation { orphans: Vec<String> },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn format(offset: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }

    /// Wraps the error with the path it concerns.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// Strips any file context and returns the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::File { source, .. } => source.root(),
            other => other,
        }
    }
}
