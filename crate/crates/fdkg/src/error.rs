use std::path::{Path, PathBuf};

pub type Result<T> = std::result::Result<T, FdkgError>;

#[derive(Debug, thiserror::Error)]
pub enum FdkgError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("format error: {0}")]
    Format(String),
    #[error("{context}: {source}")]
    Core { context: String, source: fdkg_core::Error },
}

impl FdkgError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        FdkgError::Io { path: path.to_path_buf(), source }
    }

    pub fn format(msg: impl Into<String>) -> Self {
        FdkgError::Format(msg.into())
    }

    /// Process exit status: 2 for configuration problems, 3 for numeric
    /// failures, 1 for everything else (I/O, malformed files).
    pub fn exit_code(&self) -> i32 {
        use fdkg_core::Error as E;
        match self {
            FdkgError::Config(_) => 2,
            FdkgError::Core { source, .. } => match source {
                E::Config(_) | E::InsufficientData { .. } | E::Empty(_) => 2,
                E::NonFinite(_) | E::Domain(_) | E::Dimension { .. } => 3,
            },
            FdkgError::Io { .. } | FdkgError::Format(_) => 1,
        }
    }
}

impl From<fdkg_core::Error> for FdkgError {
    fn from(source: fdkg_core::Error) -> Self {
        match source {
            fdkg_core::Error::Config(m) => FdkgError::Config(m),
            source => FdkgError::Core { context: "computation failed".into(), source },
        }
    }
}

/// Attaches a location (e.g. the experiment cell) to core errors.
pub trait Context<T> {
    fn context(self, ctx: impl FnOnce() -> String) -> Result<T>;
}

impl<T> Context<T> for std::result::Result<T, fdkg_core::Error> {
    fn context(self, ctx: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| match source {
            fdkg_core::Error::Config(m) => FdkgError::Config(format!("{}: {m}", ctx())),
            source => FdkgError::Core { context: ctx(), source },
        })
    }
}
