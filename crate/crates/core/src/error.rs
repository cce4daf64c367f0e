use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: bad magic {found:?}, expected {expected:?}")]
    BadMagic { path: PathBuf, expected: [u8; 4], found: [u8; 4] },

    #[error("{path}: unsupported format version {found} (this build reads version {expected})")]
    VersionMismatch { path: PathBuf, expected: u16, found: u16 },

    #[error("{path}: truncated file, expected {expected} bytes but found {found}")]
    Truncated { path: PathBuf, expected: u64, found: u64 },

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("{path}:{line}: unknown label {name:?}")]
    UnknownLabel { path: PathBuf, line: usize, name: String },

    #[error("{path}: label file is empty")]
    EmptyLabels { path: PathBuf },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("sampling: {0}")]
    Sampling(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("loss became non-finite at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("no feasible monotone path: {frames} frames cannot cover {clusters} clusters")]
    InfeasibleDecode { frames: usize, clusters: usize },

    #[error("evaluation: {0}")]
    Evaluation(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by the numerics rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::Divergence { .. })
    }
}
