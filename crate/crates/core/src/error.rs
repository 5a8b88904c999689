use std::path::PathBuf;

/// Errors produced by identification, data handling and metric routines.
#[derive(Debug, thiserror::Error)]
pub enum FrsidError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("index {index} out of range (expected < {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("{what} is ill-conditioned (condition number {cond:.3e})")]
    IllConditioned { what: &'static str, cond: f64 },

    #[error(
        "input is not persistently exciting: R11 is singular (condition number {cond:.3e})"
    )]
    Excitation { cond: f64 },

    #[error("innovation factor is numerically singular (sigma_min/sigma_max = {ratio:.3e})")]
    NoiseDegenerate { ratio: f64 },

    #[error("model order is zero")]
    EmptyModel,

    #[error("unstable: {0}")]
    Unstable(String),

    #[error(
        "estimated footprint {estimated_bytes} bytes exceeds the memory cap of {cap_bytes} bytes"
    )]
    MemoryCap { estimated_bytes: u64, cap_bytes: u64 },

    #[error("subspace is undefined for a zero matrix")]
    UndefinedSubspace,

    #[error("parse error in {location}: {message}")]
    Parse { location: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<FrsidError>,
    },
}

impl FrsidError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FrsidError::Io { path: path.into(), source }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        FrsidError::Parse { location: location.into(), message: message.into() }
    }

    /// Strips any stage annotations and returns the underlying error.
    pub fn root(&self) -> &FrsidError {
        match self {
            FrsidError::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = FrsidError> = std::result::Result<T, E>;

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| FrsidError::Stage { stage, source: Box::new(e) })
    }
}
