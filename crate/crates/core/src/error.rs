use std::path::PathBuf;

use crate::pnp::PoseEstimate;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Error kinds for every pipeline stage.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}:{line}: parse error: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}:{line}: schema error: {message}")]
    Schema { path: String, line: usize, message: String },

    #[error("unknown marker id {0}")]
    UnknownMarkerId(u32),
    #[error("insufficient points: need at least {need}, got {got}")]
    InsufficientPoints { need: usize, got: usize },
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("refinement did not converge after {} iterations", .0.iterations)]
    NoConvergence(Box<PoseEstimate>),

    #[error("invalid filter spec: {0}")]
    InvalidSpec(String),
    #[error("empty input")]
    EmptyInput,
    #[error("non-uniform sampling: jitter {jitter} s exceeds {limit} s")]
    NonUniformSampling { jitter: f64, limit: f64 },
    #[error("too few samples: need at least {need}, got {got}")]
    TooFewSamples { need: usize, got: usize },

    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("too few frames: need at least {need}, got {got}")]
    TooFewFrames { need: usize, got: usize },

    #[error("sample {index} at t={t} leaves the room: {detail}")]
    OutOfRoom { index: usize, t: f64, detail: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Wraps the error with the name of the pipeline stage that raised it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage { stage, source: Box::new(self) }
    }

    /// Innermost error, skipping stage attribution.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}
