use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// Pipeline stage an error was raised in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Forward,
    Augment,
    Backward,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Forward => "forward",
            Stage::Augment => "augmentation",
            Stage::Backward => "backward",
        })
    }
}

#[derive(Debug, Error)]
pub enum EfsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular potential: {0}")]
    Singularity(String),

    #[error("inner proximal iteration diverged (beta = {beta}) after {iteration} iterations")]
    Instability { beta: f64, iteration: usize },

    #[error("degenerate enclosure: all points coincide")]
    DegenerateEnclosure,

    #[error("unsupported dimension {0}: sphere sampling needs d >= 2")]
    UnsupportedDimension(usize),

    #[error("unsupported kernel: {0}")]
    UnsupportedKernel(String),

    #[error("index {index} out of range for {len} points")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("forward iteration {iteration}: {source}")]
    ForwardStep {
        iteration: usize,
        #[source]
        source: Box<EfsError>,
    },

    #[error("backward step j = {step}: {source}")]
    BackwardStep {
        step: usize,
        #[source]
        source: Box<EfsError>,
    },

    #[error("{stage} stage, sample {sample}: {source}")]
    Sample {
        stage: Stage,
        sample: usize,
        #[source]
        source: Box<EfsError>,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl EfsError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        EfsError::InvalidInput(msg.into())
    }

    /// Strips stage/iteration annotations.
    pub fn root(&self) -> &EfsError {
        match self {
            EfsError::ForwardStep { source, .. }
            | EfsError::BackwardStep { source, .. }
            | EfsError::Sample { source, .. } => source.root(),
            other => other,
        }
    }

    /// Singularities and divergence, as opposed to bad configuration or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            EfsError::Singularity(_) | EfsError::Instability { .. }
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self.root(), EfsError::Io { .. } | EfsError::Parse { .. })
    }
}

pub type Result<T, E = EfsError> = std::result::Result<T, E>;
