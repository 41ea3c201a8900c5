use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Pipeline stage a failure originated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Load,
    Downsample,
    Standardize,
    Embed,
    Neighborhood,
    Fit,
    Transform,
    Classify,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Load => "load",
            Stage::Downsample => "downsample",
            Stage::Standardize => "standardize",
            Stage::Embed => "embed",
            Stage::Neighborhood => "neighborhood",
            Stage::Fit => "fit",
            Stage::Transform => "transform",
            Stage::Classify => "classify",
            Stage::Report => "report",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("matrix is numerically singular (pivot {pivot:e} at index {index}); increase regularization")]
    Singular { index: usize, pivot: f64 },

    #[error("Jacobi eigensolver did not converge after {0} sweeps")]
    NoConvergence(usize),

    #[error("negative edge weight {weight} on edge ({from}, {to})")]
    NegativeWeight { from: usize, to: usize, weight: f64 },

    #[error("neighborhood graph is disconnected; {} samples lie outside the largest component", dropped.len())]
    DisconnectedGraph { dropped: Vec<usize> },

    #[error("degenerate kernel: all centered-kernel eigenvalues are below 1e-12")]
    DegenerateKernel,

    #[error("autoencoder training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Process exit code: 2 config, 3 data, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) => 2,
            Error::Data(_) | Error::Io { .. } | Error::Parse { .. } => 3,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 4,
        }
    }

    pub(crate) fn at(self, stage: Stage) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Attaches a pipeline stage to any error in a `Result`.
pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
