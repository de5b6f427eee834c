use alloc::string::String;
use alloc::vec::Vec;

/// Errors produced by the core engine, network, losses and geometry.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("{op}: invalid argument: {detail}")]
    InvalidArgument { op: &'static str, detail: String },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("backward already ran on this graph; call zero_grad first")]
    BackwardTwice,

    #[error("{0}: degenerate input")]
    Degenerate(&'static str),

    #[error("no valid correspondences to supervise the loss")]
    EmptySupervision,

    #[error("point maps to infinity under the homography")]
    PointAtInfinity,

    #[error("homography is not invertible (det = {0:e})")]
    Singular(f64),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("checkpoint: {0}")]
    Checkpoint(#[from] crate::checkpoint::CheckpointError),

    #[error("descriptor file: {0}")]
    DescriptorFile(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Shape { op, detail: detail.into() }
}

pub(crate) fn arg_err(op: &'static str, detail: impl Into<String>) -> Error {
    Error::InvalidArgument { op, detail: detail.into() }
}
