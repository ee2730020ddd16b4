use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: {msg}")]
    Domain { op: &'static str, msg: String },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("non-finite gradient for parameter `{0}`; step refused")]
    NonFiniteGrad(String),

    #[error("non-finite activations after layer {layer} of the {net}")]
    NonFiniteActivation { net: &'static str, layer: usize },

    #[error("singular point at row {row}, coordinate {coord}: suffix norm {norm:e} below guard")]
    Singularity { row: usize, coord: usize, norm: f64 },

    #[error("no preferred direction: mean resultant length {0:e}")]
    NoPreferredDirection(f64),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("idx format error at byte {offset}: {msg}")]
    Idx { offset: usize, msg: String },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("content hash mismatch for {}: expected {expected}, got {actual}", .path.display())]
    HashMismatch {
        path: PathBuf,
        expected: String,
        actual: String,
    },

    #[error("dataset unavailable: {0}")]
    DataUnavailable(String),

    #[error("download of {url} failed: {msg}")]
    Download { url: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn domain(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Domain {
            op,
            msg: msg.into(),
        }
    }
}
