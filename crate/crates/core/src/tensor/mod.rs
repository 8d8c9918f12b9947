//! Dense rank-2 tensors with reverse-mode differentiation, parameter
//! storage, initialization, gradient verification and Adam.

mod adam;
mod gradcheck;
mod init;
mod params;
mod scalar;
mod tape;
mod value;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{finite_diff_check, relative_error, GradCheckReport};
pub use init::{init_params, seeded_rng};
pub use params::{Bound, Checkpoint, ParamEntry, ParamId, ParamStore, CHECKPOINT_VERSION};
pub use scalar::{Scalar, LOG_FLOOR};
pub use tape::{Tape, Var};
pub use value::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: [usize; 2],
        rhs: [usize; 2],
    },
    #[error("data of length {len} does not fill shape {shape:?}")]
    BadLength { shape: [usize; 2], len: usize },
    #[error("{op}: index {index} out of range for {bound} rows")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("{op}: axis {axis} is not 0 or 1")]
    BadAxis { op: &'static str, axis: usize },
    #[error("{op}: no operands")]
    Empty { op: &'static str },
    #[error("{op}: segment offsets do not partition {rows} rows")]
    BadSegments { op: &'static str, rows: usize },
    #[error("backward needs a 1x1 root, got {shape:?}")]
    NonScalarRoot { shape: [usize; 2] },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
