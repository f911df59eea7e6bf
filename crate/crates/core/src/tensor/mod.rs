//! Dense double-precision matrices, tape-based reverse-mode differentiation,
//! Adam and a finite-difference gradient checker.

mod adam;
mod checkpoint;
mod dense;
mod gradcheck;
mod params;
mod tape;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, MomentRecord, OptimizerState, ParamRecord, CHECKPOINT_FORMAT_VERSION};
pub use dense::Tensor;
pub use gradcheck::{grad_check, relative_error, GradCheckConfig, GradCheckReport};
pub use params::{uniform, xavier, Gradients, Param, ParamId, ParamStore};
pub use tape::{Axis, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: [usize; 2],
        right: [usize; 2],
    },
    #[error("{op}: index {index} out of range (bound {bound})")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("backward needs a 1x1 loss, got shape {0:?}")]
    NonScalarLoss([usize; 2]),
    #[error("parameter {0} has no gradient")]
    MissingGrad(String),
    #[error("duplicate parameter name {0}")]
    DuplicateParam(String),
    #[error("unknown parameter {0}")]
    UnknownParam(String),
    #[error("parameter {0} holds non-finite values")]
    NonFinite(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{0}")]
    InvalidArgument(String),
}
