//! Dense tensors with tape-based reverse-mode differentiation.
//!
//! Operations on tensors attached to a [`Tape`] are recorded. Calling
//! [`Tape::grad`] or [`Tape::backward`] with `create_graph = true` records
//! the backward computation itself as ordinary operations, so gradients of
//! gradients are available. This is what lets a training loss be
//! differentiated through a memory write that is itself a gradient step.
//!
//! ```
//! use mnm::autodiff::{Tape, Tensor};
//!
//! let tape = Tape::<f64>::new();
//! let x = tape.var(Tensor::scalar(3.0));
//! let y = x.mul(&x).unwrap();
//! let dy = tape.grad(&y, &[&x], true).unwrap().remove(0).unwrap();
//! assert_eq!(dy.item(), 6.0);
//! let d2y = tape.grad(&dy, &[&x], false).unwrap().remove(0).unwrap();
//! assert_eq!(d2y.item(), 2.0);
//! ```
//!
//! There is no broadcasting: binary elementwise operations require equal
//! shapes, and shape adaptation goes through [`Tensor::expand`],
//! [`Tensor::fill`] or [`Tensor::scale_rows`].

pub(crate) mod kernels;
mod optim;
mod tape;
mod tensor;

use std::fmt::{Debug, Display};

use num_traits::{Float, NumAssign};

pub use optim::{clip_grad_norm, global_norm, AdamConfig, Gradients, Param, ParamStore};
pub use tape::{NodeId, Tape};
pub use tensor::{ElementwiseOp, Tensor};

/// Floating point element type: `f64` for gradient checks, `f32` for speed.
pub trait Real: Float + NumAssign + Debug + Display + Default + Send + Sync + std::iter::Sum + 'static {
    fn lit(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

impl Real for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("data length {len} does not match shape {shape:?}")]
    BadLength { len: usize, shape: Vec<usize> },
    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("tensor belongs to a different tape")]
    ForeignTape,
    #[error("tensor is not attached to a tape")]
    Detached,
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("invalid argument to {op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },
    #[error("no gradient supplied for parameter `{0}`")]
    MissingGradient(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
}
