//! Tensor arithmetic and reverse-mode autodiff.

mod graph;
mod tensor;

pub use graph::{matmul, ElementwiseKind, Gradients, Graph, ReduceKind, Var};
pub use tensor::{broadcast_shape, Tensor};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("shapes {lhs:?} and {rhs:?} cannot be broadcast together")]
    Broadcast { lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("matmul dimension mismatch: lhs {lhs:?}, rhs {rhs:?}")]
    MatMul { lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("axis {axis} out of range for rank {ndim}")]
    Axis { axis: usize, ndim: usize },
    #[error("invalid permutation {axes:?} for rank {ndim}")]
    Permutation { axes: Vec<usize>, ndim: usize },
    #[error("cannot reshape {from:?} into {to:?}")]
    Reshape { from: Vec<usize>, to: Vec<usize> },
    #[error("slice {start}..{end} out of range for axis of length {dim}")]
    SliceRange { start: usize, end: usize, dim: usize },
    #[error("cannot concatenate shapes {shapes:?} along axis {axis}")]
    Concat { shapes: Vec<Vec<usize>>, axis: usize },
    #[error("concat of zero tensors")]
    EmptyConcat,
    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },
    #[error("reduction over empty axis {axis}")]
    EmptyReduction { axis: usize },
    #[error("dropout rate {rate} outside [0, 1)")]
    DropoutRate { rate: f64 },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
}
