//! Minimal reverse-mode automatic differentiation over row-major 2-D matrices.
//!
//! Every value is an `ndarray::Array2`. Sequences are laid out time-major
//! (`rows = time`, `cols = channels`), so 1-D convolutions become a row
//! gather followed by a matmul. The graph is an append-only tape; calling
//! [`Graph::backward`] walks it in reverse creation order.

mod graph;
pub mod nn;
pub mod optim;
mod params;
mod scalar;

pub use graph::{Gradients, Graph, Var};
pub use params::{ParamBuilder, ParamId, ParamStore};
pub use scalar::Scalar;

pub type Matrix<T> = ndarray::Array2<T>;

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("parameter `{name}` has shape {found:?}, expected {expected:?}")]
    ParamShape {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
}

pub type Result<T> = std::result::Result<T, TensorError>;
