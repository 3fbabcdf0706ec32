//! Minimal reverse-mode automatic differentiation over dense tensors.
//!
//! Ops are methods on [`Tape`]; each returns a [`Var`] whose value is computed eagerly.
//! A recording tape keeps a closure per op so [`Tape::backward`] can walk the graph in
//! reverse creation order, which is a valid topological order by construction.

pub mod checkpoint;
pub mod kernels;
mod ops;
mod param;
mod real;
mod tape;
mod tensor;

pub use checkpoint::Checkpoint;
pub use ops::BatchStats;
pub use param::{Bound, ParamId, ParamStore, Parameter};
pub use real::Real;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

/// Slope used by every leaky ReLU in the models.
pub const LEAKY_SLOPE: f64 = 0.01;
