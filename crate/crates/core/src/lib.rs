//! Numerical laboratory for studying how neural networks extrapolate.
//!
//! The crate trains small MLPs and message-passing GNNs with hand-written
//! backpropagation, solves two-layer ReLU NTK kernel regression in closed form,
//! generates synthetic regression, graph and n-body datasets, and measures
//! out-of-distribution behavior.

// `!(x > 0.0)` also rejects NaN; index loops read better in the numeric kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diagnostics;
mod error;
pub mod gnn;
pub mod graphgen;
pub mod mlp;
pub mod nbody;
pub mod ntk;
pub mod numerics;
pub mod synth;

pub use error::{Error, Result};
