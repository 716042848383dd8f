//! Feedforward networks with hand-written backpropagation, SGD/Adam training
//! with step decay, and best-validation-epoch model selection.
//!
//! Biases are on by default. Networks built with `use_bias = false` realize the
//! pure `W_L σ(... σ(W_1 x))` form, which is positively homogeneous under ReLU.

mod experiments;
mod model;
mod optim;
mod train;

pub use experiments::{
    geometry_name, run_direction_sweep, run_mlp_experiment, test_domain, train_mlp_setup, write_mlp_csv, MlpRunResult,
    MlpSetup, TargetPreset, TrainedMlp,
};
pub use model::{grad, mse, predict_batch, Activation, Dense, Gradients, InitScheme, MlpModel, Tape};
pub use optim::{Optimizer, OptimizerKind};
pub use train::{train, History, TrainConfig};

/// Desk-scale defaults: width 128, two layers.
pub const DEFAULT_WIDTH: usize = 128;
pub const DEFAULT_DEPTH: usize = 2;

/// Layer dimensions `[in, width x (depth-1), 1]` for a scalar regressor.
pub fn regressor_dims(input: usize, width: usize, depth: usize) -> Vec<usize> {
    let mut dims = vec![input];
    dims.extend(std::iter::repeat_n(width, depth.saturating_sub(1)));
    dims.push(1);
    dims
}
