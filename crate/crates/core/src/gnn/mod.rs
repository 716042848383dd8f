//! Message-passing GNN `h_u <- AGG_{v in N(u)} MLP(h_u, h_v, w_uv)` with sum, min or
//! max aggregation and sum, min, max or per-node readout.
//!
//! Graphs in a batch form one disjoint union. The first message layer is evaluated
//! per node (its weight splits into receiver, sender and edge blocks) and identical
//! messages are computed once. Sums use a canonical order so graph-level outputs
//! are bitwise invariant to node relabeling.

mod experiments;
mod model;
mod train;

pub use experiments::{
    max_degree_dataset, run_max_degree_experiment, run_shortest_path_experiment, shortest_path_dataset,
    write_results_csv, GnnRunResult, MaxDegreeSetup, ShortestPathSetup,
};
pub use model::{gnn_grad, hand_wired_max_degree, Aggregation, GnnConfig, GnnGradients, GnnModel, GraphBatch, Readout};
pub use train::{gnn_mse, gnn_predict, gnn_train, GraphExample};
