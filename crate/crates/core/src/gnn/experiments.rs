use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{Aggregation, GnnConfig, GnnModel, Readout};
use super::train::{gnn_mse, gnn_predict, gnn_train, GraphExample};
use crate::diagnostics::mape;
use crate::graphgen::{
    attach_features, sample_graph, sample_st_pair, shortest_path_bf, FeatureScheme, Graph, GraphFamily, MAX_ST_HOPS,
    SP_EXTRAP_WEIGHT_HI, SP_TRAIN_WEIGHT_HI,
};
use crate::mlp::{Activation, InitScheme, TrainConfig};
use crate::numerics::RandomSource;
use crate::{Error, Result};

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnRunResult {
    pub task: String,
    pub train_family: String,
    pub aggregation: String,
    pub readout: String,
    pub seed: u64,
    pub split: String,
    pub mse: f64,
    pub mape: f64,
    pub epochs_to_best: usize,
}

pub fn write_results_csv(path: &Path, rows: &[GnnRunResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn scalar_mape(model: &GnnModel, set: &[GraphExample]) -> Result<f64> {
    let graphs: Vec<&Graph> = set.iter().map(|e| &e.graph).collect();
    let preds: Vec<f64> = gnn_predict(model, &graphs)?.iter().map(|m| m.get(0, 0)).collect();
    let labels: Vec<f64> = set.iter().map(|e| e.target.get(0, 0)).collect();
    mape(&preds, &labels)
}

fn feature_width(scheme: FeatureScheme) -> usize {
    match scheme {
        FeatureScheme::Identical => 1,
        _ => 3,
    }
}

/// Graphs labeled with their max degree.
pub fn max_degree_dataset(
    family: GraphFamily,
    count: usize,
    nodes: (usize, usize),
    features: FeatureScheme,
    rng: &mut RandomSource,
) -> Result<Vec<GraphExample>> {
    if matches!(features, FeatureScheme::ShortestPath { .. }) {
        return Err(Error::InvalidArgument("max degree uses identical or spurious features".into()));
    }
    (0..count)
        .map(|_| {
            let g = sample_graph(family, nodes, rng)?;
            let g = attach_features(&g, features, rng)?;
            let y = g.degrees().into_iter().max().unwrap_or(0) as f64;
            Ok(GraphExample::scalar(g, y))
        })
        .collect()
}

const SP_PAIR_ATTEMPTS: usize = 100;

/// Graphs with source/target flags, random weights on `[1, weight_hi]` and the shortest
/// s-t distance as label. Pairs are at most three hops apart, and the weighted shortest
/// path itself must use at most three edges so that three rounds can express it.
pub fn shortest_path_dataset(
    family: GraphFamily,
    count: usize,
    nodes: (usize, usize),
    weight_hi: f64,
    rng: &mut RandomSource,
) -> Result<Vec<GraphExample>> {
    let mut out = Vec::with_capacity(count);
    'graph: while out.len() < count {
        let base = sample_graph(family, nodes, rng)?;
        let n = base.num_nodes();
        for _ in 0..SP_PAIR_ATTEMPTS {
            let mut g = base.clone();
            let (s, t) = sample_st_pair(&g, rng)?;
            g.source = Some(s);
            g.target = Some(t);
            let g = attach_features(&g, FeatureScheme::ShortestPath { weight_hi }, rng)?;
            let full = shortest_path_bf(&g, s, t, n - 1)?.value();
            let short = shortest_path_bf(&g, s, t, MAX_ST_HOPS)?.value();
            if let (Some(d), Some(d3)) = (full, short) {
                if d == d3 {
                    out.push(GraphExample::scalar(g, d));
                    continue 'graph;
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaxDegreeSetup {
    pub train_family: GraphFamily,
    pub aggregation: Aggregation,
    pub readout: Readout,
    pub features: FeatureScheme,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub train_nodes: (usize, usize),
    pub test_family: GraphFamily,
    pub test_nodes: (usize, usize),
    pub hidden: usize,
    pub message_depth: usize,
    pub readout_depth: usize,
    pub train: TrainConfig,
}

impl Default for MaxDegreeSetup {
    fn default() -> Self {
        Self {
            train_family: GraphFamily::General,
            aggregation: Aggregation::Sum,
            readout: Readout::Max,
            features: FeatureScheme::Identical,
            n_train: 1000,
            n_val: 200,
            n_test: 200,
            train_nodes: (20, 30),
            test_family: GraphFamily::General,
            test_nodes: (50, 100),
            hidden: 64,
            message_depth: 2,
            readout_depth: 1,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShortestPathSetup {
    pub train_family: GraphFamily,
    pub aggregation: Aggregation,
    /// Test weights drawn from `[1, 10]` instead of the training range `[1, 5]`.
    pub weight_extrapolation: bool,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub train_nodes: (usize, usize),
    pub test_family: GraphFamily,
    pub test_nodes: (usize, usize),
    pub iterations: usize,
    pub hidden: usize,
    pub message_depth: usize,
    pub readout_depth: usize,
    pub train: TrainConfig,
}

impl Default for ShortestPathSetup {
    fn default() -> Self {
        Self {
            train_family: GraphFamily::General,
            aggregation: Aggregation::Min,
            weight_extrapolation: false,
            n_train: 1000,
            n_val: 200,
            n_test: 200,
            train_nodes: (20, 40),
            test_family: GraphFamily::General,
            test_nodes: (50, 70),
            iterations: 3,
            hidden: 64,
            message_depth: 2,
            readout_depth: 1,
            train: TrainConfig::default(),
        }
    }
}

fn check_counts(n_train: usize, n_val: usize, n_test: usize, hidden: usize) -> Result<()> {
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::InvalidArgument("every split needs at least one graph".into()));
    }
    if hidden == 0 {
        return Err(Error::InvalidArgument("hidden width must be >= 1".into()));
    }
    Ok(())
}

impl MaxDegreeSetup {
    pub fn validate(&self) -> Result<()> {
        check_counts(self.n_train, self.n_val, self.n_test, self.hidden)?;
        self.train_family.check_sizes(self.train_nodes)?;
        self.test_family.check_sizes(self.test_nodes)?;
        if matches!(self.features, FeatureScheme::ShortestPath { .. }) {
            return Err(Error::InvalidArgument("max degree uses identical or spurious features".into()));
        }
        self.train.validate()
    }
}

impl ShortestPathSetup {
    pub fn validate(&self) -> Result<()> {
        check_counts(self.n_train, self.n_val, self.n_test, self.hidden)?;
        self.train_family.check_sizes(self.train_nodes)?;
        self.test_family.check_sizes(self.test_nodes)?;
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("shortest path needs at least one iteration".into()));
        }
        self.train.validate()
    }
}

#[allow(clippy::too_many_arguments)]
fn split_rows(
    task: &str,
    family: GraphFamily,
    aggregation: Aggregation,
    readout: Readout,
    seed: u64,
    model: &GnnModel,
    epochs_to_best: usize,
    splits: &[(&str, &[GraphExample])],
) -> Result<Vec<GnnRunResult>> {
    splits
        .iter()
        .map(|(name, set)| {
            Ok(GnnRunResult {
                task: task.to_string(),
                train_family: family.name(),
                aggregation: aggregation.name().to_string(),
                readout: readout.name().to_string(),
                seed,
                split: name.to_string(),
                mse: gnn_mse(model, set)?,
                mape: scalar_mape(model, set)?,
                epochs_to_best,
            })
        })
        .collect()
}

/// Trains on the setup's family and reports `interpolation` (held-out graphs from the
/// training distribution) and `extrapolation` (larger test-family graphs) per seed.
pub fn run_max_degree_experiment(setup: &MaxDegreeSetup, seeds: &[u64]) -> Result<Vec<GnnRunResult>> {
    setup.validate()?;
    let per_seed: Vec<Vec<GnnRunResult>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = RandomSource::new(seed, "max-degree-data");
            let f = setup.features;
            let train = max_degree_dataset(setup.train_family, setup.n_train, setup.train_nodes, f, &mut rng)?;
            let val = max_degree_dataset(setup.train_family, setup.n_val, setup.train_nodes, f, &mut rng)?;
            let interp = max_degree_dataset(setup.train_family, setup.n_test, setup.train_nodes, f, &mut rng)?;
            let extrap = max_degree_dataset(setup.test_family, setup.n_test, setup.test_nodes, f, &mut rng)?;
            let config = GnnConfig {
                iterations: 1,
                aggregation: setup.aggregation,
                readout: setup.readout,
                hidden: setup.hidden,
                message_depth: setup.message_depth,
                readout_depth: setup.readout_depth,
                node_dim: feature_width(f),
                edge_dim: 0,
                output_dim: 1,
                activation: Activation::Relu,
                init: InitScheme::Default,
                use_bias: true,
            };
            let model = GnnModel::new(config, seed)?;
            let cfg = TrainConfig { seed, ..setup.train.clone() };
            let (best, hist) = gnn_train(&model, &train, &val, &cfg)?;
            split_rows(
                "max_degree",
                setup.train_family,
                setup.aggregation,
                setup.readout,
                seed,
                &best,
                hist.best_epoch,
                &[("interpolation", &interp), ("extrapolation", &extrap)],
            )
        })
        .collect::<Result<_>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

/// Min readout, configurable aggregation. Splits: `interpolation`, `extrapolation`
/// (larger test-family graphs, training weights) and, with `weight_extrapolation`,
/// `weight_extrapolation` (larger graphs with weights on `[1, 10]`).
pub fn run_shortest_path_experiment(setup: &ShortestPathSetup, seeds: &[u64]) -> Result<Vec<GnnRunResult>> {
    setup.validate()?;
    let per_seed: Vec<Vec<GnnRunResult>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = RandomSource::new(seed, "shortest-path-data");
            let (fam, nodes) = (setup.train_family, setup.train_nodes);
            let train = shortest_path_dataset(fam, setup.n_train, nodes, SP_TRAIN_WEIGHT_HI, &mut rng)?;
            let val = shortest_path_dataset(fam, setup.n_val, nodes, SP_TRAIN_WEIGHT_HI, &mut rng)?;
            let interp = shortest_path_dataset(fam, setup.n_test, nodes, SP_TRAIN_WEIGHT_HI, &mut rng)?;
            let extrap =
                shortest_path_dataset(setup.test_family, setup.n_test, setup.test_nodes, SP_TRAIN_WEIGHT_HI, &mut rng)?;
            let weights = if setup.weight_extrapolation {
                Some(shortest_path_dataset(
                    setup.test_family,
                    setup.n_test,
                    setup.test_nodes,
                    SP_EXTRAP_WEIGHT_HI,
                    &mut rng,
                )?)
            } else {
                None
            };
            let config = GnnConfig {
                iterations: setup.iterations,
                aggregation: setup.aggregation,
                readout: Readout::Min,
                hidden: setup.hidden,
                message_depth: setup.message_depth,
                readout_depth: setup.readout_depth,
                node_dim: 3,
                edge_dim: 1,
                output_dim: 1,
                activation: Activation::Relu,
                init: InitScheme::Default,
                use_bias: true,
            };
            let model = GnnModel::new(config, seed)?;
            let cfg = TrainConfig { seed, ..setup.train.clone() };
            let (best, hist) = gnn_train(&model, &train, &val, &cfg)?;
            let mut splits: Vec<(&str, &[GraphExample])> = vec![("interpolation", &interp), ("extrapolation", &extrap)];
            if let Some(w) = &weights {
                splits.push(("weight_extrapolation", w));
            }
            split_rows(
                "shortest_path",
                setup.train_family,
                setup.aggregation,
                Readout::Min,
                seed,
                &best,
                hist.best_epoch,
                &splits,
            )
        })
        .collect::<Result<_>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}
