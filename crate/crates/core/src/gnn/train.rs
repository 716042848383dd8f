use serde::{Deserialize, Serialize};

use super::model::{gnn_grad, GnnModel, Readout};
use crate::graphgen::Graph;
use crate::mlp::{History, Optimizer, TrainConfig};
use crate::numerics::{Matrix, RandomSource};
use crate::{Error, Result};

/// A graph with its target: `1 x out` for graph-level readouts, `n x out` for node-level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphExample {
    pub graph: Graph,
    pub target: Matrix,
}

impl GraphExample {
    pub fn scalar(graph: Graph, y: f64) -> Self {
        Self { graph, target: Matrix::column(&[y]) }
    }
}

const EVAL_CHUNK: usize = 128;

fn stack_targets(items: &[&GraphExample]) -> Result<Matrix> {
    let cols = items[0].target.cols();
    let mut data = Vec::new();
    let mut rows = 0;
    for it in items {
        if it.target.cols() != cols {
            return Err(Error::Dimension("targets of different widths".into()));
        }
        data.extend_from_slice(it.target.as_slice());
        rows += it.target.rows();
    }
    Matrix::from_vec(rows, cols, data)
}

fn check_targets(model: &GnnModel, set: &[GraphExample]) -> Result<()> {
    let out = model.config.output_dim;
    for (i, ex) in set.iter().enumerate() {
        let rows = match model.config.readout {
            Readout::NodeLevel => ex.graph.num_nodes(),
            _ => 1,
        };
        if ex.target.rows() != rows || ex.target.cols() != out {
            return Err(Error::Dimension(format!(
                "example {i} target is {}x{}, expected {rows}x{out}",
                ex.target.rows(),
                ex.target.cols()
            )));
        }
    }
    Ok(())
}

/// Outputs per graph, evaluated in batches.
pub fn gnn_predict(model: &GnnModel, graphs: &[&Graph]) -> Result<Vec<Matrix>> {
    let mut out = Vec::with_capacity(graphs.len());
    for chunk in graphs.chunks(EVAL_CHUNK) {
        let batch = model.batch(chunk)?;
        let y = model.forward_batch(&batch)?;
        let mut row = 0;
        for g in chunk {
            let rows = match model.config.readout {
                Readout::NodeLevel => g.num_nodes(),
                _ => 1,
            };
            let mut m = Matrix::zeros(rows, y.cols());
            for r in 0..rows {
                m.row_mut(r).copy_from_slice(y.row(row + r));
            }
            row += rows;
            out.push(m);
        }
    }
    Ok(out)
}

/// Mean squared error over every target entry of the set.
pub fn gnn_mse(model: &GnnModel, set: &[GraphExample]) -> Result<f64> {
    let graphs: Vec<&Graph> = set.iter().map(|e| &e.graph).collect();
    let preds = gnn_predict(model, &graphs)?;
    let (mut sum, mut count) = (0.0, 0usize);
    for (p, ex) in preds.iter().zip(set) {
        for (a, b) in p.as_slice().iter().zip(ex.target.as_slice()) {
            sum += (a - b) * (a - b);
            count += 1;
        }
    }
    Ok(sum / count.max(1) as f64)
}

/// Minibatch training with best-validation selection; see [`crate::mlp::train`].
pub fn gnn_train(
    model: &GnnModel,
    train_set: &[GraphExample],
    val_set: &[GraphExample],
    cfg: &TrainConfig,
) -> Result<(GnnModel, History)> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InvalidArgument("training and validation sets must be nonempty".into()));
    }
    check_targets(model, train_set)?;
    check_targets(model, val_set)?;
    let mut current = model.clone();
    let mut best = model.clone();
    let initial = gnn_mse(model, val_set)?;
    let mut history =
        History { best_val_loss: if initial.is_finite() { initial } else { f64::INFINITY }, ..History::default() };
    let mut opt = Optimizer::new(cfg.optimizer, cfg.weight_decay);
    let mut rng = RandomSource::new(cfg.seed, "gnn-shuffle");
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        rng.shuffle(&mut order);
        let mut diverged = false;
        let mut loss_sum = 0.0;
        let mut loss_weight = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let items: Vec<&GraphExample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let graphs: Vec<&Graph> = items.iter().map(|e| &e.graph).collect();
            let batch = current.batch(&graphs)?;
            let targets = stack_targets(&items)?;
            let (loss, g) = match gnn_grad(&current, &batch, &targets) {
                Ok(v) => v,
                Err(Error::NonFinite(_)) => {
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            };
            loss_sum += loss * chunk.len() as f64;
            loss_weight += chunk.len() as f64;
            opt.step(current.params_mut(), g.slices(), lr);
        }
        let val_loss = if diverged || !current.is_finite() { f64::NAN } else { gnn_mse(&current, val_set)? };
        // Running average over the epoch's minibatches; avoids a second pass.
        let train_loss = if diverged { f64::NAN } else { loss_sum / loss_weight };
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
        if !val_loss.is_finite() {
            history.diverged = true;
            break;
        }
        if val_loss < history.best_val_loss {
            history.best_val_loss = val_loss;
            history.best_epoch = epoch + 1;
            best = current.clone();
        }
    }
    Ok((best, history))
}
