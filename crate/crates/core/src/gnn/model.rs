use std::collections::HashMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::graphgen::Graph;
use crate::mlp::{Activation, Dense, Gradients, InitScheme, MlpModel, Tape};
use crate::numerics::{gemm, Matrix, RandomSource};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Sum,
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    Sum,
    Min,
    Max,
    /// Applies the readout MLP to every node; output is `n x out`.
    NodeLevel,
}

impl Aggregation {
    pub fn name(self) -> &'static str {
        match self {
            Aggregation::Sum => "sum",
            Aggregation::Min => "min",
            Aggregation::Max => "max",
        }
    }
}

impl Readout {
    pub fn name(self) -> &'static str {
        match self {
            Readout::Sum => "sum",
            Readout::Min => "min",
            Readout::Max => "max",
            Readout::NodeLevel => "node",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnConfig {
    /// Number of message-passing rounds `K`.
    pub iterations: usize,
    pub aggregation: Aggregation,
    pub readout: Readout,
    pub hidden: usize,
    /// Layers in each message MLP.
    pub message_depth: usize,
    /// Layers in the readout MLP; 1 is a linear map.
    pub readout_depth: usize,
    pub node_dim: usize,
    /// Width of the per-edge input; 0 leaves the slot out of the message input.
    pub edge_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
    pub init: InitScheme,
    pub use_bias: bool,
}

impl GnnConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.iterations >= 1, "iterations must be >= 1"),
            (self.hidden >= 1, "hidden width must be >= 1"),
            (self.message_depth >= 1, "message depth must be >= 1"),
            (self.readout_depth >= 1, "readout depth must be >= 1"),
            (self.node_dim >= 1, "node feature width must be >= 1"),
            (self.output_dim >= 1, "output width must be >= 1"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::InvalidArgument(msg.into()));
            }
        }
        Ok(())
    }
}

/// Per-edge message MLPs for each round followed by a readout MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnModel {
    pub config: GnnConfig,
    pub message: Vec<MlpModel>,
    pub readout: MlpModel,
}

fn widths(input: usize, hidden: usize, depth: usize, out: usize) -> Vec<usize> {
    let mut dims = vec![input];
    dims.extend(std::iter::repeat_n(hidden, depth - 1));
    dims.push(out);
    dims
}

impl GnnModel {
    pub fn new(config: GnnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut seeds = RandomSource::new(seed, "gnn-init");
        let mut message = Vec::with_capacity(config.iterations);
        for k in 0..config.iterations {
            let h_in = if k == 0 { config.node_dim } else { config.hidden };
            let dims = widths(2 * h_in + config.edge_dim, config.hidden, config.message_depth, config.hidden);
            message.push(MlpModel::new(&dims, config.activation, config.init, config.use_bias, seeds.next_u64())?);
        }
        let readout = MlpModel::new(
            &widths(config.hidden, config.hidden, config.readout_depth, config.output_dim),
            config.activation,
            config.init,
            config.use_bias,
            seeds.next_u64(),
        )?;
        Ok(Self { config, message, readout })
    }

    /// Assembles a model from explicit MLPs, checking that dimensions chain.
    pub fn from_parts(config: GnnConfig, message: Vec<MlpModel>, readout: MlpModel) -> Result<Self> {
        config.validate()?;
        if message.len() != config.iterations {
            return Err(Error::Dimension(format!(
                "{} message MLPs for {} iterations",
                message.len(),
                config.iterations
            )));
        }
        let mut h = config.node_dim;
        for (k, m) in message.iter().enumerate() {
            if m.in_dim() != 2 * h + config.edge_dim {
                return Err(Error::Dimension(format!(
                    "message MLP {k} takes {} inputs, expected {}",
                    m.in_dim(),
                    2 * h + config.edge_dim
                )));
            }
            h = m.out_dim();
        }
        if readout.in_dim() != h || readout.out_dim() != config.output_dim {
            return Err(Error::Dimension("readout MLP shape".into()));
        }
        Ok(Self { config, message, readout })
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for m in &mut self.message {
            out.extend(m.params_mut());
        }
        out.extend(self.readout.params_mut());
        out
    }

    pub fn num_params(&self) -> usize {
        self.message.iter().map(MlpModel::num_params).sum::<usize>() + self.readout.num_params()
    }

    pub fn is_finite(&self) -> bool {
        self.message.iter().all(MlpModel::is_finite) && self.readout.is_finite()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: GnnModel = serde_json::from_str(s)?;
        Self::from_parts(m.config, m.message, m.readout)
    }
}

/// Gradients laid out like [`GnnModel::params_mut`].
#[derive(Debug, Clone, PartialEq)]
pub struct GnnGradients {
    pub message: Vec<Gradients>,
    pub readout: Gradients,
}

impl GnnGradients {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for g in &self.message {
            out.extend(g.slices());
        }
        out.extend(self.readout.slices());
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.slices().iter().flat_map(|s| s.iter()).fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Disjoint union of graphs with messages grouped by receiver.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    node_ptr: Vec<usize>,
    features: Matrix,
    /// Messages into node `n` occupy `recv_ptr[n]..recv_ptr[n + 1]`.
    recv_ptr: Vec<usize>,
    recv: Vec<usize>,
    send: Vec<usize>,
    edge_feats: Matrix,
}

impl GraphBatch {
    /// Edge inputs come from `edge_attrs` when present, else from the weight when `edge_dim == 1`.
    pub fn new(graphs: &[&Graph], node_dim: usize, edge_dim: usize) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::InvalidArgument("empty graph batch".into()));
        }
        let total_nodes: usize = graphs.iter().map(|g| g.num_nodes()).sum();
        let total_msgs: usize = graphs.iter().map(|g| 2 * g.edges().len()).sum();
        let mut node_ptr = Vec::with_capacity(graphs.len() + 1);
        let mut features = Vec::with_capacity(total_nodes * node_dim);
        let mut recv_ptr = Vec::with_capacity(total_nodes + 1);
        let mut recv = Vec::with_capacity(total_msgs);
        let mut send = Vec::with_capacity(total_msgs);
        let mut edge_feats = Vec::with_capacity(total_msgs * edge_dim);
        recv_ptr.push(0);
        let mut offset = 0;
        for g in graphs {
            if g.num_nodes() == 0 {
                return Err(Error::Graph("graph without nodes".into()));
            }
            if g.node_features.cols() != node_dim {
                return Err(Error::Dimension(format!(
                    "node features have width {} but the model expects {node_dim}",
                    g.node_features.cols()
                )));
            }
            if let Some(a) = &g.edge_attrs {
                if edge_dim > 0 && a.width() != edge_dim {
                    return Err(Error::Dimension(format!(
                        "edge features have width {} but the model expects {edge_dim}",
                        a.width()
                    )));
                }
            } else if edge_dim > 1 {
                return Err(Error::Dimension(format!("model expects {edge_dim} edge features but the graph has none")));
            }
            node_ptr.push(offset);
            features.extend_from_slice(g.node_features.as_slice());
            // (neighbor, edge index, receiver is edge.u)
            let mut incoming: Vec<Vec<(usize, usize, bool)>> = vec![Vec::new(); g.num_nodes()];
            for (i, e) in g.edges().iter().enumerate() {
                incoming[e.u].push((e.v, i, true));
                incoming[e.v].push((e.u, i, false));
            }
            for (u, list) in incoming.iter().enumerate() {
                for &(v, i, at_u) in list {
                    recv.push(offset + u);
                    send.push(offset + v);
                    if edge_dim > 0 {
                        match &g.edge_attrs {
                            Some(a) => {
                                let src = if at_u { &a.uv } else { &a.vu };
                                edge_feats.extend_from_slice(src.row(i));
                            }
                            None => edge_feats.push(g.edges()[i].weight),
                        }
                    }
                }
                recv_ptr.push(recv.len());
            }
            offset += g.num_nodes();
        }
        node_ptr.push(offset);
        let n_msgs = recv.len();
        Ok(Self {
            node_ptr,
            features: Matrix::from_vec(offset, node_dim, features)?,
            recv_ptr,
            recv,
            send,
            edge_feats: Matrix::from_vec(n_msgs, edge_dim, edge_feats)?,
        })
    }

    pub fn num_graphs(&self) -> usize {
        self.node_ptr.len() - 1
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn num_messages(&self) -> usize {
        self.recv.len()
    }

    fn nodes_of(&self, g: usize) -> std::ops::Range<usize> {
        self.node_ptr[g]..self.node_ptr[g + 1]
    }

    fn incoming(&self, n: usize) -> std::ops::Range<usize> {
        self.recv_ptr[n]..self.recv_ptr[n + 1]
    }
}

struct RoundTape {
    /// Message index -> row of the deduplicated first-layer pre-activation.
    map: Vec<usize>,
    counts: Vec<f64>,
    uniq_z: Matrix,
    tail: Option<Tape>,
    /// Deduplicated messages.
    out: Matrix,
    /// Per receiver, `(unique row, multiplicity)` sorted by row.
    groups: Groups,
}

pub(crate) struct GnnTape {
    /// `states[k]` is the node state before round `k`; the last entry feeds the readout.
    states: Vec<Matrix>,
    rounds: Vec<RoundTape>,
    pooled: Option<Matrix>,
    readout: Tape,
}

fn column_block(w: &Matrix, start: usize, len: usize) -> Matrix {
    let mut out = Matrix::zeros(w.rows(), len);
    for r in 0..w.rows() {
        out.row_mut(r).copy_from_slice(&w.row(r)[start..start + len]);
    }
    out
}

fn row_hash(row: &[f64]) -> u64 {
    row.iter().fold(0xcbf2_9ce4_8422_2325_u64, |h, v| (h.rotate_left(5) ^ v.to_bits()).wrapping_mul(0x0100_0000_01b3))
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Hasher for keys that are already well-mixed hashes.
#[derive(Default)]
struct PassThrough(u64);

impl std::hash::Hasher for PassThrough {
    fn finish(&self) -> u64 {
        self.0
    }
    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = (self.0 << 8) | b as u64;
        }
    }
    fn write_u64(&mut self, v: u64) {
        self.0 = v;
    }
}

type PassThroughMap<V> = HashMap<u64, V, std::hash::BuildHasherDefault<PassThrough>>;

const NO_NEXT: usize = usize::MAX;

/// Collapses bitwise-identical rows. Returns unique rows, row map and multiplicities.
fn dedupe_rows(z: &Matrix) -> (Matrix, Vec<usize>, Vec<f64>) {
    let cols = z.cols();
    let mut heads: PassThroughMap<usize> = PassThroughMap::default();
    // chain[u]: next unique row sharing u's hash
    let mut chain: Vec<usize> = Vec::new();
    let mut uniq: Vec<f64> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    let mut map = Vec::with_capacity(z.rows());
    for r in 0..z.rows() {
        let row = z.row(r);
        let h = row_hash(row);
        let mut found = None;
        let mut tail = None;
        let mut cursor = heads.get(&h).copied();
        while let Some(u) = cursor {
            if same_bits(&uniq[u * cols..(u + 1) * cols], row) {
                found = Some(u);
                break;
            }
            tail = Some(u);
            cursor = (chain[u] != NO_NEXT).then_some(chain[u]);
        }
        let id = match found {
            Some(u) => u,
            None => {
                let u = counts.len();
                match tail {
                    Some(t) => chain[t] = u,
                    None => {
                        heads.insert(h, u);
                    }
                }
                uniq.extend_from_slice(row);
                counts.push(0.0);
                chain.push(NO_NEXT);
                u
            }
        };
        counts[id] += 1.0;
        map.push(id);
    }
    let n = counts.len();
    (Matrix::from_vec(n, cols, uniq).expect("consistent shape"), map, counts)
}

/// Sum of a multiset of `(value, multiplicity)` pairs in a canonical order, so the
/// result does not depend on how the multiset was enumerated.
fn canonical_sum(items: &mut [(f64, usize)]) -> f64 {
    if items.len() == 1 {
        return items[0].0 * items[0].1 as f64;
    }
    items.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    items.iter().map(|&(v, c)| v * c as f64).sum()
}

/// Lexicographic order on the bit patterns of two rows.
fn row_order(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.total_cmp(y);
        if o.is_ne() {
            return o;
        }
    }
    std::cmp::Ordering::Equal
}

/// Per-receiver `(unique row, multiplicity)` lists in one flat buffer.
struct Groups {
    ptr: Vec<usize>,
    items: Vec<(usize, usize)>,
}

impl Groups {
    fn of(&self, node: usize) -> &[(usize, usize)] {
        &self.items[self.ptr[node]..self.ptr[node + 1]]
    }
}

/// Aggregates deduplicated messages per receiver. Sums run over the distinct message
/// rows sorted by content, so the result depends only on the multiset of messages.
fn aggregate(batch: &GraphBatch, agg: Aggregation, out: &Matrix, map: &[usize]) -> Result<(Matrix, Groups)> {
    let n = batch.num_nodes();
    let w = out.cols();
    let mut h = Matrix::zeros(n, w);
    let mut groups = Groups { ptr: Vec::with_capacity(n + 1), items: Vec::with_capacity(map.len()) };
    groups.ptr.push(0);
    let mut ids: Vec<usize> = Vec::new();
    for node in 0..n {
        ids.clear();
        ids.extend(batch.incoming(node).map(|m| map[m]));
        ids.sort_unstable();
        let start = groups.items.len();
        for &id in &ids {
            let fresh = groups.items.len() == start;
            match groups.items.last_mut() {
                Some((last, c)) if !fresh && *last == id => *c += 1,
                _ => groups.items.push((id, 1)),
            }
        }
        let grouped = &mut groups.items[start..];
        if grouped.is_empty() {
            if agg != Aggregation::Sum {
                return Err(Error::Graph(format!("node {node} has no neighbors under {} aggregation", agg.name())));
            }
            groups.ptr.push(groups.items.len());
            continue;
        }
        let row = h.row_mut(node);
        match agg {
            Aggregation::Sum => {
                if grouped.len() > 1 {
                    grouped.sort_by(|a, b| row_order(out.row(a.0), out.row(b.0)));
                }
                for &(id, k) in grouped.iter() {
                    let k = k as f64;
                    row.iter_mut().zip(out.row(id)).for_each(|(acc, v)| *acc += k * v);
                }
            }
            Aggregation::Min => {
                row.copy_from_slice(out.row(grouped[0].0));
                for &(id, _) in grouped[1..].iter() {
                    row.iter_mut().zip(out.row(id)).for_each(|(acc, v)| *acc = acc.min(*v));
                }
            }
            Aggregation::Max => {
                row.copy_from_slice(out.row(grouped[0].0));
                for &(id, _) in grouped[1..].iter() {
                    row.iter_mut().zip(out.row(id)).for_each(|(acc, v)| *acc = acc.max(*v));
                }
            }
        }
        groups.ptr.push(groups.items.len());
    }
    Ok((h, groups))
}

fn pool(batch: &GraphBatch, readout: Readout, h: &Matrix) -> Matrix {
    let w = h.cols();
    let mut pooled = Matrix::zeros(batch.num_graphs(), w);
    let mut scratch: Vec<(f64, usize)> = Vec::new();
    for g in 0..batch.num_graphs() {
        let nodes = batch.nodes_of(g);
        for c in 0..w {
            let v = match readout {
                Readout::Sum => {
                    scratch.clear();
                    scratch.extend(nodes.clone().map(|n| (h.get(n, c), 1)));
                    canonical_sum(&mut scratch)
                }
                Readout::Min => nodes.clone().map(|n| h.get(n, c)).fold(f64::INFINITY, f64::min),
                Readout::Max => nodes.clone().map(|n| h.get(n, c)).fold(f64::NEG_INFINITY, f64::max),
                Readout::NodeLevel => unreachable!("node-level readout is not pooled"),
            };
            pooled.set(g, c, v);
        }
    }
    pooled
}

/// Routes pooled gradients back to nodes; extremum ties split equally.
pub(crate) fn pool_backward(
    batch: &GraphBatch,
    readout: Readout,
    h: &Matrix,
    pooled: &Matrix,
    d_pooled: &Matrix,
) -> Matrix {
    let w = h.cols();
    let mut dh = Matrix::zeros(h.rows(), w);
    for g in 0..batch.num_graphs() {
        let nodes = batch.nodes_of(g);
        for c in 0..w {
            let d = d_pooled.get(g, c);
            match readout {
                Readout::Sum => nodes.clone().for_each(|n| dh.set(n, c, d)),
                _ => {
                    let target = pooled.get(g, c);
                    let hits = nodes.clone().filter(|&n| h.get(n, c) == target).count();
                    for n in nodes.clone() {
                        if h.get(n, c) == target {
                            dh.set(n, c, d / hits as f64);
                        }
                    }
                }
            }
        }
    }
    dh
}

impl GnnModel {
    pub(crate) fn forward_tape(&self, batch: &GraphBatch) -> Result<(Matrix, GnnTape)> {
        let cfg = &self.config;
        if batch.features.cols() != cfg.node_dim || batch.edge_feats.cols() != cfg.edge_dim {
            return Err(Error::Dimension("batch built for a different feature layout".into()));
        }
        let e = cfg.edge_dim;
        let mut states = vec![batch.features.clone()];
        let mut rounds = Vec::with_capacity(cfg.iterations);
        for mlp in &self.message {
            let h = states.last().expect("states is never empty");
            let h_in = h.cols();
            let l0 = &mlp.layers[0];
            let width = l0.out_dim();
            let mut p = Matrix::zeros(h.rows(), width);
            let mut q = Matrix::zeros(h.rows(), width);
            gemm(1.0, h, false, &column_block(&l0.weight, 0, h_in), true, 0.0, &mut p);
            gemm(1.0, h, false, &column_block(&l0.weight, h_in, h_in), true, 0.0, &mut q);
            let mut z = Matrix::zeros(batch.num_messages(), width);
            if e > 0 {
                let c = column_block(&l0.weight, 2 * h_in, e);
                gemm(1.0, &batch.edge_feats, false, &c, true, 0.0, &mut z);
            }
            for m in 0..batch.num_messages() {
                let (pr, qr) = (p.row(batch.recv[m]), q.row(batch.send[m]));
                let row = z.row_mut(m);
                for j in 0..width {
                    let mut v = l0.scale * (pr[j] + qr[j] + row[j]);
                    if let Some(b) = &l0.bias {
                        v += b[j];
                    }
                    row[j] = v;
                }
            }
            let (uniq_z, map, counts) = dedupe_rows(&z);
            let (out, tail) = if mlp.depth() == 1 {
                (uniq_z.clone(), None)
            } else {
                let mut a = uniq_z.clone();
                let act = mlp.activation;
                a.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
                let (o, t) = mlp.forward_from(1, &a)?;
                (o, Some(t))
            };
            let (next, groups) = aggregate(batch, cfg.aggregation, &out, &map)?;
            states.push(next);
            rounds.push(RoundTape { map, counts, uniq_z, tail, out, groups });
        }
        let h = states.last().expect("states is never empty");
        let (pooled, (y, readout)) = match cfg.readout {
            Readout::NodeLevel => (None, self.readout.forward_batch(h)?),
            r => {
                let pooled = pool(batch, r, h);
                let res = self.readout.forward_batch(&pooled)?;
                (Some(pooled), res)
            }
        };
        Ok((y, GnnTape { states, rounds, pooled, readout }))
    }

    /// Outputs for a batch: one row per graph, or one row per node for node-level readout.
    pub fn forward_batch(&self, batch: &GraphBatch) -> Result<Matrix> {
        self.forward_tape(batch).map(|(y, _)| y)
    }

    /// Output for a single graph: `1 x out`, or `n x out` for node-level readout.
    pub fn forward(&self, g: &Graph) -> Result<Matrix> {
        let batch = GraphBatch::new(&[g], self.config.node_dim, self.config.edge_dim)?;
        self.forward_batch(&batch)
    }

    pub fn batch(&self, graphs: &[&Graph]) -> Result<GraphBatch> {
        GraphBatch::new(graphs, self.config.node_dim, self.config.edge_dim)
    }

    pub(crate) fn backward(&self, batch: &GraphBatch, tape: &GnnTape, d_out: &Matrix) -> GnnGradients {
        let cfg = &self.config;
        let (readout_grads, d_top) = self.readout.backward(&tape.readout, d_out);
        let h_last = tape.states.last().expect("states is never empty");
        let mut dh = match &tape.pooled {
            None => d_top,
            Some(pooled) => pool_backward(batch, cfg.readout, h_last, pooled, &d_top),
        };
        let mut message_grads = vec![None; self.message.len()];
        for k in (0..self.message.len()).rev() {
            let mlp = &self.message[k];
            let round = &tape.rounds[k];
            let h_prev = &tape.states[k];
            let h_cur = &tape.states[k + 1];
            let width = round.out.cols();
            let mut d_out_u = Matrix::zeros(round.out.rows(), width);
            for node in 0..batch.num_nodes() {
                let groups = round.groups.of(node);
                for c in 0..width {
                    let d = dh.get(node, c);
                    if d == 0.0 {
                        continue;
                    }
                    match cfg.aggregation {
                        Aggregation::Sum => {
                            for &(id, mult) in groups {
                                let cur = d_out_u.get(id, c);
                                d_out_u.set(id, c, cur + d * mult as f64);
                            }
                        }
                        _ => {
                            let target = h_cur.get(node, c);
                            let hits: usize = groups
                                .iter()
                                .filter(|&&(id, _)| round.out.get(id, c) == target)
                                .map(|&(_, mult)| mult)
                                .sum();
                            for &(id, mult) in groups {
                                if round.out.get(id, c) == target {
                                    let cur = d_out_u.get(id, c);
                                    d_out_u.set(id, c, cur + d * mult as f64 / hits as f64);
                                }
                            }
                        }
                    }
                }
            }
            let (mut grads, dz) = match &round.tail {
                Some(t) => {
                    let (g, mut da) = mlp.backward(t, &d_out_u);
                    let act = mlp.activation;
                    da.as_mut_slice()
                        .iter_mut()
                        .zip(round.uniq_z.as_slice())
                        .for_each(|(d, z)| *d *= act.derivative(*z));
                    (g, da)
                }
                None => (Gradients::zeros_like(mlp), d_out_u),
            };
            let l0 = &mlp.layers[0];
            let h_in = h_prev.cols();
            let e = cfg.edge_dim;
            let n = batch.num_nodes();
            let mut dp = Matrix::zeros(n, width);
            let mut dq = Matrix::zeros(n, width);
            for m in 0..batch.num_messages() {
                let src = dz.row(round.map[m]);
                dp.row_mut(batch.recv[m]).iter_mut().zip(src).for_each(|(a, b)| *a += b);
                dq.row_mut(batch.send[m]).iter_mut().zip(src).for_each(|(a, b)| *a += b);
            }
            let mut da = Matrix::zeros(width, h_in);
            let mut db = Matrix::zeros(width, h_in);
            gemm(l0.scale, &dp, true, h_prev, false, 0.0, &mut da);
            gemm(l0.scale, &dq, true, h_prev, false, 0.0, &mut db);
            let mut dc = Matrix::zeros(width, e);
            if e > 0 {
                let mut efu = Matrix::zeros(dz.rows(), e);
                for m in 0..batch.num_messages() {
                    efu.row_mut(round.map[m]).iter_mut().zip(batch.edge_feats.row(m)).for_each(|(a, b)| *a += b);
                }
                gemm(l0.scale, &dz, true, &efu, false, 0.0, &mut dc);
            }
            let gw = &mut grads.weights[0];
            for r in 0..width {
                let row = gw.row_mut(r);
                row[..h_in].copy_from_slice(da.row(r));
                row[h_in..2 * h_in].copy_from_slice(db.row(r));
                row[2 * h_in..].copy_from_slice(dc.row(r));
            }
            if let Some(gb) = &mut grads.biases[0] {
                gb.iter_mut().for_each(|v| *v = 0.0);
                for (u, &cnt) in round.counts.iter().enumerate() {
                    gb.iter_mut().zip(dz.row(u)).for_each(|(g, d)| *g += cnt * d);
                }
            }
            if k > 0 {
                let mut dh_prev = Matrix::zeros(n, h_in);
                gemm(l0.scale, &dp, false, &column_block(&l0.weight, 0, h_in), false, 0.0, &mut dh_prev);
                gemm(l0.scale, &dq, false, &column_block(&l0.weight, h_in, h_in), false, 1.0, &mut dh_prev);
                dh = dh_prev;
            }
            message_grads[k] = Some(grads);
        }
        GnnGradients {
            message: message_grads.into_iter().map(|g| g.expect("every round visited")).collect(),
            readout: readout_grads,
        }
    }
}

/// Mean squared error over every output entry and its gradient.
pub fn gnn_grad(model: &GnnModel, batch: &GraphBatch, targets: &Matrix) -> Result<(f64, GnnGradients)> {
    let (y, tape) = model.forward_tape(batch)?;
    if y.rows() != targets.rows() || y.cols() != targets.cols() {
        return Err(Error::Dimension(format!(
            "targets are {}x{} but outputs are {}x{}",
            targets.rows(),
            targets.cols(),
            y.rows(),
            y.cols()
        )));
    }
    let count = (y.rows() * y.cols()) as f64;
    let mut d = Matrix::zeros(y.rows(), y.cols());
    let mut loss = 0.0;
    for ((dv, a), t) in d.as_mut_slice().iter_mut().zip(y.as_slice()).zip(targets.as_slice()) {
        let e = a - t;
        loss += e * e;
        *dv = 2.0 * e / count;
    }
    loss /= count;
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    let g = model.backward(batch, &tape, &d);
    if !g.is_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    Ok((loss, g))
}

/// Two-layer ReLU message MLP passing the neighbor's state through, sum aggregation, max
/// readout and an identity readout layer. On identical unit features it outputs the max degree.
pub fn hand_wired_max_degree() -> Result<GnnModel> {
    let config = GnnConfig {
        iterations: 1,
        aggregation: Aggregation::Sum,
        readout: Readout::Max,
        hidden: 1,
        message_depth: 2,
        readout_depth: 1,
        node_dim: 1,
        edge_dim: 0,
        output_dim: 1,
        activation: Activation::Relu,
        init: InitScheme::Default,
        use_bias: true,
    };
    let dense = |w: Vec<f64>, cols: usize| Dense {
        weight: Matrix::from_vec(1, cols, w).expect("1 x cols"),
        bias: Some(vec![0.0]),
        scale: 1.0,
    };
    let message = MlpModel::from_layers(vec![dense(vec![0.0, 1.0], 2), dense(vec![1.0], 1)], Activation::Relu)?;
    let readout = MlpModel::from_layers(vec![dense(vec![1.0], 1)], Activation::Relu)?;
    GnnModel::from_parts(config, vec![message], readout)
}
