//! Graph families, feature schemes and the ground-truth oracles for the
//! max-degree and shortest-path tasks.

use std::collections::{HashSet, VecDeque};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ntk::DegreeProfile;
use crate::numerics::{Matrix, RandomSource};
use crate::{Error, Result};

/// Undirected edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

/// Directional edge features: row `i` of `uv` is `w_(u,v)` for edge `i = (u, v)`,
/// row `i` of `vu` is `w_(v,u)`. A message into receiver `r` from sender `s` reads `w_(r,s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeAttrs {
    pub uv: Matrix,
    pub vu: Matrix,
}

impl EdgeAttrs {
    pub fn width(&self) -> usize {
        self.uv.cols()
    }
}

/// Weighted undirected graph with node features and optional source/target markers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
    pub node_features: Matrix,
    pub source: Option<usize>,
    pub target: Option<usize>,
    pub edge_attrs: Option<EdgeAttrs>,
}

impl Graph {
    /// Validates edges; node features default to a single all-ones column.
    pub fn new(n: usize, edges: Vec<Edge>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(edges.len());
        for e in &edges {
            if e.u >= n || e.v >= n {
                return Err(Error::Graph(format!("edge ({}, {}) out of range for n={n}", e.u, e.v)));
            }
            if e.u == e.v {
                return Err(Error::Graph(format!("self-loop at node {}", e.u)));
            }
            if !(e.weight > 0.0) || !e.weight.is_finite() {
                return Err(Error::Graph(format!("edge weight {} must be positive", e.weight)));
            }
            if !seen.insert((e.u.min(e.v), e.u.max(e.v))) {
                return Err(Error::Graph(format!("duplicate edge ({}, {})", e.u, e.v)));
            }
        }
        Ok(Self {
            n,
            edges,
            node_features: Matrix::from_vec(n, 1, vec![1.0; n])?,
            source: None,
            target: None,
            edge_attrs: None,
        })
    }

    pub fn unweighted(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        Self::new(n, pairs.iter().map(|&(u, v)| Edge { u, v, weight: 1.0 }).collect())
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edges_mut(&mut self) -> &mut [Edge] {
        &mut self.edges
    }

    /// Adjacency lists of `(neighbor, weight)`.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.u].push((e.v, e.weight));
            adj[e.v].push((e.u, e.weight));
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for e in &self.edges {
            d[e.u] += 1;
            d[e.v] += 1;
        }
        d
    }

    pub fn set_node_features(&mut self, features: Matrix) -> Result<()> {
        if features.rows() != self.n {
            return Err(Error::Dimension(format!("{} feature rows for {} nodes", features.rows(), self.n)));
        }
        self.node_features = features;
        Ok(())
    }

    pub fn set_edge_attrs(&mut self, attrs: EdgeAttrs) -> Result<()> {
        let m = self.edges.len();
        if attrs.uv.rows() != m || attrs.vu.rows() != m || attrs.uv.cols() != attrs.vu.cols() {
            return Err(Error::Dimension("edge attribute shape".into()));
        }
        self.edge_attrs = Some(attrs);
        Ok(())
    }

    /// Unweighted hop distances from `s`; `None` for unreachable nodes.
    pub fn bfs_hops(&self, s: usize) -> Vec<Option<usize>> {
        let adj = self.adjacency();
        let mut dist = vec![None; self.n];
        let mut q = VecDeque::new();
        dist[s] = Some(0);
        q.push_back(s);
        while let Some(u) = q.pop_front() {
            let du = dist[u].unwrap_or(0);
            for &(v, _) in &adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    q.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.n == 0 || self.bfs_hops(0).iter().all(Option::is_some)
    }

    /// Copy with nodes relabeled: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Graph> {
        if perm.len() != self.n {
            return Err(Error::Dimension("permutation length".into()));
        }
        let edges = self.edges.iter().map(|e| Edge { u: perm[e.u], v: perm[e.v], weight: e.weight }).collect();
        let mut g = Graph::new(self.n, edges)?;
        let mut feats = Matrix::zeros(self.n, self.node_features.cols());
        for i in 0..self.n {
            feats.row_mut(perm[i]).copy_from_slice(self.node_features.row(i));
        }
        g.node_features = feats;
        g.source = self.source.map(|s| perm[s]);
        g.target = self.target.map(|t| perm[t]);
        g.edge_attrs = self.edge_attrs.clone();
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "p", rename_all = "snake_case")]
pub enum GraphFamily {
    Path,
    Cycle,
    Ladder,
    Tree,
    FourRegular,
    Complete,
    /// G(n, p) with a high edge probability; random graphs of this kind are expanders w.h.p.
    Expander(f64),
    /// G(n, p) with `p` drawn from {0.1, ..., 0.9} per graph.
    General,
    Gnp(f64),
}

/// Edge probability of the max-degree expander family.
pub const EXPANDER_P_MAX_DEGREE: f64 = 0.8;
/// Edge probability of the shortest-path expander family.
pub const EXPANDER_P_SHORTEST_PATH: f64 = 0.6;

const CONNECT_RETRIES: usize = 100;
const REGULAR_RETRIES: usize = 10_000;

impl GraphFamily {
    pub fn name(&self) -> String {
        match self {
            GraphFamily::Path => "path".into(),
            GraphFamily::Cycle => "cycle".into(),
            GraphFamily::Ladder => "ladder".into(),
            GraphFamily::Tree => "tree".into(),
            GraphFamily::FourRegular => "4regular".into(),
            GraphFamily::Complete => "complete".into(),
            GraphFamily::Expander(p) => format!("expander(p={p})"),
            GraphFamily::General => "general".into(),
            GraphFamily::Gnp(p) => format!("gnp(p={p})"),
        }
    }

    /// Rejects size ranges the family cannot be sampled on, and bad edge probabilities.
    pub fn check_sizes(&self, n_range: (usize, usize)) -> Result<()> {
        let (lo, hi) = n_range;
        if lo > hi {
            return Err(Error::InvalidArgument(format!("empty size range [{lo}, {hi}]")));
        }
        if lo < self.min_nodes() {
            return Err(Error::InvalidArgument(format!(
                "{} graphs need at least {} nodes",
                self.name(),
                self.min_nodes()
            )));
        }
        if let GraphFamily::Expander(p) | GraphFamily::Gnp(p) = *self {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidArgument(format!("edge probability {p} outside (0, 1]")));
            }
        }
        Ok(())
    }

    fn min_nodes(&self) -> usize {
        match self {
            GraphFamily::Ladder => 4,
            GraphFamily::FourRegular => 5,
            GraphFamily::Cycle => 3,
            _ => 2,
        }
    }
}

fn gnp(n: usize, p: f64, rng: &mut RandomSource) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.bernoulli(p) {
                pairs.push((u, v));
            }
        }
    }
    pairs
}

fn connected_gnp(n: usize, p: f64, rng: &mut RandomSource) -> Result<Graph> {
    for _ in 0..CONNECT_RETRIES {
        let g = Graph::unweighted(n, &gnp(n, p, rng))?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::Sampling(format!("no connected G({n}, {p}) in {CONNECT_RETRIES} draws")))
}

/// Largest connected component, relabeled to `0..k`.
fn largest_component(g: &Graph) -> Result<Graph> {
    let n = g.num_nodes();
    let mut comp = vec![usize::MAX; n];
    let mut best: Vec<usize> = Vec::new();
    let adj = g.adjacency();
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        let mut members = vec![s];
        comp[s] = s;
        let mut i = 0;
        while i < members.len() {
            let u = members[i];
            for &(v, _) in &adj[u] {
                if comp[v] == usize::MAX {
                    comp[v] = s;
                    members.push(v);
                }
            }
            i += 1;
        }
        if members.len() > best.len() {
            best = members;
        }
    }
    best.sort_unstable();
    let mut index = vec![usize::MAX; n];
    for (k, &u) in best.iter().enumerate() {
        index[u] = k;
    }
    let pairs: Vec<(usize, usize)> =
        g.edges().iter().filter(|e| index[e.u] != usize::MAX).map(|e| (index[e.u], index[e.v])).collect();
    Graph::unweighted(best.len(), &pairs)
}

fn prufer_tree(n: usize, rng: &mut RandomSource) -> Result<Graph> {
    if n == 2 {
        return Graph::unweighted(2, &[(0, 1)]);
    }
    let seq: Vec<usize> = (0..n - 2).map(|_| rng.index(n)).collect();
    let mut degree = vec![1usize; n];
    for &s in &seq {
        degree[s] += 1;
    }
    let mut pairs = Vec::with_capacity(n - 1);
    for &s in &seq {
        let leaf = (0..n).find(|&i| degree[i] == 1).expect("a leaf always exists");
        pairs.push((leaf, s));
        degree[leaf] -= 1;
        degree[s] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&i| degree[i] == 1).collect();
    pairs.push((rest[0], rest[1]));
    Graph::unweighted(n, &pairs)
}

/// Configuration model with rejection of self-loops, multi-edges and disconnected draws.
fn four_regular(n: usize, rng: &mut RandomSource) -> Result<Graph> {
    let mut stubs: Vec<usize> = (0..n).flat_map(|u| std::iter::repeat_n(u, 4)).collect();
    'attempt: for _ in 0..REGULAR_RETRIES {
        rng.shuffle(&mut stubs);
        let mut seen = HashSet::with_capacity(2 * n);
        let mut pairs = Vec::with_capacity(2 * n);
        for c in stubs.chunks_exact(2) {
            let (u, v) = (c[0].min(c[1]), c[0].max(c[1]));
            if u == v || !seen.insert((u, v)) {
                continue 'attempt;
            }
            pairs.push((u, v));
        }
        let g = Graph::unweighted(n, &pairs)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::Sampling(format!("no simple connected 4-regular graph on {n} nodes")))
}

/// Samples a connected graph of the family with `n` uniform in `n_range` (inclusive).
///
/// `Gnp` falls back to the largest connected component when `CONNECT_RETRIES` draws
/// are all disconnected, which is the normal case for very sparse `p`.
pub fn sample_graph(family: GraphFamily, n_range: (usize, usize), rng: &mut RandomSource) -> Result<Graph> {
    family.check_sizes(n_range)?;
    let (lo, hi) = n_range;
    let n = rng.int_inclusive(lo, hi);
    match family {
        GraphFamily::Path => {
            let pairs: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
            Graph::unweighted(n, &pairs)
        }
        GraphFamily::Cycle => {
            let pairs: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
            Graph::unweighted(n, &pairs)
        }
        GraphFamily::Ladder => {
            let m = n / 2;
            let mut pairs = Vec::with_capacity(3 * m);
            for i in 0..m {
                pairs.push((i, m + i));
                if i + 1 < m {
                    pairs.push((i, i + 1));
                    pairs.push((m + i, m + i + 1));
                }
            }
            Graph::unweighted(2 * m, &pairs)
        }
        GraphFamily::Tree => prufer_tree(n, rng),
        GraphFamily::FourRegular => four_regular(n, rng),
        GraphFamily::Complete => {
            let pairs: Vec<_> = (0..n).flat_map(|u| ((u + 1)..n).map(move |v| (u, v))).collect();
            Graph::unweighted(n, &pairs)
        }
        GraphFamily::Expander(p) => connected_gnp(n, p, rng),
        GraphFamily::General => {
            for _ in 0..CONNECT_RETRIES {
                let p = rng.int_inclusive(1, 9) as f64 / 10.0;
                let g = Graph::unweighted(n, &gnp(n, p, rng))?;
                if g.is_connected() {
                    return Ok(g);
                }
            }
            Err(Error::Sampling(format!("no connected general graph on {n} nodes")))
        }
        GraphFamily::Gnp(p) => {
            let mut last = None;
            for _ in 0..CONNECT_RETRIES {
                let g = Graph::unweighted(n, &gnp(n, p, rng))?;
                if g.is_connected() {
                    return Ok(g);
                }
                last = Some(g);
            }
            let lcc = largest_component(&last.expect("at least one draw"))?;
            if lcc.num_nodes() < 2 {
                return Err(Error::Sampling(format!("G({n}, {p}) has no component with an edge")));
            }
            Ok(lcc)
        }
    }
}

/// Max/min degree and how many nodes attain them.
pub fn degree_profile(g: &Graph) -> Result<DegreeProfile> {
    if g.num_nodes() == 0 {
        return Err(Error::Graph("degree profile of an empty graph".into()));
    }
    let deg = g.degrees();
    let max = *deg.iter().max().unwrap();
    let min = *deg.iter().min().unwrap();
    Ok(DegreeProfile {
        max_degree: max,
        min_degree: min,
        n_max: deg.iter().filter(|&&d| d == max).count(),
        n_min: deg.iter().filter(|&&d| d == min).count(),
    })
}

/// Bellman-Ford table `d[k][u]`: shortest distance from `s` to `u` using at most `k` edges.
pub fn bellman_ford_table(g: &Graph, s: usize, max_hops: usize) -> Result<Vec<Vec<f64>>> {
    let n = g.num_nodes();
    if s >= n {
        return Err(Error::Graph(format!("source {s} out of range")));
    }
    let mut table = Vec::with_capacity(max_hops + 1);
    let mut d = vec![f64::INFINITY; n];
    d[s] = 0.0;
    table.push(d.clone());
    for _ in 0..max_hops {
        let prev = table.last().expect("table is never empty");
        let mut next = prev.clone();
        for e in g.edges() {
            let (a, b) = (prev[e.u] + e.weight, prev[e.v] + e.weight);
            if a < next[e.v] {
                next[e.v] = a;
            }
            if b < next[e.u] {
                next[e.u] = b;
            }
        }
        table.push(next);
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathLength {
    Reachable(f64),
    Unreachable,
}

impl PathLength {
    pub fn value(self) -> Option<f64> {
        match self {
            PathLength::Reachable(v) => Some(v),
            PathLength::Unreachable => None,
        }
    }
}

/// `d[max_hops][t]`; with `max_hops = n - 1` this is the true shortest distance.
pub fn shortest_path_bf(g: &Graph, s: usize, t: usize, max_hops: usize) -> Result<PathLength> {
    if t >= g.num_nodes() {
        return Err(Error::Graph(format!("target {t} out of range")));
    }
    let table = bellman_ford_table(g, s, max_hops)?;
    let d = table[max_hops][t];
    Ok(if d.is_finite() { PathLength::Reachable(d) } else { PathLength::Unreachable })
}

const ST_PAIR_DRAWS: usize = 10_000;
/// Largest unweighted hop count accepted by [`sample_st_pair`].
pub const MAX_ST_HOPS: usize = 3;

/// Draws random distinct pairs until one is at most three hops apart.
pub fn sample_st_pair(g: &Graph, rng: &mut RandomSource) -> Result<(usize, usize)> {
    let n = g.num_nodes();
    if n < 2 {
        return Err(Error::Graph("source/target pair needs two nodes".into()));
    }
    for _ in 0..ST_PAIR_DRAWS {
        let s = rng.index(n);
        let t = rng.index(n);
        if s == t {
            continue;
        }
        if let Some(h) = g.bfs_hops(s)[t] {
            if h <= MAX_ST_HOPS {
                return Ok((s, t));
            }
        }
    }
    Err(Error::Sampling(format!("no pair within {MAX_ST_HOPS} hops in {ST_PAIR_DRAWS} draws")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureScheme {
    /// Every node has feature `(1)`.
    Identical,
    /// Three coordinates uniform on `[-a, a]`.
    Spurious { a: f64 },
    /// `(h, 1[v=s], 1[v=t])` with `h ~ U[-5, 5]`; edge weights uniform on `[1, weight_hi]`.
    ShortestPath { weight_hi: f64 },
}

/// Weight range upper bound for shortest-path training graphs.
pub const SP_TRAIN_WEIGHT_HI: f64 = 5.0;
/// Weight range upper bound for the edge-weight extrapolation test.
pub const SP_EXTRAP_WEIGHT_HI: f64 = 10.0;

/// Returns a copy of `g` carrying the scheme's node features (and edge weights).
pub fn attach_features(g: &Graph, scheme: FeatureScheme, rng: &mut RandomSource) -> Result<Graph> {
    let mut out = g.clone();
    let n = g.num_nodes();
    match scheme {
        FeatureScheme::Identical => {
            out.node_features = Matrix::from_vec(n, 1, vec![1.0; n])?;
        }
        FeatureScheme::Spurious { a } => {
            let mut f = Matrix::zeros(n, 3);
            f.as_mut_slice().iter_mut().for_each(|v| *v = rng.uniform(-a, a));
            out.node_features = f;
        }
        FeatureScheme::ShortestPath { weight_hi } => {
            let (Some(s), Some(t)) = (g.source, g.target) else {
                return Err(Error::Graph("shortest-path features need source and target".into()));
            };
            if weight_hi < 1.0 {
                return Err(Error::InvalidArgument(format!("weight range [1, {weight_hi}]")));
            }
            let mut f = Matrix::zeros(n, 3);
            for u in 0..n {
                f.set(u, 0, rng.uniform(-5.0, 5.0));
                f.set(u, 1, if u == s { 1.0 } else { 0.0 });
                f.set(u, 2, if u == t { 1.0 } else { 0.0 });
            }
            out.node_features = f;
            for e in out.edges_mut() {
                e.weight = rng.uniform(1.0, weight_hi);
            }
        }
    }
    Ok(out)
}

/// Target attached to a serialized graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphLabel {
    Scalar(f64),
    /// One row per node.
    Nodes(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GraphRecord {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
    features: Vec<Vec<f64>>,
    source: Option<usize>,
    target: Option<usize>,
    label: Option<GraphLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edge_features: Option<EdgeFeatureRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EdgeFeatureRecord {
    uv: Vec<Vec<f64>>,
    vu: Vec<Vec<f64>>,
}

fn matrix_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(<[f64]>::to_vec).collect()
}

fn rows_matrix(rows: &[Vec<f64>], cols_if_empty: usize) -> Result<Matrix> {
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, cols_if_empty));
    }
    Matrix::from_rows(rows)
}

/// One JSON object per line: `{n, edges:[[u,v,w],...], features, source, target, label}`.
pub fn write_jsonl(path: &Path, graphs: &[(Graph, Option<GraphLabel>)]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (g, label) in graphs {
        let rec = GraphRecord {
            n: g.num_nodes(),
            edges: g.edges().iter().map(|e| (e.u, e.v, e.weight)).collect(),
            features: matrix_rows(&g.node_features),
            source: g.source,
            target: g.target,
            label: label.clone(),
            edge_features: g
                .edge_attrs
                .as_ref()
                .map(|a| EdgeFeatureRecord { uv: matrix_rows(&a.uv), vu: matrix_rows(&a.vu) }),
        };
        serde_json::to_writer(&mut f, &rec)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<(Graph, Option<GraphLabel>)>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: GraphRecord = serde_json::from_str(&line)?;
        let edges = rec.edges.iter().map(|&(u, v, weight)| Edge { u, v, weight }).collect();
        let mut g = Graph::new(rec.n, edges)?;
        g.set_node_features(rows_matrix(&rec.features, 1)?)?;
        g.source = rec.source;
        g.target = rec.target;
        if let Some(ef) = rec.edge_features {
            g.set_edge_attrs(EdgeAttrs { uv: rows_matrix(&ef.uv, 0)?, vu: rows_matrix(&ef.vu, 0)? })?;
        }
        out.push((g, rec.label));
    }
    Ok(out)
}
