//! Acceptance suite. Run with `cargo test --release -p extrapolab --test acceptance`.
//!
//! Each criterion prints one `criterion N: PASS|FAIL` line; the process exits non-zero
//! if any fails. Thresholds are fixed here.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use extrapolab::gnn::{
    gnn_grad, hand_wired_max_degree, run_max_degree_experiment, run_shortest_path_experiment, Aggregation, GnnConfig,
    GnnModel, GnnRunResult, MaxDegreeSetup, Readout, ShortestPathSetup,
};
use extrapolab::graphgen::{bellman_ford_table, sample_graph, Edge, EdgeAttrs, Graph, GraphFamily};
use extrapolab::mlp::{
    grad, run_direction_sweep, run_mlp_experiment, Activation, InitScheme, MlpModel, MlpRunResult, MlpSetup,
    TargetPreset, TrainConfig,
};
use extrapolab::nbody::{
    run_nbody_experiment, sample_orbit_system, step, EdgeScheme, NbodyRunResult, NbodySetup, SimConfig, SystemState,
};
use extrapolab::ntk::{exact_extrapolation_check, gntk_condition_rank, ntk2_relu, ntk_mc_oracle, KernelSpec};
use extrapolab::numerics::{random_orthogonal, Matrix, RandomSource};
use extrapolab::synth::{DomainSpec, Restriction, FIX_FIRST_DEFAULT};

const SEEDS: [u64; 3] = [0, 1, 2];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(start: Instant, limit: Duration, checks: bool, detail: String) -> Outcome {
    let t = start.elapsed();
    let ok = t <= limit;
    let note = if ok { String::new() } else { format!(" over the {}s budget", limit.as_secs()) };
    outcome(checks && ok, format!("{detail}{note}"))
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

// ---------------------------------------------------------------------------
// 1, 2: kernel

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = RandomSource::new(1, "acceptance-exact");
    let mut worst: f64 = 0.0;
    for d in [2, 8] {
        for _ in 0..20 {
            let q = random_orthogonal(d, &mut rng).unwrap();
            let beta = rng.normal_vec(d);
            let s = rng.uniform(0.5, 2.0);
            let err = exact_extrapolation_check(&beta, &q, s, 2000, 10.0, &mut rng).unwrap();
            worst = worst.max(err);
        }
    }
    within(start, Duration::from_secs(60), worst < 1e-6, format!("max abs error {worst:.2e} (< 1e-6)"))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let spec = KernelSpec::default();
    let mut rng = RandomSource::new(2, "acceptance-mc");
    let samples = 1_000_000;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.int_inclusive(1, 16);
        let x = rng.normal_vec(d);
        let y = rng.normal_vec(d);
        let cf = ntk2_relu(&x, &y, &spec).unwrap();
        let mc = ntk_mc_oracle(&x, &y, &spec, samples, &mut rng).unwrap();
        let scale = x.iter().map(|v| v * v).sum::<f64>().sqrt() * y.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max((cf - mc.mean).abs() / scale);
    }
    // x.x = |x|^2, orthogonal unit vectors give 1/(2 pi), antipodal vectors give 0.
    let spots: [(Vec<f64>, Vec<f64>, f64); 3] = [
        (vec![3.0, 4.0], vec![3.0, 4.0], 25.0),
        (vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], 1.0 / (2.0 * PI)),
        (vec![1.0, -2.0], vec![-1.0, 2.0], 0.0),
    ];
    let mut spots_ok = true;
    let mut spot_notes = Vec::new();
    for (x, y, want) in &spots {
        let cf = ntk2_relu(x, y, &spec).unwrap();
        let mc = ntk_mc_oracle(x, y, &spec, samples, &mut rng).unwrap();
        let z = if mc.std_error > 0.0 { (mc.mean - want).abs() / mc.std_error } else { 0.0 };
        let ok = (cf - want).abs() <= 1e-12 * want.abs().max(1.0) && (mc.mean - want).abs() <= 3.0 * mc.std_error;
        spots_ok &= ok;
        spot_notes.push(format!("{z:.2}se"));
    }
    within(
        start,
        Duration::from_secs(120),
        worst < 1e-2 && spots_ok,
        format!("max normalized error {worst:.2e} (< 1e-2), spot deviations {}", spot_notes.join("/")),
    )
}

// ---------------------------------------------------------------------------
// 3-6: MLPs

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let setup = MlpSetup { target: TargetPreset::Quadratic, ..MlpSetup::default() };
    let sweep = run_direction_sweep(&setup, 0, 500).unwrap();
    let frac = sweep.fraction_above(0.99);
    within(start, Duration::from_secs(300), frac >= 0.9, format!("{frac:.3} of 500 rays with r2 > 0.99 (>= 0.90)"))
}

fn ood(rows: &[MlpRunResult]) -> Vec<f64> {
    rows.iter().map(|r| r.ood_mape).collect()
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let cube = DomainSpec::cube(2, 5.0);
    let all = MlpSetup { target: TargetPreset::Linear, train_domain: cube, ..MlpSetup::default() };
    let fix = MlpSetup { train_domain: cube.with_restriction(Restriction::FixFirst(FIX_FIRST_DEFAULT)), ..all.clone() };
    let a = ood(&run_mlp_experiment(&all, &SEEDS).unwrap());
    let f = ood(&run_mlp_experiment(&fix, &SEEDS).unwrap());
    let ok = a.iter().zip(&f).all(|(a, f)| *a < 0.05 && *f >= 5.0 * a);
    within(
        start,
        Duration::from_secs(600),
        ok,
        format!("all-directions OOD MAPE {} (< 0.05), fix1 {} (>= 5x)", fmt_list(&a), fmt_list(&f)),
    )
}

fn criterion_5() -> Outcome {
    let cube = DomainSpec::cube(2, 1.0);
    let mut ok = true;
    let mut notes = Vec::new();
    let cases = [
        ("quadratic", TargetPreset::Quadratic, cube),
        ("cos", TargetPreset::Cos, cube),
        ("sqrt", TargetPreset::Sqrt, cube.nonnegative()),
    ];
    for (name, target, domain) in cases {
        let setup = MlpSetup { target, train_domain: domain, test_multiple: 5.0, ..MlpSetup::default() };
        let rows = run_mlp_experiment(&setup, &SEEDS).unwrap();
        let ratios: Vec<f64> = rows.iter().map(|r| r.ood_mape / r.in_mape).collect();
        ok &= ratios.iter().all(|&r| r >= 5.0);
        notes.push(format!("{name} ood/in {}", fmt_list(&ratios)));
    }
    let mut l1_best = Vec::new();
    let mut l1_ok = false;
    for lr in [1e-2, 1e-3] {
        let setup = MlpSetup {
            target: TargetPreset::L1,
            init: InitScheme::NtkScaled,
            train: TrainConfig { lr, ..TrainConfig::default() },
            ..MlpSetup::default()
        };
        let o = ood(&run_mlp_experiment(&setup, &SEEDS).unwrap());
        l1_ok |= o.iter().all(|&v| v < 0.1);
        l1_best.push(format!("lr {lr}: {}", fmt_list(&o)));
    }
    notes.push(format!("L1 OOD MAPE {}", l1_best.join(", ")));
    outcome(ok && l1_ok, notes.join("; "))
}

fn criterion_6() -> Outcome {
    let tanh = MlpSetup {
        target: TargetPreset::Tanh,
        activation: Activation::Tanh,
        train_domain: DomainSpec::cube(1, 1.0),
        ..MlpSetup::default()
    };
    let t = ood(&run_mlp_experiment(&tanh, &SEEDS).unwrap());
    let quad = |depth| MlpSetup {
        target: TargetPreset::Quadratic,
        activation: Activation::Quadratic,
        depth,
        ..MlpSetup::default()
    };
    let q2 = ood(&run_mlp_experiment(&quad(2), &SEEDS).unwrap());
    let q4 = ood(&run_mlp_experiment(&quad(4), &SEEDS).unwrap());
    let ok =
        t.iter().all(|&v| v < 0.1) && q2.iter().all(|&v| v < 0.1) && q2.iter().zip(&q4).all(|(a, b)| *b >= 5.0 * a);
    outcome(
        ok,
        format!(
            "tanh/tanh {} (< 0.1), quadratic depth 2 {} (< 0.1), depth 4 {} (>= 5x)",
            fmt_list(&t),
            fmt_list(&q2),
            fmt_list(&q4)
        ),
    )
}

// ---------------------------------------------------------------------------
// 7-9: GNNs

fn split_mape(rows: &[GnnRunResult], split: &str) -> Vec<f64> {
    SEEDS.iter().map(|&s| rows.iter().find(|r| r.seed == s && r.split == split).expect("split row").mape).collect()
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let base =
        MaxDegreeSetup { train: TrainConfig { epochs: 100, ..TrainConfig::default() }, ..MaxDegreeSetup::default() };
    let run = |family, readout| {
        let setup = MaxDegreeSetup { train_family: family, readout, ..base.clone() };
        split_mape(&run_max_degree_experiment(&setup, &SEEDS).unwrap(), "extrapolation")
    };
    let max = run(GraphFamily::General, Readout::Max);
    let sum = run(GraphFamily::General, Readout::Sum);
    let path = run(GraphFamily::Path, Readout::Max);
    let mape_ok = (0..SEEDS.len()).all(|i| max[i] < 0.1 && sum[i] >= 3.0 * max[i] && path[i] >= 5.0 * max[i]);

    let mut rng = RandomSource::new(7, "acceptance-rank");
    let mut rank = |family| {
        let graphs: Vec<Graph> = (0..50).map(|_| sample_graph(family, (20, 30), &mut rng).unwrap()).collect();
        gntk_condition_rank(&graphs).unwrap().rank
    };
    let general = rank(GraphFamily::General);
    let others: Vec<usize> =
        [GraphFamily::Path, GraphFamily::Cycle, GraphFamily::FourRegular, GraphFamily::Ladder].map(&mut rank).to_vec();
    let rank_ok = general == 4 && others.iter().all(|&r| r <= 2);
    within(
        start,
        Duration::from_secs(1800),
        mape_ok && rank_ok,
        format!(
            "max readout {} (< 0.1), sum {} (>= 3x), path-trained {} (>= 5x); rank general {general}, path/cycle/4reg/ladder {others:?}",
            fmt_list(&max),
            fmt_list(&sum),
            fmt_list(&path)
        ),
    )
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let base = ShortestPathSetup {
        hidden: 32,
        n_train: 500,
        n_val: 100,
        n_test: 100,
        train: TrainConfig { epochs: 100, ..TrainConfig::default() },
        ..ShortestPathSetup::default()
    };
    let agg = |aggregation| {
        let setup = ShortestPathSetup { aggregation, weight_extrapolation: true, ..base.clone() };
        split_mape(&run_shortest_path_experiment(&setup, &SEEDS).unwrap(), "weight_extrapolation")
    };
    let min = agg(Aggregation::Min);
    let sum = agg(Aggregation::Sum);
    let order_ok = min.iter().zip(&sum).all(|(m, s)| m < s);

    let ps = [0.05, 0.1, 0.3, 0.5, 0.8, 1.0];
    let sweep: Vec<f64> = ps
        .iter()
        .map(|&p| {
            let setup = ShortestPathSetup { train_family: GraphFamily::Gnp(p), ..base.clone() };
            let rows = run_shortest_path_experiment(&setup, &[0]).unwrap();
            rows.iter().find(|r| r.split == "extrapolation").expect("split row").mape
        })
        .collect();
    let interior = sweep[1..ps.len() - 1].iter().cloned().fold(f64::INFINITY, f64::min);
    let u_ok = sweep[0] >= 2.0 * interior && sweep[ps.len() - 1] >= 2.0 * interior;
    within(
        start,
        Duration::from_secs(2700),
        order_ok && u_ok,
        format!(
            "OOD-weight MAPE min {} < sum {}; sparsity sweep p={ps:?} {} (ends >= 2x interior min {interior:.4})",
            fmt_list(&min),
            fmt_list(&sum),
            fmt_list(&sweep)
        ),
    )
}

fn nbody_split(rows: &[NbodyRunResult], split: &str) -> Vec<f64> {
    SEEDS.iter().map(|&s| rows.iter().find(|r| r.seed == s && r.split == split).expect("split row").mape).collect()
}

fn circular_drift() -> f64 {
    let cfg = SimConfig::default();
    let (big, small, r) = (100.0, 1.0, 10.0);
    let rel = (cfg.g * (big + small) / r).sqrt();
    let mut s = SystemState::new(
        vec![big, small],
        vec![[-r * small / (big + small), 0.0], [r * big / (big + small), 0.0]],
        vec![[0.0, -rel * small / (big + small)], [0.0, rel * big / (big + small)]],
    )
    .unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        s = step(&s, &cfg).unwrap();
        let d = (s.positions[1][0] - s.positions[0][0]).hypot(s.positions[1][1] - s.positions[0][1]);
        worst = worst.max((d - r).abs() / r);
    }
    worst
}

fn momentum_defect() -> f64 {
    let mut rng = RandomSource::new(9, "acceptance-momentum");
    let mut worst: f64 = 0.0;
    for symplectic in [false, true] {
        let cfg = SimConfig { symplectic, satellites: 4, ..SimConfig::default() };
        for _ in 0..10 {
            let mut s = sample_orbit_system(&cfg, &mut rng).unwrap();
            let scale: f64 = s.masses.iter().zip(&s.velocities).map(|(m, v)| m * v[0].hypot(v[1])).sum();
            for _ in 0..100 {
                let t = step(&s, &cfg).unwrap();
                let (p, q) = (s.momentum(), t.momentum());
                worst = worst.max((p[0] - q[0]).hypot(p[1] - q[1]) / scale);
                s = t;
            }
        }
    }
    worst
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let setup = NbodySetup::default();
    let orig = run_nbody_experiment(&setup, EdgeScheme::Original, &SEEDS).unwrap();
    let impr = run_nbody_experiment(&setup, EdgeScheme::Improved, &SEEDS).unwrap();
    let mut ok = true;
    let mut notes = Vec::new();
    for split in ["ood_mass", "ood_distance"] {
        let (o, i) = (nbody_split(&orig, split), nbody_split(&impr, split));
        ok &= i.iter().zip(&o).all(|(i, o)| i < o);
        notes.push(format!("{split} improved {} < original {}", fmt_list(&i), fmt_list(&o)));
    }
    let momentum = momentum_defect();
    let drift = circular_drift();
    ok &= momentum < 1e-13 && drift < 1e-3;
    notes.push(format!("momentum defect {momentum:.1e} (< 1e-13), circular radius drift {drift:.1e} (< 1e-3)"));
    within(start, Duration::from_secs(1800), ok, notes.join("; "))
}

// ---------------------------------------------------------------------------
// 10: oracles and gradients

#[derive(PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

fn dijkstra(n: usize, edges: &[Edge], s: usize) -> Vec<f64> {
    let mut adj = vec![Vec::new(); n];
    for e in edges {
        adj[e.u].push((e.v, e.weight));
        adj[e.v].push((e.u, e.weight));
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    dist[s] = 0.0;
    heap.push(Item(0.0, s));
    while let Some(Item(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &adj[u] {
            if d + w < dist[v] {
                dist[v] = d + w;
                heap.push(Item(d + w, v));
            }
        }
    }
    dist
}

fn bf_matches_dijkstra(rng: &mut RandomSource) -> usize {
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.int_inclusive(2, 30);
        let p = rng.uniform(0.05, 0.6);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.bernoulli(p) {
                    edges.push(Edge { u, v, weight: rng.uniform(1.0, 10.0) });
                }
            }
        }
        let g = Graph::new(n, edges.clone()).unwrap();
        let s = rng.index(n);
        let bf = bellman_ford_table(&g, s, n - 1).unwrap().pop().unwrap();
        if bf != dijkstra(n, &edges, s) {
            mismatches += 1;
        }
    }
    mismatches
}

fn hand_wired_matches(rng: &mut RandomSource) -> usize {
    let model = hand_wired_max_degree().unwrap();
    let families = [
        GraphFamily::General,
        GraphFamily::Tree,
        GraphFamily::Path,
        GraphFamily::Cycle,
        GraphFamily::Ladder,
        GraphFamily::FourRegular,
        GraphFamily::Complete,
        GraphFamily::Expander(0.8),
    ];
    (0..100)
        .filter(|i| {
            let g = sample_graph(families[i % families.len()], (5, 40), rng).unwrap();
            let want = g.degrees().into_iter().max().unwrap() as f64;
            model.forward(&g).unwrap().get(0, 0) != want
        })
        .count()
}

fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb: f64 = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

const FD_STEP: f64 = 1e-6;

fn smallest_preactivation(model: &MlpModel, x: &Matrix) -> f64 {
    let mut a = x.clone();
    let mut smallest = f64::INFINITY;
    for (i, l) in model.layers.iter().enumerate() {
        let mut z = a.matmul(&l.weight.transpose()).unwrap();
        for r in 0..z.rows() {
            for c in 0..z.cols() {
                let b = l.bias.as_ref().map_or(0.0, |b| b[c]);
                z.set(r, c, l.scale * z.get(r, c) + b);
            }
        }
        if i + 1 < model.layers.len() {
            smallest = smallest.min(z.as_slice().iter().fold(f64::INFINITY, |m, v| m.min(v.abs())));
            z.as_mut_slice().iter_mut().for_each(|v| *v = model.activation.apply(*v));
        }
        a = z;
    }
    smallest
}

fn mlp_grad_error(activation: Activation, rng: &mut RandomSource, seed: u64) -> f64 {
    let model = MlpModel::new(&[3, 8, 8, 1], activation, InitScheme::Default, true, seed).unwrap();
    let y: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
    let x = loop {
        let x = Matrix::from_vec(6, 3, (0..18).map(|_| rng.normal()).collect()).unwrap();
        if activation != Activation::Relu || smallest_preactivation(&model, &x) > 1e-3 {
            break x;
        }
    };
    let (_, g) = grad(&model, &x, &y).unwrap();
    let analytic: Vec<f64> = g.slices().concat();
    let mut numeric = Vec::with_capacity(analytic.len());
    let mut probe = model.clone();
    let sizes: Vec<usize> = probe.params_mut().iter().map(|p| p.len()).collect();
    for (k, &len) in sizes.iter().enumerate() {
        for j in 0..len {
            let orig = probe.params_mut()[k][j];
            probe.params_mut()[k][j] = orig + FD_STEP;
            let up = grad(&probe, &x, &y).unwrap().0;
            probe.params_mut()[k][j] = orig - FD_STEP;
            let down = grad(&probe, &x, &y).unwrap().0;
            probe.params_mut()[k][j] = orig;
            numeric.push((up - down) / (2.0 * FD_STEP));
        }
    }
    rel_error(&analytic, &numeric)
}

fn gnn_test_graphs(rng: &mut RandomSource) -> Vec<Graph> {
    (0..3)
        .map(|_| {
            let g = sample_graph(GraphFamily::General, (4, 7), rng).unwrap();
            let n = g.num_nodes();
            let m = g.edges().len();
            let mut g = g;
            g.set_node_features(Matrix::from_vec(n, 2, (0..2 * n).map(|_| rng.normal()).collect()).unwrap()).unwrap();
            let attrs =
                |rng: &mut RandomSource| Matrix::from_vec(m, 1, (0..m).map(|_| rng.normal()).collect()).unwrap();
            let (uv, vu) = (attrs(rng), attrs(rng));
            g.set_edge_attrs(EdgeAttrs { uv, vu }).unwrap();
            g
        })
        .collect()
}

fn gnn_grad_error(activation: Activation, aggregation: Aggregation, readout: Readout, rng: &mut RandomSource) -> f64 {
    let config = GnnConfig {
        iterations: 2,
        aggregation,
        readout,
        hidden: 5,
        message_depth: 2,
        readout_depth: 2,
        node_dim: 2,
        edge_dim: 1,
        output_dim: 2,
        activation,
        init: InitScheme::Default,
        use_bias: true,
    };
    let model = GnnModel::new(config, rng.index(1000) as u64).unwrap();
    let graphs = gnn_test_graphs(rng);
    let refs: Vec<&Graph> = graphs.iter().collect();
    let batch = model.batch(&refs).unwrap();
    let rows = match readout {
        Readout::NodeLevel => batch.num_nodes(),
        _ => batch.num_graphs(),
    };
    let targets = Matrix::from_vec(rows, 2, (0..2 * rows).map(|_| rng.normal()).collect()).unwrap();
    let (_, g) = gnn_grad(&model, &batch, &targets).unwrap();
    let analytic: Vec<f64> = g.slices().concat();
    let mut numeric = Vec::with_capacity(analytic.len());
    let mut probe = model.clone();
    let sizes: Vec<usize> = probe.params_mut().iter().map(|p| p.len()).collect();
    for (k, &len) in sizes.iter().enumerate() {
        for j in 0..len {
            let orig = probe.params_mut()[k][j];
            probe.params_mut()[k][j] = orig + FD_STEP;
            let up = gnn_grad(&probe, &batch, &targets).unwrap().0;
            probe.params_mut()[k][j] = orig - FD_STEP;
            let down = gnn_grad(&probe, &batch, &targets).unwrap().0;
            probe.params_mut()[k][j] = orig;
            numeric.push((up - down) / (2.0 * FD_STEP));
        }
    }
    rel_error(&analytic, &numeric)
}

fn criterion_10() -> Outcome {
    let mut rng = RandomSource::new(10, "acceptance-oracles");
    let bf = bf_matches_dijkstra(&mut rng);
    let wired = hand_wired_matches(&mut rng);
    let acts = [Activation::Relu, Activation::Tanh, Activation::Cos, Activation::Quadratic];
    let mut mlp_worst: f64 = 0.0;
    for (i, &a) in acts.iter().enumerate() {
        for rep in 0..3 {
            mlp_worst = mlp_worst.max(mlp_grad_error(a, &mut rng, (10 * i + rep) as u64));
        }
    }
    let mut gnn_worst: f64 = 0.0;
    for a in [Activation::Relu, Activation::Tanh] {
        for agg in [Aggregation::Sum, Aggregation::Min, Aggregation::Max] {
            for r in [Readout::Sum, Readout::Min, Readout::Max, Readout::NodeLevel] {
                gnn_worst = gnn_worst.max(gnn_grad_error(a, agg, r, &mut rng));
            }
        }
    }
    outcome(
        bf == 0 && wired == 0 && mlp_worst < 1e-4 && gnn_worst < 1e-4,
        format!(
            "Bellman-Ford vs Dijkstra mismatches {bf}/1000, hand-wired max degree mismatches {wired}/100, \
             gradient rel error MLP {mlp_worst:.1e} GNN {gnn_worst:.1e} (< 1e-4)"
        ),
    )
}

fn main() {
    let criteria: [(usize, fn() -> Outcome); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let only: Vec<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = 0;
    for (n, run) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n}: {tag} {} [{:.1}s]", o.detail, t.elapsed().as_secs_f64());
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
