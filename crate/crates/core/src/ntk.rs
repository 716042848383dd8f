//! Closed-form neural tangent kernel of an infinitely wide two-layer ReLU
//! network, exact kernel regression, and the graph-level rank diagnostic.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::graphgen::{degree_profile, Graph};
use crate::numerics::{dot, norm2, numerical_rank, singular_values, solve_spd_detailed, Matrix, RandomSource};
use crate::{Error, Result};

/// Kernel scale `c` and whether inputs get a constant `1` appended (a bias coordinate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub c: f64,
    pub augment_bias: bool,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self { c: 1.0, augment_bias: false }
    }
}

impl KernelSpec {
    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::InvalidArgument(format!("kernel scale c = {}", self.c)));
        }
        Ok(())
    }

    fn lift(&self, x: &[f64]) -> Vec<f64> {
        let mut v = x.to_vec();
        if self.augment_bias {
            v.push(1.0);
        }
        v
    }
}

fn angle(x: &[f64], nx: f64, y: &[f64], ny: f64) -> f64 {
    // 2 atan2(|u - v|, |u + v|) stays accurate near 0 and pi, unlike acos.
    let (mut diff, mut sum) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (u, v) = (a / nx, b / ny);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    (2.0 * diff.sqrt().atan2(sum.sqrt())).clamp(0.0, PI)
}

fn ntk_lifted(x: &[f64], y: &[f64], c: f64) -> Result<f64> {
    let (nx, ny) = (norm2(x), norm2(y));
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::InvalidArgument("kernel is undefined for a zero input".into()));
    }
    let theta = angle(x, nx, y, ny);
    let first = dot(x, y) * (PI - theta) / (2.0 * PI);
    let second = nx * ny * (theta.sin() + (PI - theta) * theta.cos()) / (2.0 * PI);
    Ok(c * (first + second))
}

/// Two-layer ReLU NTK:
/// `c * [ (x.x')(pi - theta)/(2 pi) + |x||x'| (sin theta + (pi - theta) cos theta)/(2 pi) ]`.
pub fn ntk2_relu(x: &[f64], x2: &[f64], spec: &KernelSpec) -> Result<f64> {
    spec.validate()?;
    if x.len() != x2.len() {
        return Err(Error::Dimension(format!("{} vs {}", x.len(), x2.len())));
    }
    ntk_lifted(&spec.lift(x), &spec.lift(x2), spec.c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Sample average of `x.x' 1[w.x>=0] 1[w.x'>=0] + (w.x)(w.x') 1[w.x>=0] 1[w.x'>=0]`
/// over `w ~ N(0, I)`, times `c`.
pub fn ntk_mc_oracle(
    x: &[f64],
    x2: &[f64],
    spec: &KernelSpec,
    samples: usize,
    rng: &mut RandomSource,
) -> Result<MonteCarloEstimate> {
    spec.validate()?;
    if x.len() != x2.len() {
        return Err(Error::Dimension(format!("{} vs {}", x.len(), x2.len())));
    }
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let (a, b) = (spec.lift(x), spec.lift(x2));
    let xx = dot(&a, &b);
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..samples {
        let (mut wa, mut wb) = (0.0, 0.0);
        for (ai, bi) in a.iter().zip(&b) {
            let w = rng.normal();
            wa += w * ai;
            wb += w * bi;
        }
        let v = if wa >= 0.0 && wb >= 0.0 { xx + wa * wb } else { 0.0 };
        s1 += v;
        s2 += v * v;
    }
    let n = samples as f64;
    let mean = s1 / n;
    let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(MonteCarloEstimate { mean: spec.c * mean, std_error: spec.c * (var / n).sqrt() })
}

/// Gram matrix over the rows of `x`.
pub fn kernel_matrix(spec: &KernelSpec, x: &Matrix) -> Result<Matrix> {
    spec.validate()?;
    let lifted: Vec<Vec<f64>> = x.row_iter().map(|r| spec.lift(r)).collect();
    let n = lifted.len();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = ntk_lifted(&lifted[i], &lifted[j], spec.c)?;
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    Ok(k)
}

/// Minimum-norm interpolant `f(x) = sum_i alpha_i K(x, x_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelPredictor {
    pub spec: KernelSpec,
    pub train_inputs: Matrix,
    pub alpha: Vec<f64>,
    /// Diagonal jitter the solver needed (0 when the Gram matrix factored as is).
    pub jitter: f64,
    pub residual: f64,
}

const DUPLICATE_TOL: f64 = 1e-12;

fn find_duplicate_inputs(x: &Matrix) -> Option<(usize, usize)> {
    let scale = x.max_abs().max(1.0);
    let n = x.rows();
    for i in 0..n {
        for j in (i + 1)..n {
            let close = x.row(i).iter().zip(x.row(j)).all(|(a, b)| (a - b).abs() <= DUPLICATE_TOL * scale);
            if close {
                return Some((i, j));
            }
        }
    }
    None
}

fn find_duplicate_rows(k: &Matrix) -> Option<(usize, usize)> {
    let scale = k.max_abs().max(f64::MIN_POSITIVE);
    let n = k.rows();
    for i in 0..n {
        for j in (i + 1)..n {
            let close = k.row(i).iter().zip(k.row(j)).all(|(a, b)| (a - b).abs() <= DUPLICATE_TOL * scale);
            if close {
                return Some((i, j));
            }
        }
    }
    None
}

/// Solves `K alpha = y` exactly; duplicate inputs are reported rather than regularized away.
pub fn kernel_regress(spec: &KernelSpec, x: &Matrix, y: &[f64]) -> Result<KernelPredictor> {
    spec.validate()?;
    if x.rows() != y.len() {
        return Err(Error::Dimension(format!("{} inputs for {} labels", x.rows(), y.len())));
    }
    if x.rows() == 0 {
        return Err(Error::InvalidArgument("kernel regression on an empty set".into()));
    }
    if let Some((first, second)) = find_duplicate_inputs(x) {
        return Err(Error::SingularKernel { first, second });
    }
    let k = kernel_matrix(spec, x)?;
    let rhs = Matrix::column(y);
    match solve_spd_detailed(&k, &rhs) {
        Ok(sol) => Ok(KernelPredictor {
            spec: *spec,
            train_inputs: x.clone(),
            alpha: sol.solution.into_vec(),
            jitter: sol.jitter,
            residual: sol.residual,
        }),
        Err(e) => match find_duplicate_rows(&k) {
            Some((first, second)) => Err(Error::SingularKernel { first, second }),
            None => Err(e),
        },
    }
}

impl KernelPredictor {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.train_inputs.cols() {
            return Err(Error::Dimension(format!(
                "query dimension {} but trained on {}",
                x.len(),
                self.train_inputs.cols()
            )));
        }
        let q = self.spec.lift(x);
        let mut acc = 0.0;
        for (row, a) in self.train_inputs.row_iter().zip(&self.alpha) {
            acc += a * ntk_lifted(&q, &self.spec.lift(row), self.spec.c)?;
        }
        Ok(acc)
    }

    pub fn predict_batch(&self, x: &Matrix) -> Result<Vec<f64>> {
        x.row_iter().map(|r| self.predict(r)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Fits the NTK on `{+-s Q e_i}` with linear labels `beta.x` and returns the largest
/// absolute error over `n_test` points uniform in the cube of half-width `test_scale * s`.
pub fn exact_extrapolation_check(
    beta: &[f64],
    q: &Matrix,
    s: f64,
    n_test: usize,
    test_scale: f64,
    rng: &mut RandomSource,
) -> Result<f64> {
    let d = beta.len();
    if q.rows() != d || q.cols() != d {
        return Err(Error::Dimension(format!("basis is {}x{} for dimension {d}", q.rows(), q.cols())));
    }
    if !(s > 0.0) || !(test_scale > 0.0) {
        return Err(Error::InvalidArgument("scales must be positive".into()));
    }
    let mut x = Matrix::zeros(2 * d, d);
    for i in 0..d {
        for r in 0..d {
            x.set(2 * i, r, s * q.get(r, i));
            x.set(2 * i + 1, r, -s * q.get(r, i));
        }
    }
    let y: Vec<f64> = x.row_iter().map(|r| dot(beta, r)).collect();
    let model = kernel_regress(&KernelSpec::default(), &x, &y)?;
    let half = test_scale * s;
    let mut worst: f64 = 0.0;
    let mut point = vec![0.0; d];
    for _ in 0..n_test {
        point.iter_mut().for_each(|v| *v = rng.uniform(-half, half));
        let err = (model.predict(&point)? - dot(beta, &point)).abs();
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Max/min degree of a graph and the number of nodes attaining each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeProfile {
    pub max_degree: usize,
    pub min_degree: usize,
    pub n_max: usize,
    pub n_min: usize,
}

impl DegreeProfile {
    /// `(g, g', g N_max, g' N_min)`.
    pub fn feature_row(&self) -> [f64; 4] {
        let (g, gp) = (self.max_degree as f64, self.min_degree as f64);
        [g, gp, g * self.n_max as f64, gp * self.n_min as f64]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub rank: usize,
    pub singular_values: Vec<f64>,
    pub profiles: Vec<DegreeProfile>,
}

/// Relative singular-value cutoff used for numerical rank.
pub const RANK_TOL: f64 = 1e-8;

/// Rank of the stacked degree-profile rows. Full rank (4) is the condition under which
/// a sum-aggregation GNTK extrapolates max degree exactly.
pub fn gntk_condition_rank(graphs: &[Graph]) -> Result<RankReport> {
    if graphs.is_empty() {
        return Err(Error::InvalidArgument("rank of an empty graph set".into()));
    }
    let profiles = graphs.iter().map(degree_profile).collect::<Result<Vec<_>>>()?;
    let mut m = Matrix::zeros(profiles.len(), 4);
    for (i, p) in profiles.iter().enumerate() {
        m.row_mut(i).copy_from_slice(&p.feature_row());
    }
    Ok(RankReport { rank: numerical_rank(&m, RANK_TOL), singular_values: singular_values(&m), profiles })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphgen::{sample_graph, GraphFamily};
    use crate::numerics::random_orthogonal;
    use proptest::prelude::*;

    fn e(d: usize, i: usize) -> Vec<f64> {
        (0..d).map(|j| if j == i { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn closed_form_spot_values() {
        let spec = KernelSpec::default();
        let e1 = e(3, 0);
        let e2 = e(3, 1);
        assert!((ntk2_relu(&e1, &e1, &spec).unwrap() - 1.0).abs() < 1e-15);
        assert!((ntk2_relu(&e1, &e2, &spec).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-15);
        let neg: Vec<f64> = e1.iter().map(|v| -v).collect();
        assert!(ntk2_relu(&e1, &neg, &spec).unwrap().abs() < 1e-15);
        assert!(ntk2_relu(&e1, &[0.0; 3], &spec).is_err());
        assert!(ntk2_relu(&e1, &[1.0], &spec).is_err());
        assert!(ntk2_relu(&e1, &e1, &KernelSpec { c: 0.0, augment_bias: false }).is_err());
    }

    #[test]
    fn monte_carlo_spot_values() {
        let spec = KernelSpec::default();
        let mut rng = RandomSource::new(1, "mc-spot");
        let e1 = e(2, 0);
        let e2 = e(2, 1);
        for (a, b, expect) in [(&e1, &e1, 1.0), (&e1, &e2, 1.0 / (2.0 * PI))] {
            let est = ntk_mc_oracle(a, b, &spec, 200_000, &mut rng).unwrap();
            assert!((est.mean - expect).abs() < 3.0 * est.std_error, "{est:?} vs {expect}");
        }
    }

    #[test]
    fn closed_form_matches_monte_carlo() {
        // Error measured on the normalized kernel K / (|x||x'|), i.e. relative to the
        // Cauchy-Schwarz bound sqrt(K(x,x) K(x',x')); raw relative error is ill-posed
        // for near-antipodal pairs where K crosses zero.
        let spec = KernelSpec::default();
        let mut rng = RandomSource::new(2, "mc-pairs");
        for _ in 0..20 {
            let d = 1 + rng.index(16);
            let x = rng.normal_vec(d);
            let y = rng.normal_vec(d);
            let cf = ntk2_relu(&x, &y, &spec).unwrap();
            let mc = ntk_mc_oracle(&x, &y, &spec, 100_000, &mut rng).unwrap();
            let bound = norm2(&x) * norm2(&y);
            assert!((cf - mc.mean).abs() / bound < 2e-2, "d={d} cf={cf} mc={mc:?}");
        }
    }

    /// Symmetric eigenvalues by cyclic Jacobi rotations.
    fn jacobi_eigenvalues(a: &Matrix) -> Vec<f64> {
        let n = a.rows();
        let mut m = a.clone();
        for _ in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| m.get(i, j).powi(2))
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = m.get(p, q);
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (mkp, mkq) = (m.get(k, p), m.get(k, q));
                        m.set(k, p, c * mkp - s * mkq);
                        m.set(k, q, s * mkp + c * mkq);
                    }
                    for k in 0..n {
                        let (mpk, mqk) = (m.get(p, k), m.get(q, k));
                        m.set(p, k, c * mpk - s * mqk);
                        m.set(q, k, s * mpk + c * mqk);
                    }
                }
            }
        }
        (0..n).map(|i| m.get(i, i)).collect()
    }

    #[test]
    fn gram_matrices_are_psd() {
        let mut rng = RandomSource::new(3, "psd");
        for trial in 0..100 {
            let n = 2 + rng.index(29);
            let d = 1 + rng.index(6);
            let mut x = Matrix::zeros(n, d);
            x.as_mut_slice().iter_mut().for_each(|v| *v = rng.normal());
            let spec = KernelSpec { c: 1.0, augment_bias: trial % 2 == 0 };
            let k = kernel_matrix(&spec, &x).unwrap();
            assert_eq!(k.max_asymmetry(), 0.0);
            let eig = jacobi_eigenvalues(&k);
            let top = eig.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let low = eig.iter().fold(f64::INFINITY, |m, &v| m.min(v));
            assert!(low >= -1e-10 * top, "trial {trial}: {low} vs {top}");
        }
    }

    #[test]
    fn exact_extrapolation_on_orthogonal_basis() {
        let mut rng = RandomSource::new(4, "exact");
        for d in [2, 8] {
            for _ in 0..5 {
                let q = random_orthogonal(d, &mut rng).unwrap();
                let beta = rng.normal_vec(d);
                let err = exact_extrapolation_check(&beta, &q, 1.0, 500, 10.0, &mut rng).unwrap();
                assert!(err < 1e-6, "d={d} err={err}");
            }
        }
    }

    #[test]
    fn regression_interpolates_training_points() {
        let mut rng = RandomSource::new(5, "interp");
        let mut x = Matrix::zeros(40, 3);
        x.as_mut_slice().iter_mut().for_each(|v| *v = rng.uniform(-1.0, 1.0));
        let y: Vec<f64> = x.row_iter().map(|r| r[0] * r[1] + r[2]).collect();
        for augment_bias in [false, true] {
            let spec = KernelSpec { c: 1.0, augment_bias };
            let m = kernel_regress(&spec, &x, &y).unwrap();
            for (row, yi) in x.row_iter().zip(&y) {
                assert!((m.predict(row).unwrap() - yi).abs() < 1e-7);
            }
            let back = KernelPredictor::from_json(&m.to_json().unwrap()).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn duplicates_are_reported() {
        let x = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.2, 0.3], vec![1.0, 0.5]]).unwrap();
        let err = kernel_regress(&KernelSpec::default(), &x, &[1.0, 2.0, 3.0]).unwrap_err();
        assert!(matches!(err, Error::SingularKernel { first: 0, second: 2 }));
        let near = Matrix::from_rows(&[vec![1.0, 0.5], vec![1.0 + 1e-14, 0.5]]).unwrap();
        assert!(matches!(
            kernel_regress(&KernelSpec::default(), &near, &[0.0, 1.0]),
            Err(Error::SingularKernel { .. })
        ));
    }

    #[test]
    fn rank_condition_by_family() {
        let mut rng = RandomSource::new(6, "rank");
        let paths: Vec<Graph> = (0..30).map(|_| sample_graph(GraphFamily::Path, (3, 40), &mut rng).unwrap()).collect();
        assert_eq!(gntk_condition_rank(&paths).unwrap().rank, 2);
        let general: Vec<Graph> =
            (0..100).map(|_| sample_graph(GraphFamily::General, (20, 30), &mut rng).unwrap()).collect();
        assert_eq!(gntk_condition_rank(&general).unwrap().rank, 4);
        assert!(gntk_condition_rank(&[]).is_err());
    }

    #[test]
    fn linear_trend_depends_on_training_directions() {
        // Training on the full cube pins the linear target in every direction; keeping
        // the first two coordinates positive leaves the negative orthant unconstrained.
        let d = 2;
        let n = 500;
        let mut rng = RandomSource::new(7, "trend");
        let beta = [1.0, -0.5];
        let target = |r: &[f64]| dot(&beta, r);
        let spec = KernelSpec { c: 1.0, augment_bias: false };
        let fit = |pos_only: bool, rng: &mut RandomSource| {
            let mut x = Matrix::zeros(n, d);
            for i in 0..n {
                for j in 0..d {
                    let v: f64 = rng.uniform(-1.0, 1.0);
                    x.set(i, j, if pos_only { v.abs() } else { v });
                }
            }
            let y: Vec<f64> = x.row_iter().map(target).collect();
            kernel_regress(&spec, &x, &y).unwrap()
        };
        let all = fit(false, &mut rng);
        let pos = fit(true, &mut rng);
        let mape = |m: &KernelPredictor, rng: &mut RandomSource| {
            let mut tot = 0.0;
            let mut cnt = 0;
            while cnt < 500 {
                let p = [rng.uniform(-5.0, -2.0), rng.uniform(-5.0, -2.0)];
                let y = target(&p);
                if y.abs() < 0.5 {
                    continue;
                }
                tot += ((m.predict(&p).unwrap() - y) / y).abs();
                cnt += 1;
            }
            tot / cnt as f64
        };
        let e_all = mape(&all, &mut rng);
        let e_pos = mape(&pos, &mut rng);
        assert!(e_all < 0.01, "{e_all}");
        assert!(e_pos >= 10.0 * e_all, "{e_pos} vs {e_all}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn kernel_is_symmetric(x in prop::collection::vec(-5.0f64..5.0, 1..8), seed in 0u64..1000) {
            let mut rng = RandomSource::new(seed, "sym");
            let y: Vec<f64> = (0..x.len()).map(|_| rng.normal()).collect();
            prop_assume!(norm2(&x) > 1e-6);
            for spec in [KernelSpec::default(), KernelSpec { c: 2.5, augment_bias: true }] {
                prop_assert_eq!(ntk2_relu(&x, &y, &spec).unwrap(), ntk2_relu(&y, &x, &spec).unwrap());
            }
        }

        #[test]
        fn predictions_do_not_depend_on_c(seed in 0u64..200) {
            let mut rng = RandomSource::new(seed, "scale");
            let mut x = Matrix::zeros(25, 3);
            x.as_mut_slice().iter_mut().for_each(|v| *v = rng.uniform(-1.0, 1.0));
            let y: Vec<f64> = (0..25).map(|_| rng.normal()).collect();
            let a = kernel_regress(&KernelSpec { c: 1.0, augment_bias: true }, &x, &y).unwrap();
            let b = kernel_regress(&KernelSpec { c: 2.0, augment_bias: true }, &x, &y).unwrap();
            for _ in 0..10 {
                let q = [rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)];
                let (pa, pb) = (a.predict(&q).unwrap(), b.predict(&q).unwrap());
                prop_assert!((pa - pb).abs() <= 1e-9 * pa.abs().max(1.0));
            }
        }
    }
}
