//! Synthetic regression datasets: target functions, training-domain geometries
//! (including direction-restricted supports) and train/validation/test splits.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numerics::{norm2, Matrix, RandomSource};
use crate::{Error, Result};

/// Default value used by [`Restriction::FixFirst`] in the preset geometries.
pub const FIX_FIRST_DEFAULT: f64 = 0.1;

const REJECTION_MIN_RATE: f64 = 1e-4;
const REJECTION_WARMUP: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetFunction {
    /// `x^T A x`
    Quadratic { a: Matrix },
    /// `sum_i cos(2 pi x_i)`
    Cos,
    /// `sum_i sqrt(x_i)`, nonnegative inputs only
    Sqrt,
    /// `sum_i |x_i|`
    L1,
    /// `beta^T x + bias`
    Linear { beta: Vec<f64>, bias: f64 },
    /// `sum_i tanh(x_i)`
    Tanh,
}

impl TargetFunction {
    /// Quadratic form with entries of `A` uniform on `[-1, 1]`.
    pub fn random_quadratic(d: usize, rng: &mut RandomSource) -> Self {
        let mut a = Matrix::zeros(d, d);
        a.as_mut_slice().iter_mut().for_each(|v| *v = rng.uniform(-1.0, 1.0));
        TargetFunction::Quadratic { a }
    }

    pub fn identity_quadratic(d: usize) -> Self {
        TargetFunction::Quadratic { a: Matrix::identity(d) }
    }

    /// Linear map with coefficients uniform on `[-scale, scale]` and no bias.
    pub fn random_linear(d: usize, scale: f64, rng: &mut RandomSource) -> Self {
        TargetFunction::Linear { beta: (0..d).map(|_| rng.uniform(-scale, scale)).collect(), bias: 0.0 }
    }

    /// Fixed input dimension, if the target has one.
    pub fn dim(&self) -> Option<usize> {
        match self {
            TargetFunction::Quadratic { a } => Some(a.rows()),
            TargetFunction::Linear { beta, .. } => Some(beta.len()),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TargetFunction::Quadratic { .. } => "quadratic",
            TargetFunction::Cos => "cos",
            TargetFunction::Sqrt => "sqrt",
            TargetFunction::L1 => "l1",
            TargetFunction::Linear { .. } => "linear",
            TargetFunction::Tanh => "tanh",
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            TargetFunction::Quadratic { a } => {
                if !a.is_square() || !a.is_finite() {
                    return Err(Error::InvalidArgument("quadratic target needs a finite square matrix".into()));
                }
            }
            TargetFunction::Linear { beta, bias } if (!beta.iter().all(|v| v.is_finite()) || !bias.is_finite()) => {
                return Err(Error::InvalidArgument("linear target coefficients must be finite".into()));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Evaluates the target at `x`.
pub fn eval_target(f: &TargetFunction, x: &[f64]) -> Result<f64> {
    if let Some(d) = f.dim() {
        if d != x.len() {
            return Err(Error::Dimension(format!(
                "{} target of dimension {d} evaluated at a {}-vector",
                f.name(),
                x.len()
            )));
        }
    }
    let y = match f {
        TargetFunction::Quadratic { a } => {
            let mut s = 0.0;
            for (i, xi) in x.iter().enumerate() {
                let row = a.row(i);
                s += xi * row.iter().zip(x).map(|(aij, xj)| aij * xj).sum::<f64>();
            }
            s
        }
        TargetFunction::Cos => x.iter().map(|v| (2.0 * std::f64::consts::PI * v).cos()).sum(),
        TargetFunction::Sqrt => {
            if let Some(v) = x.iter().find(|v| **v < 0.0) {
                return Err(Error::InvalidArgument(format!("sqrt target at negative coordinate {v}")));
            }
            x.iter().map(|v| v.sqrt()).sum()
        }
        TargetFunction::L1 => x.iter().map(|v| v.abs()).sum(),
        TargetFunction::Linear { beta, bias } => beta.iter().zip(x).map(|(b, v)| b * v).sum::<f64>() + bias,
        TargetFunction::Tanh => x.iter().map(|v| v.tanh()).sum(),
    };
    Ok(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// `[-a, a]^d`, or `[0, 2a]^d` for nonnegative domains.
    HyperCube {
        half_width: f64,
    },
    Sphere {
        radius: f64,
    },
    /// Radius uniform on `[0, r]`, then a uniform direction (not volume-uniform).
    Ball {
        radius: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Restriction {
    None,
    FixFirst(f64),
    PositiveFirstK(usize),
    NegativeFirstK(usize),
}

/// Geometry a dataset is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub shape: Shape,
    pub restriction: Restriction,
    pub dim: usize,
    /// Shifts cubes to `[0, 2a]^d` and folds spheres/balls into the positive orthant.
    #[serde(default)]
    pub nonnegative: bool,
}

impl DomainSpec {
    pub fn cube(dim: usize, half_width: f64) -> Self {
        Self { shape: Shape::HyperCube { half_width }, restriction: Restriction::None, dim, nonnegative: false }
    }

    pub fn sphere(dim: usize, radius: f64) -> Self {
        Self { shape: Shape::Sphere { radius }, restriction: Restriction::None, dim, nonnegative: false }
    }

    pub fn ball(dim: usize, radius: f64) -> Self {
        Self { shape: Shape::Ball { radius }, restriction: Restriction::None, dim, nonnegative: false }
    }

    pub fn with_restriction(mut self, restriction: Restriction) -> Self {
        self.restriction = restriction;
        self
    }

    pub fn nonnegative(mut self) -> Self {
        self.nonnegative = true;
        self
    }

    /// Half-width or radius.
    pub fn scale(&self) -> f64 {
        match self.shape {
            Shape::HyperCube { half_width } => half_width,
            Shape::Sphere { radius } | Shape::Ball { radius } => radius,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidArgument("domain dimension must be >= 1".into()));
        }
        let s = self.scale();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::InvalidArgument(format!("domain scale must be positive and finite, got {s}")));
        }
        match self.restriction {
            Restriction::None => {}
            Restriction::FixFirst(v) => {
                if !v.is_finite() {
                    return Err(Error::InvalidArgument("fixed coordinate must be finite".into()));
                }
                let (lo, hi) = self.coordinate_range();
                if v < lo || v > hi {
                    return Err(Error::InvalidArgument(format!("fixed coordinate {v} outside [{lo}, {hi}]")));
                }
            }
            Restriction::PositiveFirstK(k) | Restriction::NegativeFirstK(k) => {
                if k > self.dim {
                    return Err(Error::InvalidArgument(format!(
                        "restriction on {k} coordinates of a {}-dimensional domain",
                        self.dim
                    )));
                }
                if self.nonnegative && matches!(self.restriction, Restriction::NegativeFirstK(k) if k > 0) {
                    return Err(Error::InvalidArgument("negative restriction on a nonnegative domain".into()));
                }
            }
        }
        Ok(())
    }

    /// Range a single coordinate can take ignoring restrictions.
    fn coordinate_range(&self) -> (f64, f64) {
        let s = self.scale();
        match (self.shape, self.nonnegative) {
            (Shape::HyperCube { .. }, true) => (0.0, 2.0 * s),
            (_, true) => (0.0, s),
            _ => (-s, s),
        }
    }

    /// Membership test with relative tolerance `tol` (scaled by the domain size).
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dim {
            return false;
        }
        let s = self.scale();
        let eps = tol * s.max(1.0);
        if self.nonnegative && x.iter().any(|v| *v < -eps) {
            return false;
        }
        let in_shape = match self.shape {
            Shape::HyperCube { half_width } => {
                let (lo, hi) = if self.nonnegative { (0.0, 2.0 * half_width) } else { (-half_width, half_width) };
                x.iter().all(|v| *v >= lo - eps && *v <= hi + eps)
            }
            Shape::Sphere { radius } => (norm2(x) - radius).abs() <= eps,
            Shape::Ball { radius } => norm2(x) <= radius + eps,
        };
        if !in_shape {
            return false;
        }
        match self.restriction {
            Restriction::None => true,
            Restriction::FixFirst(v) => (x[0] - v).abs() <= eps,
            Restriction::PositiveFirstK(k) => x[..k].iter().all(|v| *v >= -eps),
            Restriction::NegativeFirstK(k) => x[..k].iter().all(|v| *v <= eps),
        }
    }
}

impl fmt::Display for DomainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.shape {
            Shape::HyperCube { half_width } => write!(f, "cube(a={half_width})")?,
            Shape::Sphere { radius } => write!(f, "sphere(r={radius})")?,
            Shape::Ball { radius } => write!(f, "ball(r={radius})")?,
        }
        write!(f, ",d={}", self.dim)?;
        match self.restriction {
            Restriction::None => {}
            Restriction::FixFirst(v) => write!(f, ",fix1={v}")?,
            Restriction::PositiveFirstK(k) => write!(f, ",pos{k}")?,
            Restriction::NegativeFirstK(k) => write!(f, ",neg{k}")?,
        }
        if self.nonnegative {
            write!(f, ",nonneg")?;
        }
        Ok(())
    }
}

fn unit_direction(d: usize, rng: &mut RandomSource) -> Vec<f64> {
    loop {
        let q = rng.normal_vec(d);
        let n = norm2(&q);
        if n > 0.0 {
            return q.into_iter().map(|v| v / n).collect();
        }
    }
}

/// One point on the shape, restriction applied by construction where possible.
fn draw_point(spec: &DomainSpec, rng: &mut RandomSource) -> Vec<f64> {
    let d = spec.dim;
    match spec.shape {
        Shape::HyperCube { half_width: a } => {
            let (lo, hi) = if spec.nonnegative { (0.0, 2.0 * a) } else { (-a, a) };
            let mut x: Vec<f64> = (0..d).map(|_| rng.uniform(lo, hi)).collect();
            match spec.restriction {
                Restriction::None => {}
                Restriction::FixFirst(v) => x[0] = v,
                Restriction::PositiveFirstK(k) => {
                    let top = if spec.nonnegative { 2.0 * a } else { a };
                    x[..k].iter_mut().for_each(|v| *v = rng.uniform(0.0, top));
                }
                Restriction::NegativeFirstK(k) => {
                    x[..k].iter_mut().for_each(|v| *v = rng.uniform(-a, 0.0));
                }
            }
            x
        }
        Shape::Sphere { radius } | Shape::Ball { radius } => {
            let r = match spec.shape {
                Shape::Ball { .. } => rng.uniform(0.0, radius),
                _ => radius,
            };
            let mut x = match spec.restriction {
                Restriction::FixFirst(v) if d > 1 => {
                    // first coordinate pinned, remainder on the slice of radius sqrt(r^2 - v^2)
                    let rest_r = match spec.shape {
                        Shape::Ball { .. } => rng.uniform(0.0, (radius * radius - v * v).max(0.0).sqrt()),
                        _ => (r * r - v * v).max(0.0).sqrt(),
                    };
                    let dir = unit_direction(d - 1, rng);
                    std::iter::once(v).chain(dir.into_iter().map(|t| t * rest_r)).collect()
                }
                Restriction::FixFirst(v) => vec![v],
                _ => unit_direction(d, rng).into_iter().map(|t| t * r).collect::<Vec<_>>(),
            };
            if spec.nonnegative {
                x.iter_mut().for_each(|v| *v = v.abs());
            }
            x
        }
    }
}

fn needs_rejection(spec: &DomainSpec) -> bool {
    !matches!(spec.shape, Shape::HyperCube { .. })
        && matches!(
            spec.restriction,
            Restriction::PositiveFirstK(k) | Restriction::NegativeFirstK(k) if k > 0
        )
}

/// Samples `n` points from the domain, one per row.
pub fn sample_domain(spec: &DomainSpec, n: usize, rng: &mut RandomSource) -> Result<Matrix> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be >= 1".into()));
    }
    let mut data = Vec::with_capacity(n * spec.dim);
    if !needs_rejection(spec) {
        for _ in 0..n {
            data.extend(draw_point(spec, rng));
        }
        return Matrix::from_vec(n, spec.dim, data);
    }
    let (mut accepted, mut attempts) = (0usize, 0usize);
    while accepted < n {
        let x = draw_point(spec, rng);
        attempts += 1;
        if spec.contains(&x, 0.0) {
            data.extend(x);
            accepted += 1;
        } else if attempts >= REJECTION_WARMUP && (accepted as f64) / (attempts as f64) < REJECTION_MIN_RATE {
            return Err(Error::Sampling(format!(
                "rejection sampling for {spec} accepted {accepted} of {attempts} draws"
            )));
        }
    }
    Matrix::from_vec(n, spec.dim, data)
}

/// Sampled inputs with their exact labels and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSet {
    pub inputs: Matrix,
    pub labels: Vec<f64>,
    pub domain: DomainSpec,
    pub target: TargetFunction,
}

impl LabeledSet {
    pub fn generate(target: &TargetFunction, domain: &DomainSpec, n: usize, rng: &mut RandomSource) -> Result<Self> {
        target.validate()?;
        if let Some(d) = target.dim() {
            if d != domain.dim {
                return Err(Error::Dimension(format!(
                    "target of dimension {d} on a {}-dimensional domain",
                    domain.dim
                )));
            }
        }
        if matches!(target, TargetFunction::Sqrt) && !domain.nonnegative {
            return Err(Error::InvalidArgument("sqrt target requires a nonnegative domain".into()));
        }
        let inputs = sample_domain(domain, n, rng)?;
        let labels = inputs.row_iter().map(|x| eval_target(target, x)).collect::<Result<Vec<_>>>()?;
        Ok(Self { inputs, labels, domain: *domain, target: target.clone() })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    /// Checks domain membership and label consistency for every example.
    pub fn validate(&self) -> Result<()> {
        if self.inputs.rows() != self.labels.len() {
            return Err(Error::Dimension(format!("{} inputs for {} labels", self.inputs.rows(), self.labels.len())));
        }
        for (i, (x, &y)) in self.inputs.row_iter().zip(&self.labels).enumerate() {
            if !self.domain.contains(x, 1e-12) {
                return Err(Error::InvalidArgument(format!("example {i} lies outside {}", self.domain)));
            }
            if eval_target(&self.target, x)? != y {
                return Err(Error::InvalidArgument(format!("example {i} label does not match the target")));
            }
        }
        Ok(())
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledSet {
        LabeledSet {
            inputs: self.inputs.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            domain: self.domain,
            target: self.target.clone(),
        }
    }

    /// Writes `x0,...,x{d-1},y` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let d = self.dim();
        let mut header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for (x, y) in self.inputs.row_iter().zip(&self.labels) {
            let rec: Vec<String> = x.iter().chain(std::iter::once(y)).map(|v| format!("{v:?}")).collect();
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads inputs/labels written by [`write_csv`](Self::write_csv).
    pub fn read_csv(path: &Path) -> Result<(Matrix, Vec<f64>)> {
        let mut r = csv::Reader::from_path(path)?;
        let d = r.headers()?.len().saturating_sub(1);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != d + 1 {
                return Err(Error::Parse(format!("row with {} fields", vals.len())));
            }
            labels.push(vals[d]);
            data.extend_from_slice(&vals[..d]);
        }
        Ok((Matrix::from_vec(labels.len(), d, data)?, labels))
    }

    /// Key-value sidecar describing how the set was produced.
    pub fn write_metadata(&self, path: &Path, seed: u64) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "target={}", self.target.name())?;
        writeln!(f, "target_json={}", serde_json::to_string(&self.target)?)?;
        writeln!(f, "domain={}", self.domain)?;
        writeln!(f, "domain_json={}", serde_json::to_string(&self.domain)?)?;
        writeln!(f, "n={}", self.len())?;
        writeln!(f, "dim={}", self.dim())?;
        writeln!(f, "seed={seed}")?;
        Ok(())
    }
}

/// Train, validation and test sets.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: LabeledSet,
    pub val: LabeledSet,
    pub test: LabeledSet,
}

/// Validation shares the training geometry; each split has its own RNG stream.
pub fn make_splits(
    target: &TargetFunction,
    train_spec: &DomainSpec,
    test_spec: &DomainSpec,
    n_train: usize,
    n_val: usize,
    n_test: usize,
    rng: &RandomSource,
) -> Result<Splits> {
    if train_spec.dim != test_spec.dim {
        return Err(Error::Dimension("train and test domains differ in dimension".into()));
    }
    let train = LabeledSet::generate(target, train_spec, n_train, &mut rng.derive("train"))?;
    let val = LabeledSet::generate(target, train_spec, n_val, &mut rng.derive("val"))?;
    let test = LabeledSet::generate(target, test_spec, n_test, &mut rng.derive("test"))?;
    Ok(Splits { train, val, test })
}
