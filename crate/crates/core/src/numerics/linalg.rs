use super::matrix::{gemm, norm2, Matrix};
use super::rng::RandomSource;
use crate::{Error, Result};

/// Relative diagonal jitter ladder tried when plain Cholesky fails.
const JITTER_LADDER: [f64; 8] = [0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];
const SYMMETRY_TOL: f64 = 1e-10;
const RESIDUAL_TOL: f64 = 1e-8;
const REFINE_STEPS: usize = 4;

/// Lower-triangular Cholesky factor `A + jitter*s*I = L L^T`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    factor: Matrix,
    jitter: f64,
}

impl Cholesky {
    /// Factorizes without jitter; `None` when a pivot is not positive.
    pub fn factorize(a: &Matrix) -> Option<Self> {
        Self::factorize_shifted(a, 0.0)
    }

    fn factorize_shifted(a: &Matrix, shift: f64) -> Option<Self> {
        let n = a.rows();
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = a.get(j, j) + shift;
            let lj = l.row(j);
            d -= lj[..j].iter().map(|v| v * v).sum::<f64>();
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            l.set(j, j, d);
            for i in (j + 1)..n {
                let (ri, rj) = (l.row(i), l.row(j));
                let s: f64 = ri[..j].iter().zip(&rj[..j]).map(|(x, y)| x * y).sum();
                let v = (a.get(i, j) - s) / d;
                l.set(i, j, v);
            }
        }
        Some(Self { factor: l, jitter: shift })
    }

    /// Absolute diagonal shift that was applied.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn factor(&self) -> &Matrix {
        &self.factor
    }

    /// Solves `L L^T X = B` column by column.
    pub fn solve(&self, b: &Matrix) -> Matrix {
        let n = self.factor.rows();
        let l = &self.factor;
        let mut x = b.clone();
        for c in 0..b.cols() {
            for i in 0..n {
                let mut s = x.get(i, c);
                let li = l.row(i);
                for k in 0..i {
                    s -= li[k] * x.get(k, c);
                }
                x.set(i, c, s / li[i]);
            }
            for i in (0..n).rev() {
                let mut s = x.get(i, c);
                for k in (i + 1)..n {
                    s -= l.get(k, i) * x.get(k, c);
                }
                x.set(i, c, s / l.get(i, i));
            }
        }
        x
    }
}

/// Result of [`solve_spd_detailed`].
#[derive(Debug, Clone)]
pub struct SpdSolution {
    pub solution: Matrix,
    pub jitter: f64,
    /// `max |A X - B|` against the unjittered `A`.
    pub residual: f64,
}

fn residual(a: &Matrix, x: &Matrix, b: &Matrix) -> Matrix {
    let mut r = b.clone();
    gemm(-1.0, a, false, x, false, 1.0, &mut r);
    r
}

/// Solves `A X = B` for symmetric positive definite `A`.
pub fn solve_spd(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    solve_spd_detailed(a, b).map(|s| s.solution)
}

/// Cholesky solve with escalating diagonal jitter and iterative refinement.
///
/// Jitter values are relative to the mean diagonal magnitude. Fails when no rung of
/// the ladder factorizes or the refined residual still exceeds `1e-8 * max|B|`.
pub fn solve_spd_detailed(a: &Matrix, b: &Matrix) -> Result<SpdSolution> {
    if !a.is_square() {
        return Err(Error::NotSquare { rows: a.rows(), cols: a.cols() });
    }
    let n = a.rows();
    if b.rows() != n {
        return Err(Error::Dimension(format!("right-hand side has {} rows, system has {n}", b.rows())));
    }
    let asym = a.max_asymmetry();
    if asym > SYMMETRY_TOL * a.max_abs().max(1.0) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    if n == 0 {
        return Ok(SpdSolution { solution: b.clone(), jitter: 0.0, residual: 0.0 });
    }
    let diag_scale = (0..n).map(|i| a.get(i, i).abs()).sum::<f64>() / n as f64;
    let diag_scale = if diag_scale > 0.0 { diag_scale } else { 1.0 };
    let tol = RESIDUAL_TOL * b.max_abs();

    let mut last_jitter = 0.0;
    for rel in JITTER_LADDER {
        let shift = rel * diag_scale;
        last_jitter = shift;
        let Some(chol) = Cholesky::factorize_shifted(a, shift) else {
            continue;
        };
        let mut x = chol.solve(b);
        let mut r = residual(a, &x, b);
        let mut best = r.max_abs();
        for _ in 0..REFINE_STEPS {
            if best <= tol * 1e-3 {
                break;
            }
            let dx = chol.solve(&r);
            let mut candidate = x.clone();
            candidate.as_mut_slice().iter_mut().zip(dx.as_slice()).for_each(|(v, d)| *v += d);
            let rc = residual(a, &candidate, b);
            let rc_max = rc.max_abs();
            if !(rc_max < best) {
                break;
            }
            x = candidate;
            r = rc;
            best = rc_max;
        }
        if best <= tol && x.is_finite() {
            return Ok(SpdSolution { solution: x, jitter: shift, residual: best });
        }
    }
    Err(Error::Factorization { jitter: last_jitter })
}

/// Haar-distributed orthogonal matrix: Householder QR of a Gaussian matrix with
/// the signs of `R`'s diagonal folded into `Q`.
pub fn random_orthogonal(d: usize, rng: &mut RandomSource) -> Result<Matrix> {
    if d == 0 {
        return Err(Error::InvalidArgument("orthogonal matrix of dimension 0".into()));
    }
    let mut a = Matrix::zeros(d, d);
    for v in a.as_mut_slice() {
        *v = rng.normal();
    }
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(d);
    let mut signs = vec![1.0; d];
    for k in 0..d {
        let x: Vec<f64> = (k..d).map(|i| a.get(i, k)).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            reflectors.push(vec![0.0; d - k]);
            continue;
        }
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x;
        v[0] -= alpha;
        let vn = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if vn > 0.0 {
            v.iter_mut().for_each(|t| *t /= vn);
        }
        for j in k..d {
            let s: f64 = (k..d).map(|i| v[i - k] * a.get(i, j)).sum();
            for i in k..d {
                let val = a.get(i, j) - 2.0 * v[i - k] * s;
                a.set(i, j, val);
            }
        }
        signs[k] = if alpha < 0.0 { -1.0 } else { 1.0 };
        reflectors.push(v);
    }
    // Q = H_0 H_1 ... H_{d-1}
    let mut q = Matrix::identity(d);
    for k in (0..d).rev() {
        let v = &reflectors[k];
        for j in 0..d {
            let s: f64 = (k..d).map(|i| v[i - k] * q.get(i, j)).sum();
            if s != 0.0 {
                for i in k..d {
                    let val = q.get(i, j) - 2.0 * v[i - k] * s;
                    q.set(i, j, val);
                }
            }
        }
    }
    for (j, &s) in signs.iter().enumerate() {
        if s < 0.0 {
            for i in 0..d {
                let val = -q.get(i, j);
                q.set(i, j, val);
            }
        }
    }
    Ok(q)
}

/// Ordinary least-squares line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Fits `y = slope * x + intercept`. Constant `ys` count as perfectly linear (`r² = 1`).
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension(format!("{} abscissae for {} ordinates", xs.len(), ys.len())));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("line fit needs at least 2 points, got {n}")));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let x_scale = xs.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    if sxx <= nf * (8.0 * f64::EPSILON * x_scale).powi(2) {
        return Err(Error::InvalidArgument("line fit with degenerate abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let y_scale = ys.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let r_squared = if syy <= nf * (8.0 * f64::EPSILON * y_scale).powi(2) {
        1.0
    } else {
        let ss_res: f64 = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| {
                let e = y - (slope * x + intercept);
                e * e
            })
            .sum();
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(LineFit { slope, intercept, r_squared })
}

/// Singular values of `a` in descending order (one-sided Jacobi on the columns).
pub fn singular_values(a: &Matrix) -> Vec<f64> {
    let (m, n) = (a.rows(), a.cols());
    if m == 0 || n == 0 {
        return Vec::new();
    }
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.col_values(j)).collect();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha: f64 = cols[p].iter().map(|v| v * v).sum();
                let beta: f64 = cols[q].iter().map(|v| v * v).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                for (x, y) in left[p].iter_mut().zip(right[0].iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = cols.iter().map(|c| norm2(c)).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Number of singular values above `rel_tol * sigma_max`.
pub fn numerical_rank(a: &Matrix, rel_tol: f64) -> usize {
    let sv = singular_values(a);
    match sv.first() {
        Some(&top) if top > 0.0 => sv.iter().filter(|&&s| s > rel_tol * top).count(),
        _ => 0,
    }
}
