//! Directional-linearity sweeps, MAPE/MSE and support-resolved error reports.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numerics::{fit_line, norm2, RandomSource};
use crate::synth::{DomainSpec, LabeledSet, Shape};
use crate::{Error, Result};

/// Labels with magnitude below this are left out of MAPE.
pub const MAPE_ZERO_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapeStats {
    pub value: f64,
    pub included: usize,
    pub excluded: usize,
}

/// Mean of `|A - F| / |A|` over labels with `|A| >= 1e-9`, with the exclusion count.
pub fn mape_detailed(preds: &[f64], labels: &[f64]) -> Result<MapeStats> {
    if preds.len() != labels.len() {
        return Err(Error::Dimension(format!("{} predictions for {} labels", preds.len(), labels.len())));
    }
    let (mut sum, mut included) = (0.0, 0usize);
    for (f, a) in preds.iter().zip(labels) {
        if a.abs() < MAPE_ZERO_THRESHOLD {
            continue;
        }
        sum += ((a - f) / a).abs();
        included += 1;
    }
    if included == 0 {
        return Err(Error::InvalidArgument("every label is near zero; MAPE is undefined".into()));
    }
    Ok(MapeStats { value: sum / included as f64, included, excluded: labels.len() - included })
}

pub fn mape(preds: &[f64], labels: &[f64]) -> Result<f64> {
    mape_detailed(preds, labels).map(|m| m.value)
}

pub fn mse(preds: &[f64], labels: &[f64]) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::Dimension(format!("{} predictions for {} labels", preds.len(), labels.len())));
    }
    if preds.is_empty() {
        return Err(Error::InvalidArgument("MSE of an empty set".into()));
    }
    Ok(preds.iter().zip(labels).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / preds.len() as f64)
}

/// Where the ray from the origin along `v` leaves the training support.
pub fn support_boundary(spec: &DomainSpec, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != spec.dim {
        return Err(Error::Dimension(format!("direction has {} coordinates, domain {}", v.len(), spec.dim)));
    }
    let n = norm2(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::InvalidArgument("direction must be nonzero".into()));
    }
    let t = match spec.shape {
        Shape::Sphere { radius } => radius / n,
        Shape::HyperCube { half_width } => {
            let inf = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            half_width / inf
        }
        Shape::Ball { .. } => {
            return Err(Error::InvalidArgument("a ball has no sharp support boundary for ray sweeps".into()))
        }
    };
    Ok(v.iter().map(|x| t * x).collect())
}

/// Line fit of predictions along one ray, parameterized by distance from the anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayFit {
    pub direction: Vec<f64>,
    pub anchor: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalSweep {
    pub model: String,
    pub domain: DomainSpec,
    pub rays: Vec<RayFit>,
    /// Rays dropped because a prediction was not finite.
    pub non_finite: usize,
}

impl DirectionalSweep {
    pub fn fraction_above(&self, threshold: f64) -> f64 {
        if self.rays.is_empty() {
            return 0.0;
        }
        self.rays.iter().filter(|r| r.r_squared > threshold).count() as f64 / self.rays.len() as f64
    }

    /// One row per ray: direction, anchor, slope, intercept, r_squared.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let d = self.domain.dim;
        let mut header: Vec<String> = (0..d).map(|i| format!("v{i}")).collect();
        header.extend((0..d).map(|i| format!("anchor{i}")));
        header.extend(["slope", "intercept", "r_squared"].map(String::from));
        w.write_record(&header)?;
        for r in &self.rays {
            let mut rec: Vec<String> = r.direction.iter().map(|v| format!("{v:?}")).collect();
            rec.extend(r.anchor.iter().map(|v| format!("{v:?}")));
            rec.extend([r.slope, r.intercept, r.r_squared].map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Default number of points per ray and reach in units of the support scale.
pub const RAY_POINTS: usize = 100;
pub const RAY_REACH: f64 = 10.0;

/// Fits a line to `predict` along Gaussian-sampled directions.
///
/// Each ray starts at the support boundary `x_w` and visits `x_w + k * step * v` for
/// `k = 0..n_points` with `step = reach_multiple * r / n_points`, where `r` is the
/// support scale; `n_points = 100`, `reach_multiple = 10` gives the `r/10` spacing.
pub fn sweep_directions<F>(
    model_name: &str,
    predict: F,
    spec: &DomainSpec,
    n_dirs: usize,
    n_points: usize,
    reach_multiple: f64,
    rng: &mut RandomSource,
) -> Result<DirectionalSweep>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if n_dirs == 0 || n_points < 2 {
        return Err(Error::InvalidArgument("need n_dirs >= 1 and n_points >= 2".into()));
    }
    if !(reach_multiple > 0.0) {
        return Err(Error::InvalidArgument("reach multiple must be positive".into()));
    }
    let mut dirs = Vec::with_capacity(n_dirs);
    while dirs.len() < n_dirs {
        let g = rng.normal_vec(spec.dim);
        let n = norm2(&g);
        if n > 0.0 {
            dirs.push(g.iter().map(|x| x / n).collect::<Vec<f64>>());
        }
    }
    let step = reach_multiple * spec.scale() / n_points as f64;
    let results: Vec<Option<RayFit>> = dirs
        .into_par_iter()
        .map(|v| -> Result<Option<RayFit>> {
            let anchor = support_boundary(spec, &v)?;
            let mut ts = Vec::with_capacity(n_points);
            let mut ys = Vec::with_capacity(n_points);
            let mut x = vec![0.0; spec.dim];
            for k in 0..n_points {
                let t = k as f64 * step;
                x.iter_mut().zip(anchor.iter().zip(&v)).for_each(|(xi, (a, vi))| *xi = a + t * vi);
                let y = match predict(&x) {
                    Ok(y) if y.is_finite() => y,
                    Ok(_) | Err(Error::NonFinite(_)) => return Ok(None),
                    Err(e) => return Err(e),
                };
                ts.push(t);
                ys.push(y);
            }
            let fit = fit_line(&ts, &ys)?;
            Ok(Some(RayFit {
                direction: v,
                anchor,
                slope: fit.slope,
                intercept: fit.intercept,
                r_squared: fit.r_squared,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    let non_finite = results.iter().filter(|r| r.is_none()).count();
    let rays: Vec<RayFit> = results.into_iter().flatten().collect();
    if rays.is_empty() {
        return Err(Error::NonFinite("every ray produced a non-finite prediction".into()));
    }
    Ok(DirectionalSweep { model: model_name.to_string(), domain: *spec, rays, non_finite })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub n: usize,
    pub mse: f64,
    /// `None` when every label in the bucket is near zero.
    pub mape: Option<f64>,
    pub mape_excluded: usize,
}

fn error_stats(preds: &[f64], labels: &[f64]) -> Result<Option<ErrorStats>> {
    if preds.is_empty() {
        return Ok(None);
    }
    let (mape, excluded) = match mape_detailed(preds, labels) {
        Ok(m) => (Some(m.value), m.excluded),
        Err(Error::InvalidArgument(_)) => (None, labels.len()),
        Err(e) => return Err(e),
    };
    Ok(Some(ErrorStats { n: preds.len(), mse: mse(preds, labels)?, mape, mape_excluded: excluded }))
}

/// Errors overall and split by membership in the training support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationReport {
    pub train_domain: DomainSpec,
    pub overall: ErrorStats,
    pub in_support: Option<ErrorStats>,
    pub out_of_support: Option<ErrorStats>,
    /// Set when no test point falls outside the training support.
    pub ood_empty: bool,
}

impl ExtrapolationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Relative tolerance for support membership.
pub const SUPPORT_TOL: f64 = 1e-9;

pub fn extrapolation_report<F>(predict: F, test: &LabeledSet, train_spec: &DomainSpec) -> Result<ExtrapolationReport>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if test.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    let mut all = (Vec::new(), Vec::new());
    let mut inside = (Vec::new(), Vec::new());
    let mut outside = (Vec::new(), Vec::new());
    for (x, &y) in test.inputs.row_iter().zip(&test.labels) {
        let p = predict(x)?;
        all.0.push(p);
        all.1.push(y);
        let bucket = if train_spec.contains(x, SUPPORT_TOL) { &mut inside } else { &mut outside };
        bucket.0.push(p);
        bucket.1.push(y);
    }
    Ok(ExtrapolationReport {
        train_domain: *train_spec,
        overall: error_stats(&all.0, &all.1)?.expect("nonempty test set"),
        in_support: error_stats(&inside.0, &inside.1)?,
        ood_empty: outside.0.is_empty(),
        out_of_support: error_stats(&outside.0, &outside.1)?,
    })
}
