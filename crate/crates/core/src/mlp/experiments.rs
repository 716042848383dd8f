use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{Activation, InitScheme, MlpModel};
use super::regressor_dims;
use super::train::{train, TrainConfig};
use crate::diagnostics::{extrapolation_report, mape, sweep_directions, DirectionalSweep, RAY_POINTS, RAY_REACH};
use crate::numerics::RandomSource;
use crate::synth::{make_splits, DomainSpec, LabeledSet, Restriction, Shape, TargetFunction};
use crate::{Error, Result};

/// Target families whose random coefficients are drawn per seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetPreset {
    /// `x^T A x` with `A` uniform on `[-1, 1]`.
    Quadratic,
    /// `|x|^2`
    Norm2,
    Cos,
    Sqrt,
    L1,
    /// `beta^T x` with `beta` uniform on `[-1, 1]`.
    Linear,
    Tanh,
}

impl TargetPreset {
    pub fn resolve(self, d: usize, rng: &mut RandomSource) -> TargetFunction {
        match self {
            TargetPreset::Quadratic => TargetFunction::random_quadratic(d, rng),
            TargetPreset::Norm2 => TargetFunction::identity_quadratic(d),
            TargetPreset::Cos => TargetFunction::Cos,
            TargetPreset::Sqrt => TargetFunction::Sqrt,
            TargetPreset::L1 => TargetFunction::L1,
            TargetPreset::Linear => TargetFunction::random_linear(d, 1.0, rng),
            TargetPreset::Tanh => TargetFunction::Tanh,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpSetup {
    pub target: TargetPreset,
    pub train_domain: DomainSpec,
    /// Test points come from the unrestricted training shape scaled by this factor.
    pub test_multiple: f64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub width: usize,
    pub depth: usize,
    pub activation: Activation,
    pub init: InitScheme,
    pub use_bias: bool,
    pub train: TrainConfig,
}

impl Default for MlpSetup {
    fn default() -> Self {
        Self {
            target: TargetPreset::Quadratic,
            train_domain: DomainSpec::cube(2, 1.0),
            test_multiple: 2.0,
            n_train: 5000,
            n_val: 1000,
            n_test: 2000,
            width: super::DEFAULT_WIDTH,
            depth: super::DEFAULT_DEPTH,
            activation: Activation::Relu,
            init: InitScheme::Default,
            use_bias: true,
            train: TrainConfig::default(),
        }
    }
}

/// Short label for a training geometry: `all`, `fix1`, `pos2`, `neg1`, ...
pub fn geometry_name(spec: &DomainSpec) -> String {
    match spec.restriction {
        Restriction::None => "all".into(),
        Restriction::FixFirst(_) => "fix1".into(),
        Restriction::PositiveFirstK(k) => format!("pos{k}"),
        Restriction::NegativeFirstK(k) => format!("neg{k}"),
    }
}

pub fn test_domain(train: &DomainSpec, multiple: f64) -> Result<DomainSpec> {
    if !(multiple > 0.0) {
        return Err(Error::InvalidArgument(format!("test multiple {multiple}")));
    }
    let shape = match train.shape {
        Shape::HyperCube { half_width } => Shape::HyperCube { half_width: half_width * multiple },
        Shape::Sphere { radius } => Shape::Ball { radius: radius * multiple },
        Shape::Ball { radius } => Shape::Ball { radius: radius * multiple },
    };
    Ok(DomainSpec { shape, restriction: Restriction::None, ..*train })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpRunResult {
    pub target: String,
    pub geometry: String,
    pub activation: String,
    pub depth: usize,
    pub width: usize,
    pub seed: u64,
    /// On a fresh sample from the training distribution.
    pub in_mape: f64,
    /// On test points outside the training support.
    pub ood_mape: f64,
    pub ood_mse: f64,
    pub epochs_to_best: usize,
    pub diverged: bool,
}

pub fn write_mlp_csv(path: &Path, rows: &[MlpRunResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Data and a trained model for one seed.
pub struct TrainedMlp {
    pub model: MlpModel,
    pub target: TargetFunction,
    pub epochs_to_best: usize,
    pub diverged: bool,
    pub in_dist: LabeledSet,
    pub test: LabeledSet,
}

pub fn train_mlp_setup(setup: &MlpSetup, seed: u64) -> Result<TrainedMlp> {
    setup.validate()?;
    let d = setup.train_domain.dim;
    let rng = RandomSource::new(seed, "mlp-data");
    let target = setup.target.resolve(d, &mut rng.derive("target"));
    let test_spec = test_domain(&setup.train_domain, setup.test_multiple)?;
    let splits = make_splits(&target, &setup.train_domain, &test_spec, setup.n_train, setup.n_val, setup.n_test, &rng)?;
    let in_dist = LabeledSet::generate(&target, &setup.train_domain, setup.n_test, &mut rng.derive("interp"))?;
    let dims = regressor_dims(d, setup.width, setup.depth);
    let model = MlpModel::new(&dims, setup.activation, setup.init, setup.use_bias, seed)?;
    let cfg = TrainConfig { seed, ..setup.train.clone() };
    let (model, hist) = train(&model, &splits.train, &splits.val, &cfg)?;
    Ok(TrainedMlp {
        model,
        target,
        epochs_to_best: hist.best_epoch,
        diverged: hist.diverged,
        in_dist,
        test: splits.test,
    })
}

/// Trains one MLP per seed and reports in-distribution and out-of-support MAPE.
pub fn run_mlp_experiment(setup: &MlpSetup, seeds: &[u64]) -> Result<Vec<MlpRunResult>> {
    setup.validate()?;
    seeds
        .par_iter()
        .map(|&seed| {
            let t = train_mlp_setup(setup, seed)?;
            let preds: Vec<f64> = t.in_dist.inputs.row_iter().map(|x| t.model.forward(x)).collect::<Result<_>>()?;
            let in_mape = mape(&preds, &t.in_dist.labels)?;
            let report = extrapolation_report(|x| t.model.forward(x), &t.test, &setup.train_domain)?;
            let ood = report
                .out_of_support
                .ok_or_else(|| Error::InvalidArgument("no test point outside the training support".into()))?;
            Ok(MlpRunResult {
                target: setup.target_name(),
                geometry: geometry_name(&setup.train_domain),
                activation: setup.activation.name().to_string(),
                depth: setup.depth,
                width: setup.width,
                seed,
                in_mape,
                ood_mape: ood.mape.unwrap_or(f64::NAN),
                ood_mse: ood.mse,
                epochs_to_best: t.epochs_to_best,
                diverged: t.diverged,
            })
        })
        .collect()
}

impl MlpSetup {
    pub fn validate(&self) -> Result<()> {
        self.train_domain.validate()?;
        test_domain(&self.train_domain, self.test_multiple)?.validate()?;
        if self.n_train == 0 || self.n_val == 0 || self.n_test == 0 {
            return Err(Error::InvalidArgument("every split needs at least one point".into()));
        }
        if self.width == 0 || self.depth == 0 {
            return Err(Error::InvalidArgument("width and depth must be >= 1".into()));
        }
        if self.target == TargetPreset::Sqrt && !self.train_domain.nonnegative {
            return Err(Error::InvalidArgument("sqrt target requires a nonnegative domain".into()));
        }
        self.train.validate()
    }

    fn target_name(&self) -> String {
        serde_json::to_value(self.target).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
    }
}

/// Trains on the setup and fits a line along `n_dirs` random rays leaving the support.
pub fn run_direction_sweep(setup: &MlpSetup, seed: u64, n_dirs: usize) -> Result<DirectionalSweep> {
    let t = train_mlp_setup(setup, seed)?;
    let mut rng = RandomSource::new(seed, "directions");
    let name = format!("{}-{}", setup.target_name(), setup.activation.name());
    sweep_directions(&name, |x| t.model.forward(x), &setup.train_domain, n_dirs, RAY_POINTS, RAY_REACH, &mut rng)
}
