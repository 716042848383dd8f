use std::path::{Path, PathBuf};

use clap::ValueEnum;
use extrapolab::gnn::{Aggregation, MaxDegreeSetup, ShortestPathSetup};
use extrapolab::graphgen::GraphFamily;
use extrapolab::mlp::{Activation, InitScheme, MlpSetup, TargetPreset, TrainConfig};
use extrapolab::nbody::NbodySetup;
use extrapolab::synth::{DomainSpec, Restriction, FIX_FIRST_DEFAULT};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    MlpExtrap,
    LinearGeometry,
    ActivationStudy,
    NtkExact,
    DirectionSweep,
    MaxDegree,
    ShortestPath,
    Nbody,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::MlpExtrap => "mlp-extrap",
            ExperimentKind::LinearGeometry => "linear-geometry",
            ExperimentKind::ActivationStudy => "activation-study",
            ExperimentKind::NtkExact => "ntk-exact",
            ExperimentKind::DirectionSweep => "direction-sweep",
            ExperimentKind::MaxDegree => "max-degree",
            ExperimentKind::ShortestPath => "shortest-path",
            ExperimentKind::Nbody => "nbody",
        }
    }
}

/// Size presets. `paper` approaches the published grid sizes and takes hours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    Smoke,
    Desk,
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpExtrapGrid {
    /// `sqrt` runs on the nonnegative version of the training domain.
    pub targets: Vec<TargetPreset>,
}

impl Default for MlpExtrapGrid {
    fn default() -> Self {
        Self {
            targets: vec![
                TargetPreset::Quadratic,
                TargetPreset::Cos,
                TargetPreset::Sqrt,
                TargetPreset::L1,
                TargetPreset::Linear,
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryGrid {
    /// `all`, `fix1`, `posK` or `negK`.
    pub geometries: Vec<String>,
}

impl Default for GeometryGrid {
    fn default() -> Self {
        Self { geometries: ["all", "fix1", "pos1", "neg2"].map(String::from).to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActivationGrid {
    pub activations: Vec<Activation>,
    pub targets: Vec<TargetPreset>,
}

impl Default for ActivationGrid {
    fn default() -> Self {
        Self {
            activations: vec![Activation::Relu, Activation::Tanh, Activation::Cos, Activation::Quadratic],
            targets: vec![TargetPreset::Tanh, TargetPreset::Cos, TargetPreset::Quadratic, TargetPreset::Linear],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NtkExactConfig {
    pub dims: Vec<usize>,
    /// Random orthogonal bases per dimension.
    pub bases: usize,
    pub n_test: usize,
    /// Test cube half-width in units of the training scale.
    pub test_scale: f64,
    /// Training points are `+-scale Q e_i`.
    pub scale: f64,
}

impl Default for NtkExactConfig {
    fn default() -> Self {
        Self { dims: vec![2, 8], bases: 20, n_test: 2000, test_scale: 10.0, scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub n_dirs: usize,
    pub n_points: usize,
    pub reach: f64,
    pub r2_threshold: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { n_dirs: 500, n_points: 100, reach: 10.0, r2_threshold: 0.99 }
    }
}

/// One experiment. Only the section matching `kind` (plus `mlp` for the MLP kinds) is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "schema_version")]
    pub schema: u32,
    pub kind: ExperimentKind,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub mlp: MlpSetup,
    #[serde(default)]
    pub mlp_extrap: MlpExtrapGrid,
    #[serde(default)]
    pub linear_geometry: GeometryGrid,
    #[serde(default)]
    pub activation_study: ActivationGrid,
    #[serde(default)]
    pub ntk: NtkExactConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub max_degree: MaxDegreeSetup,
    #[serde(default)]
    pub shortest_path: ShortestPathSetup,
    #[serde(default)]
    pub nbody: NbodySetup,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

fn invalid(field: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{field}: {e}"))
}

/// `all`, `fix1`, `posK`, `negK` for a `dim`-dimensional domain.
pub fn parse_geometry(name: &str, dim: usize) -> Result<Restriction, String> {
    let k = |rest: &str| -> Result<usize, String> {
        let k: usize = rest.parse().map_err(|_| format!("unknown geometry {name:?}"))?;
        if k == 0 || k > dim {
            return Err(format!("geometry {name:?} needs 1 <= k <= {dim}"));
        }
        Ok(k)
    };
    match name {
        "all" => Ok(Restriction::None),
        "fix1" => Ok(Restriction::FixFirst(FIX_FIRST_DEFAULT)),
        _ if name.starts_with("pos") => Ok(Restriction::PositiveFirstK(k(&name[3..])?)),
        _ if name.starts_with("neg") => Ok(Restriction::NegativeFirstK(k(&name[3..])?)),
        _ => Err(format!("unknown geometry {name:?}")),
    }
}

/// The MLP setup for one grid cell, with `sqrt` moved to the nonnegative domain.
pub fn mlp_cell(base: &MlpSetup, target: TargetPreset) -> MlpSetup {
    let mut s = MlpSetup { target, ..base.clone() };
    if target == TargetPreset::Sqrt {
        s.train_domain = s.train_domain.nonnegative();
    }
    s
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// TOML with only the sections `kind` reads.
    pub fn to_toml(&self) -> String {
        let mut table = toml::Table::try_from(self).expect("config serializes to TOML");
        let keep: &[&str] = match self.kind {
            ExperimentKind::MlpExtrap => &["mlp", "mlp_extrap"],
            ExperimentKind::LinearGeometry => &["mlp", "linear_geometry"],
            ExperimentKind::ActivationStudy => &["mlp", "activation_study"],
            ExperimentKind::NtkExact => &["ntk"],
            ExperimentKind::DirectionSweep => &["mlp", "sweep"],
            ExperimentKind::MaxDegree => &["max_degree"],
            ExperimentKind::ShortestPath => &["shortest_path"],
            ExperimentKind::Nbody => &["nbody"],
        };
        table.retain(|k, v| !v.is_table() || keep.contains(&k));
        toml::to_string_pretty(&table).expect("table serializes to TOML")
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        let json = serde_json::to_string(&c).expect("config serializes to JSON");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema != SCHEMA_VERSION {
            return Err(invalid("schema", format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema)));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "at least one seed is required"));
        }
        match self.kind {
            ExperimentKind::MlpExtrap => {
                if self.mlp_extrap.targets.is_empty() {
                    return Err(invalid("mlp_extrap.targets", "empty grid"));
                }
                for &t in &self.mlp_extrap.targets {
                    mlp_cell(&self.mlp, t).validate().map_err(|e| invalid("mlp", e))?;
                }
            }
            ExperimentKind::LinearGeometry => {
                if self.linear_geometry.geometries.is_empty() {
                    return Err(invalid("linear_geometry.geometries", "empty grid"));
                }
                for g in &self.linear_geometry.geometries {
                    let r = parse_geometry(g, self.mlp.train_domain.dim)
                        .map_err(|e| invalid("linear_geometry.geometries", e))?;
                    let s = MlpSetup { train_domain: self.mlp.train_domain.with_restriction(r), ..self.mlp.clone() };
                    s.validate().map_err(|e| invalid("mlp", e))?;
                }
            }
            ExperimentKind::ActivationStudy => {
                let g = &self.activation_study;
                if g.activations.is_empty() || g.targets.is_empty() {
                    return Err(invalid("activation_study", "empty grid"));
                }
                for &t in &g.targets {
                    mlp_cell(&self.mlp, t).validate().map_err(|e| invalid("mlp", e))?;
                }
            }
            ExperimentKind::NtkExact => {
                let n = &self.ntk;
                if n.dims.is_empty() || n.dims.contains(&0) {
                    return Err(invalid("ntk.dims", "dimensions must be >= 1"));
                }
                if n.bases == 0 || n.n_test == 0 {
                    return Err(invalid("ntk", "bases and n_test must be >= 1"));
                }
                if !(n.scale > 0.0) || !(n.test_scale > 0.0) {
                    return Err(invalid("ntk", "scales must be positive"));
                }
            }
            ExperimentKind::DirectionSweep => {
                self.mlp.validate().map_err(|e| invalid("mlp", e))?;
                let s = &self.sweep;
                if s.n_dirs == 0 || s.n_points < 2 || !(s.reach > 0.0) {
                    return Err(invalid("sweep", "need n_dirs >= 1, n_points >= 2 and reach > 0"));
                }
            }
            ExperimentKind::MaxDegree => self.max_degree.validate().map_err(|e| invalid("max_degree", e))?,
            ExperimentKind::ShortestPath => self.shortest_path.validate().map_err(|e| invalid("shortest_path", e))?,
            ExperimentKind::Nbody => self.nbody.validate().map_err(|e| invalid("nbody", e))?,
        }
        Ok(())
    }

    /// Bundled configuration for `kind` at the given size.
    pub fn preset(kind: ExperimentKind, scale: Scale) -> Self {
        let mut c = Self {
            schema: SCHEMA_VERSION,
            kind,
            seeds: default_seeds(),
            out: None,
            mlp: mlp_preset(scale),
            mlp_extrap: MlpExtrapGrid::default(),
            linear_geometry: GeometryGrid::default(),
            activation_study: ActivationGrid::default(),
            ntk: NtkExactConfig::default(),
            sweep: SweepConfig::default(),
            max_degree: max_degree_preset(scale),
            shortest_path: shortest_path_preset(scale),
            nbody: nbody_preset(scale),
        };
        match kind {
            ExperimentKind::LinearGeometry => {
                c.mlp.target = TargetPreset::Linear;
                c.mlp.train_domain = DomainSpec::cube(2, 5.0);
            }
            ExperimentKind::MlpExtrap => c.mlp.test_multiple = 5.0,
            ExperimentKind::ActivationStudy => c.mlp.train_domain = DomainSpec::cube(1, 1.0),
            ExperimentKind::DirectionSweep => c.seeds = vec![0],
            ExperimentKind::ShortestPath => c.shortest_path.weight_extrapolation = true,
            _ => {}
        }
        match scale {
            Scale::Smoke => {
                c.seeds.truncate(2);
                c.ntk = NtkExactConfig { dims: vec![2], bases: 2, n_test: 100, ..NtkExactConfig::default() };
                c.sweep.n_dirs = 10;
                c.mlp_extrap.targets = vec![TargetPreset::Quadratic, TargetPreset::Sqrt];
                c.linear_geometry.geometries = vec!["all".into(), "fix1".into()];
                c.activation_study = ActivationGrid {
                    activations: vec![Activation::Relu, Activation::Tanh],
                    targets: vec![TargetPreset::Tanh],
                };
            }
            Scale::Desk => {}
            Scale::Paper => {
                c.seeds = (0..10).collect();
                c.sweep.n_dirs = 5000;
            }
        }
        c
    }
}

pub fn mlp_preset(scale: Scale) -> MlpSetup {
    match scale {
        Scale::Smoke => MlpSetup {
            n_train: 200,
            n_val: 50,
            n_test: 200,
            width: 16,
            train: TrainConfig { epochs: 3, ..TrainConfig::default() },
            ..MlpSetup::default()
        },
        Scale::Desk => MlpSetup::default(),
        Scale::Paper => MlpSetup {
            n_train: 20_000,
            n_val: 1000,
            n_test: 20_000,
            width: 256,
            train: TrainConfig { epochs: 500, decay_every: 100, ..TrainConfig::default() },
            ..MlpSetup::default()
        },
    }
}

pub fn max_degree_preset(scale: Scale) -> MaxDegreeSetup {
    match scale {
        Scale::Smoke => MaxDegreeSetup {
            n_train: 20,
            n_val: 10,
            n_test: 10,
            hidden: 8,
            train_nodes: (10, 15),
            test_nodes: (20, 30),
            train: TrainConfig { epochs: 2, ..TrainConfig::default() },
            ..MaxDegreeSetup::default()
        },
        Scale::Desk => {
            MaxDegreeSetup { train: TrainConfig { epochs: 100, ..TrainConfig::default() }, ..MaxDegreeSetup::default() }
        }
        Scale::Paper => {
            MaxDegreeSetup { n_train: 5000, n_val: 1000, n_test: 1000, hidden: 256, ..MaxDegreeSetup::default() }
        }
    }
}

pub fn shortest_path_preset(scale: Scale) -> ShortestPathSetup {
    match scale {
        Scale::Smoke => ShortestPathSetup {
            n_train: 20,
            n_val: 10,
            n_test: 10,
            hidden: 8,
            train_nodes: (10, 15),
            test_nodes: (20, 30),
            train: TrainConfig { epochs: 2, ..TrainConfig::default() },
            ..ShortestPathSetup::default()
        },
        Scale::Desk => ShortestPathSetup {
            hidden: 32,
            n_train: 500,
            n_val: 100,
            n_test: 100,
            train: TrainConfig { epochs: 100, ..TrainConfig::default() },
            ..ShortestPathSetup::default()
        },
        Scale::Paper => ShortestPathSetup {
            n_train: 10_000,
            n_val: 1000,
            n_test: 1000,
            hidden: 256,
            ..ShortestPathSetup::default()
        },
    }
}

pub fn nbody_preset(scale: Scale) -> NbodySetup {
    let base = NbodySetup::default();
    match scale {
        Scale::Smoke => {
            let mut s = NbodySetup {
                n_videos: 4,
                n_train: 50,
                n_val: 20,
                n_test: 20,
                hidden: 8,
                train: TrainConfig { epochs: 2, ..base.train.clone() },
                ..base
            };
            for sim in [&mut s.train_sim, &mut s.mass_sim, &mut s.distance_sim] {
                sim.frames = 50;
            }
            s
        }
        Scale::Desk => base,
        Scale::Paper => NbodySetup { hidden: 128, ..base },
    }
}

/// Gnp edge probabilities of the training-sparsity sweep.
pub const SPARSITY_SWEEP: [f64; 6] = [0.05, 0.1, 0.3, 0.5, 0.8, 1.0];

/// Training families compared on max degree.
pub fn max_degree_families() -> Vec<GraphFamily> {
    vec![
        GraphFamily::Path,
        GraphFamily::Cycle,
        GraphFamily::Ladder,
        GraphFamily::Tree,
        GraphFamily::FourRegular,
        GraphFamily::Expander(extrapolab::graphgen::EXPANDER_P_MAX_DEGREE),
        GraphFamily::Complete,
        GraphFamily::General,
    ]
}

pub const SP_AGGREGATIONS: [Aggregation; 3] = [Aggregation::Min, Aggregation::Sum, Aggregation::Max];

/// L1 fits with the NTK-scaled initialization.
pub fn l1_cell(base: &MlpSetup) -> MlpSetup {
    MlpSetup { target: TargetPreset::L1, init: InitScheme::NtkScaled, ..base.clone() }
}
