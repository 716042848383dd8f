use std::path::Path;

use clap::ValueEnum;
use extrapolab::gnn::{
    run_max_degree_experiment, run_shortest_path_experiment, MaxDegreeSetup, Readout, ShortestPathSetup,
};
use extrapolab::graphgen::GraphFamily;
use extrapolab::mlp::{MlpSetup, TargetPreset};
use extrapolab::synth::{DomainSpec, Restriction, FIX_FIRST_DEFAULT};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{
    l1_cell, max_degree_families, max_degree_preset, mlp_cell, mlp_preset, shortest_path_preset, ActivationGrid,
    ExperimentConfig, ExperimentKind, Scale, SPARSITY_SWEEP, SP_AGGREGATIONS,
};
use crate::error::CliError;
use crate::output::{Artifacts, Manifest, Summary};
use crate::runner::{gnn_results, mlp_rows, mlp_summary, nbody_results, nbody_rows, with_manifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
pub enum FigureTag {
    Fig4a,
    Fig4b,
    Fig5a,
    Fig5b,
    Fig6a,
    Fig6b,
    Fig7,
}

impl FigureTag {
    pub fn name(self) -> &'static str {
        match self {
            FigureTag::Fig4a => "fig4a",
            FigureTag::Fig4b => "fig4b",
            FigureTag::Fig5a => "fig5a",
            FigureTag::Fig5b => "fig5b",
            FigureTag::Fig6a => "fig6a",
            FigureTag::Fig6b => "fig6b",
            FigureTag::Fig7 => "fig7",
        }
    }
}

fn seeds(scale: Scale) -> Vec<u64> {
    match scale {
        Scale::Smoke => vec![0, 1],
        Scale::Desk => vec![0, 1, 2],
        Scale::Paper => (0..10).collect(),
    }
}

/// Runs the grid behind a figure and writes `<tag>.csv` with one row per cell and seed.
pub fn reproduce(tag: FigureTag, scale: Scale, seed_override: Option<u64>, out: &Path) -> Result<Manifest, CliError> {
    let seeds = seed_override.map_or_else(|| seeds(scale), |s| vec![s]);
    let hash = hex::encode(Sha256::digest(format!("{}:{scale:?}:{seeds:?}", tag.name()).as_bytes()));
    let csv = format!("{}.csv", tag.name());
    let command = format!("figure {}", tag.name());
    with_manifest(&command, None, hash, seeds.clone(), out, |art| build(tag, scale, &seeds, &csv, art))
}

fn build(tag: FigureTag, scale: Scale, seeds: &[u64], csv: &str, art: &mut Artifacts) -> Result<Summary, CliError> {
    let mlp = mlp_preset(scale);
    match tag {
        FigureTag::Fig4a => {
            let base = MlpSetup { test_multiple: 5.0, ..mlp };
            let mut cells: Vec<MlpSetup> =
                [TargetPreset::Quadratic, TargetPreset::Cos, TargetPreset::Sqrt, TargetPreset::Linear]
                    .into_iter()
                    .map(|t| mlp_cell(&base, t))
                    .collect();
            cells.push(l1_cell(&base));
            let rows = mlp_rows(&cells, seeds)?;
            art.csv(csv, &rows)?;
            Ok(mlp_summary(&rows, |r| r.target.clone()))
        }
        FigureTag::Fig4b => {
            let cube = DomainSpec::cube(2, 5.0);
            let cells: Vec<MlpSetup> =
                [Restriction::None, Restriction::FixFirst(FIX_FIRST_DEFAULT), Restriction::NegativeFirstK(2)]
                    .into_iter()
                    .map(|r| MlpSetup {
                        target: TargetPreset::Linear,
                        train_domain: cube.with_restriction(r),
                        ..mlp.clone()
                    })
                    .collect();
            let rows = mlp_rows(&cells, seeds)?;
            art.csv(csv, &rows)?;
            Ok(mlp_summary(&rows, |r| r.geometry.clone()))
        }
        FigureTag::Fig5a => {
            let md = max_degree_preset(scale);
            let mut rows = Vec::new();
            for readout in [Readout::Max, Readout::Sum] {
                rows.extend(run_max_degree_experiment(&MaxDegreeSetup { readout, ..md.clone() }, seeds)?);
            }
            let sp = ShortestPathSetup { weight_extrapolation: true, ..shortest_path_preset(scale) };
            for aggregation in SP_AGGREGATIONS {
                rows.extend(run_shortest_path_experiment(&ShortestPathSetup { aggregation, ..sp.clone() }, seeds)?);
            }
            gnn_results(art, csv, &rows)
        }
        FigureTag::Fig5b => {
            let cfg =
                ExperimentConfig { seeds: seeds.to_vec(), ..ExperimentConfig::preset(ExperimentKind::Nbody, scale) };
            let rows = nbody_rows(&cfg)?;
            nbody_results(art, csv, &rows)
        }
        FigureTag::Fig6a => {
            let md = max_degree_preset(scale);
            let mut rows = Vec::new();
            for family in max_degree_families() {
                let setup = MaxDegreeSetup { train_family: family, readout: Readout::Max, ..md.clone() };
                rows.extend(run_max_degree_experiment(&setup, seeds)?);
            }
            gnn_results(art, csv, &rows)
        }
        FigureTag::Fig6b => {
            let sp = shortest_path_preset(scale);
            let mut rows = Vec::new();
            for p in SPARSITY_SWEEP {
                let setup = ShortestPathSetup { train_family: GraphFamily::Gnp(p), ..sp.clone() };
                rows.extend(run_shortest_path_experiment(&setup, seeds)?);
            }
            gnn_results(art, csv, &rows)
        }
        FigureTag::Fig7 => {
            let grid = ActivationGrid::default();
            let base = MlpSetup { train_domain: DomainSpec::cube(1, 1.0), ..mlp };
            let mut cells = Vec::new();
            for &a in &grid.activations {
                for &t in &grid.targets {
                    cells.push(MlpSetup { activation: a, ..mlp_cell(&base, t) });
                }
            }
            let rows = mlp_rows(&cells, seeds)?;
            art.csv(csv, &rows)?;
            Ok(mlp_summary(&rows, |r| format!("{}/{}", r.activation, r.target)))
        }
    }
}
