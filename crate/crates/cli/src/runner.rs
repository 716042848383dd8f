use std::path::{Path, PathBuf};
use std::time::Instant;

use extrapolab::diagnostics::sweep_directions;
use extrapolab::gnn::{run_max_degree_experiment, run_shortest_path_experiment, GnnRunResult};
use extrapolab::mlp::{run_mlp_experiment, train_mlp_setup, MlpRunResult, MlpSetup};
use extrapolab::nbody::{run_nbody_experiment, EdgeScheme, NbodyRunResult};
use extrapolab::ntk::{exact_extrapolation_check, kernel_regress, KernelSpec};
use extrapolab::numerics::{dot, random_orthogonal, Matrix, RandomSource};
use serde::Serialize;

use crate::config::{mlp_cell, parse_geometry, ExperimentConfig, ExperimentKind};
use crate::error::CliError;
use crate::output::{finite, group_means, Artifacts, Manifest, RunStatus, Summary};

pub const RESULTS: &str = "results.csv";
pub const CONFIG_COPY: &str = "config.toml";

/// Output directory: `--out`, then the config's `out`, then `runs/<kind>-<hash prefix>`.
pub fn resolve_out(flag: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(format!("{}-{}", cfg.kind.name(), &cfg.hash()[..12])))
}

/// Runs `body` into `out` and writes the manifest, flagging partial results on failure.
pub fn with_manifest(
    command: &str,
    kind: Option<&str>,
    config_hash: String,
    seeds: Vec<u64>,
    out: &Path,
    body: impl FnOnce(&mut Artifacts) -> Result<Summary, CliError>,
) -> Result<Manifest, CliError> {
    let start = Instant::now();
    let mut art = Artifacts::create(out)?;
    let result = body(&mut art);
    let (status, error, summary) = match &result {
        Ok(s) => (RunStatus::Complete, None, s.clone()),
        Err(e) => (RunStatus::Failed, Some(e.to_string()), Summary::new()),
    };
    let manifest = art.finish(Manifest {
        schema: 0,
        command: command.to_string(),
        kind: kind.map(str::to_string),
        config_hash,
        seeds,
        status,
        error,
        wall_time_secs: start.elapsed().as_secs_f64(),
        summary,
        files: Vec::new(),
    })?;
    result.map(|_| manifest)
}

/// Executes the configured experiment, writing `config.toml`, `results.csv` and extras.
pub fn run(command: &str, cfg: &ExperimentConfig, out: &Path) -> Result<Manifest, CliError> {
    cfg.validate()?;
    with_manifest(command, Some(cfg.kind.name()), cfg.hash(), cfg.seeds.clone(), out, |art| {
        art.text(CONFIG_COPY, &cfg.to_toml())?;
        run_kind(cfg, art)
    })
}

fn run_kind(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Summary, CliError> {
    match cfg.kind {
        ExperimentKind::MlpExtrap => {
            let cells: Vec<MlpSetup> = cfg.mlp_extrap.targets.iter().map(|&t| mlp_cell(&cfg.mlp, t)).collect();
            mlp_results(art, &cells, &cfg.seeds, |r| r.target.clone())
        }
        ExperimentKind::LinearGeometry => {
            let dim = cfg.mlp.train_domain.dim;
            let cells = cfg
                .linear_geometry
                .geometries
                .iter()
                .map(|g| {
                    let r = parse_geometry(g, dim).map_err(CliError::Validation)?;
                    Ok(MlpSetup { train_domain: cfg.mlp.train_domain.with_restriction(r), ..cfg.mlp.clone() })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            mlp_results(art, &cells, &cfg.seeds, |r| r.geometry.clone())
        }
        ExperimentKind::ActivationStudy => {
            let g = &cfg.activation_study;
            let mut cells = Vec::new();
            for &a in &g.activations {
                for &t in &g.targets {
                    cells.push(MlpSetup { activation: a, ..mlp_cell(&cfg.mlp, t) });
                }
            }
            mlp_results(art, &cells, &cfg.seeds, |r| format!("{}/{}", r.activation, r.target))
        }
        ExperimentKind::NtkExact => ntk_exact(cfg, art),
        ExperimentKind::DirectionSweep => direction_sweep(cfg, art),
        ExperimentKind::MaxDegree => {
            let rows = run_max_degree_experiment(&cfg.max_degree, &cfg.seeds)?;
            gnn_results(art, RESULTS, &rows)
        }
        ExperimentKind::ShortestPath => {
            let rows = run_shortest_path_experiment(&cfg.shortest_path, &cfg.seeds)?;
            gnn_results(art, RESULTS, &rows)
        }
        ExperimentKind::Nbody => {
            let rows = nbody_rows(cfg)?;
            nbody_results(art, RESULTS, &rows)
        }
    }
}

pub fn mlp_rows(cells: &[MlpSetup], seeds: &[u64]) -> Result<Vec<MlpRunResult>, CliError> {
    let mut rows = Vec::new();
    for c in cells {
        rows.extend(run_mlp_experiment(c, seeds)?);
    }
    Ok(rows)
}

/// Writes `results.csv` and summarizes mean in-distribution and OOD MAPE per group.
pub fn mlp_results(
    art: &mut Artifacts,
    cells: &[MlpSetup],
    seeds: &[u64],
    group: impl Fn(&MlpRunResult) -> String,
) -> Result<Summary, CliError> {
    let rows = mlp_rows(cells, seeds)?;
    art.csv(RESULTS, &rows)?;
    Ok(mlp_summary(&rows, group))
}

pub fn mlp_summary(rows: &[MlpRunResult], group: impl Fn(&MlpRunResult) -> String) -> Summary {
    let mut s = group_means(rows, |r| format!("{}.ood_mape_mean", group(r)), |r| r.ood_mape);
    s.extend(group_means(rows, |r| format!("{}.in_mape_mean", group(r)), |r| r.in_mape));
    s
}

pub fn gnn_results(art: &mut Artifacts, name: &str, rows: &[GnnRunResult]) -> Result<Summary, CliError> {
    art.csv(name, rows)?;
    Ok(group_means(
        rows,
        |r| format!("{}/{}/{}/{}.mape_mean", r.train_family, r.aggregation, r.readout, r.split),
        |r| r.mape,
    ))
}

pub fn nbody_rows(cfg: &ExperimentConfig) -> Result<Vec<NbodyRunResult>, CliError> {
    let mut rows = run_nbody_experiment(&cfg.nbody, EdgeScheme::Original, &cfg.seeds)?;
    rows.extend(run_nbody_experiment(&cfg.nbody, EdgeScheme::Improved, &cfg.seeds)?);
    Ok(rows)
}

pub fn nbody_results(art: &mut Artifacts, name: &str, rows: &[NbodyRunResult]) -> Result<Summary, CliError> {
    art.csv(name, rows)?;
    Ok(group_means(rows, |r| format!("{}/{}.mape_mean", r.scheme, r.split), |r| r.mape))
}

#[derive(Serialize)]
struct NtkRow {
    seed: u64,
    dim: usize,
    basis: usize,
    max_error: f64,
}

fn ntk_exact(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Summary, CliError> {
    let n = &cfg.ntk;
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let mut rng = RandomSource::new(seed, "ntk-exact");
        for &d in &n.dims {
            for basis in 0..n.bases {
                let q = random_orthogonal(d, &mut rng)?;
                let beta = rng.normal_vec(d);
                if basis == 0 && seed == cfg.seeds[0] {
                    let mut x = Matrix::zeros(2 * d, d);
                    for i in 0..d {
                        for r in 0..d {
                            x.set(2 * i, r, n.scale * q.get(r, i));
                            x.set(2 * i + 1, r, -n.scale * q.get(r, i));
                        }
                    }
                    let y: Vec<f64> = x.row_iter().map(|row| dot(&beta, row)).collect();
                    let model = kernel_regress(&KernelSpec::default(), &x, &y)?;
                    art.text(&format!("predictor_d{d}.json"), &model.to_json()?)?;
                }
                let max_error = exact_extrapolation_check(&beta, &q, n.scale, n.n_test, n.test_scale, &mut rng)?;
                rows.push(NtkRow { seed, dim: d, basis, max_error });
            }
        }
    }
    art.csv("max_errors.csv", &rows)?;
    let mut s = group_means(&rows, |r| format!("d{}.max_error_mean", r.dim), |r| r.max_error);
    s.insert("max_error".into(), finite(rows.iter().map(|r| r.max_error).fold(0.0, f64::max)));
    Ok(s)
}

#[derive(Serialize)]
struct SweepRow {
    seed: u64,
    rays: usize,
    non_finite: usize,
    fraction_r2_above: f64,
}

fn direction_sweep(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Summary, CliError> {
    let s = &cfg.sweep;
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let trained = train_mlp_setup(&cfg.mlp, seed)?;
        let mut rng = RandomSource::new(seed, "directions");
        let sweep = sweep_directions(
            &format!("{}-{}", trained.target.name(), cfg.mlp.activation.name()),
            |x| trained.model.forward(x),
            &cfg.mlp.train_domain,
            s.n_dirs,
            s.n_points,
            s.reach,
            &mut rng,
        )?;
        let path = art.path(&format!("rays_seed{seed}.csv"))?;
        sweep.write_csv(&path)?;
        rows.push(SweepRow {
            seed,
            rays: sweep.rays.len(),
            non_finite: sweep.non_finite,
            fraction_r2_above: sweep.fraction_above(s.r2_threshold),
        });
    }
    art.csv("sweep_summary.csv", &rows)?;
    let mut out = Summary::new();
    out.insert(
        "fraction_r2_above_min".into(),
        finite(rows.iter().map(|r| r.fraction_r2_above).fold(f64::INFINITY, f64::min)),
    );
    out.insert("r2_threshold".into(), Some(s.r2_threshold));
    Ok(out)
}
