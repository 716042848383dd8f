#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod error;
mod figures;
mod gen;
mod output;
mod report;
mod runner;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, ExperimentKind, Scale};
use error::CliError;
use figures::FigureTag;
use output::Manifest;

/// Experiment runner for MLP, GNN and kernel extrapolation studies.
///
/// Every command writes its outputs and a `manifest.json` with SHA-256 hashes into the
/// output directory. Exit codes: 0 success, 1 invalid input, 2 runtime failure.
#[derive(Debug, Parser)]
#[command(name = "extrapolab", version)]
struct Cli {
    /// Replaces the configured seed list with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Source {
    /// TOML experiment config. Without it a bundled preset is used.
    config: Option<PathBuf>,
    /// Experiment kind of the preset.
    #[arg(long)]
    kind: Option<ExperimentKind>,
    /// Preset size; `paper` is slow (hours).
    #[arg(long, value_enum, default_value = "desk")]
    scale: Scale,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the datasets of an experiment (CSV for regression, JSONL for graphs and frames).
    Gen(Source),
    /// MLP experiments: mlp-extrap, linear-geometry, activation-study.
    TrainMlp(Source),
    /// GNN experiments: max-degree, shortest-path.
    TrainGnn(Source),
    /// Exact NTK extrapolation of linear targets (ntk-exact).
    Ntk(Source),
    /// Directional linearity of a trained MLP (direction-sweep).
    Sweep(Source),
    /// n-body interaction networks with original and improved edge features.
    Nbody(Source),
    /// Run the grid behind a figure and write plot-ready CSV.
    Figure {
        tag: FigureTag,
        #[arg(long, value_enum, default_value = "desk")]
        scale: Scale,
    },
    /// Verify a run directory against its manifest and print the summary as JSON.
    Report { dir: PathBuf },
    /// Print a preset config as TOML.
    Preset {
        kind: ExperimentKind,
        #[arg(long, value_enum, default_value = "desk")]
        scale: Scale,
    },
}

fn load(source: &Source, allowed: &[ExperimentKind], seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &source.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::preset(source.kind.unwrap_or(allowed[0]), source.scale),
    };
    if let Some(k) = source.kind {
        if source.config.is_some() && k != cfg.kind {
            return Err(CliError::Validation(format!(
                "kind: --kind {} disagrees with the config's {}",
                k.name(),
                cfg.kind.name()
            )));
        }
    }
    if !allowed.is_empty() && !allowed.contains(&cfg.kind) {
        let names: Vec<&str> = allowed.iter().map(|k| k.name()).collect();
        return Err(CliError::Validation(format!(
            "kind: {} is not handled by this command (expected one of {})",
            cfg.kind.name(),
            names.join(", ")
        )));
    }
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_manifest(out: &Path, m: &Manifest) {
    println!("{}", out.join(output::MANIFEST).display());
    for (k, v) in &m.summary {
        match v {
            Some(v) => println!("  {k} = {v:.6}"),
            None => println!("  {k} = non-finite"),
        }
    }
}

fn experiment(cli: &Cli, source: &Source, command: &str, allowed: &[ExperimentKind]) -> Result<(), CliError> {
    let cfg = load(source, allowed, cli.seed)?;
    let out = runner::resolve_out(cli.out.as_deref(), &cfg);
    let m = runner::run(command, &cfg, &out)?;
    print_manifest(&out, &m);
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    use ExperimentKind::*;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(format!("threads: {e}")))?;
    }
    match &cli.command {
        Command::Gen(source) => {
            let cfg = load(
                source,
                &[MlpExtrap, LinearGeometry, ActivationStudy, DirectionSweep, MaxDegree, ShortestPath, Nbody],
                cli.seed,
            )?;
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("data").join(cfg.kind.name()));
            let m = runner::with_manifest("gen", Some(cfg.kind.name()), cfg.hash(), cfg.seeds.clone(), &out, |art| {
                art.text(runner::CONFIG_COPY, &cfg.to_toml())?;
                gen::generate(&cfg, art)
            })?;
            print_manifest(&out, &m);
            Ok(())
        }
        Command::TrainMlp(s) => experiment(cli, s, "train-mlp", &[MlpExtrap, LinearGeometry, ActivationStudy]),
        Command::TrainGnn(s) => experiment(cli, s, "train-gnn", &[MaxDegree, ShortestPath]),
        Command::Ntk(s) => experiment(cli, s, "ntk", &[NtkExact]),
        Command::Sweep(s) => experiment(cli, s, "sweep", &[DirectionSweep]),
        Command::Nbody(s) => experiment(cli, s, "nbody", &[Nbody]),
        Command::Figure { tag, scale } => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("figures").join(tag.name()));
            let m = figures::reproduce(*tag, *scale, cli.seed, &out)?;
            print_manifest(&out, &m);
            Ok(())
        }
        Command::Report { dir } => {
            let r = report::verify(dir)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
            Ok(())
        }
        Command::Preset { kind, scale } => {
            let mut cfg = ExperimentConfig::preset(*kind, *scale);
            if let Some(s) = cli.seed {
                cfg.seeds = vec![s];
            }
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
