use std::io::Write;

use extrapolab::gnn::{max_degree_dataset, shortest_path_dataset, GraphExample};
use extrapolab::graphgen::{write_jsonl, GraphLabel, SP_EXTRAP_WEIGHT_HI, SP_TRAIN_WEIGHT_HI};
use extrapolab::mlp::test_domain;
use extrapolab::nbody::{sample_frames, DistanceFilter, SimConfig};
use extrapolab::numerics::RandomSource;
use extrapolab::synth::{make_splits, LabeledSet};

use crate::config::{mlp_cell, ExperimentConfig, ExperimentKind};
use crate::error::CliError;
use crate::output::{Artifacts, Summary};

/// Writes the datasets an experiment would train and test on, one directory per seed.
pub fn generate(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<Summary, CliError> {
    let mut summary = Summary::new();
    for &seed in &cfg.seeds {
        let dir = format!("seed{seed}");
        match cfg.kind {
            ExperimentKind::MlpExtrap
            | ExperimentKind::LinearGeometry
            | ExperimentKind::ActivationStudy
            | ExperimentKind::DirectionSweep => {
                let setup = match cfg.kind {
                    ExperimentKind::MlpExtrap => mlp_cell(&cfg.mlp, cfg.mlp_extrap.targets[0]),
                    _ => cfg.mlp.clone(),
                };
                setup.validate()?;
                let rng = RandomSource::new(seed, "mlp-data");
                let target = setup.target.resolve(setup.train_domain.dim, &mut rng.derive("target"));
                let test_spec = test_domain(&setup.train_domain, setup.test_multiple)?;
                let s = make_splits(
                    &target,
                    &setup.train_domain,
                    &test_spec,
                    setup.n_train,
                    setup.n_val,
                    setup.n_test,
                    &rng,
                )?;
                for (name, set) in [("train", &s.train), ("val", &s.val), ("test", &s.test)] {
                    write_set(art, &format!("{dir}/{name}"), set, seed)?;
                }
                summary.insert(format!("{dir}.train_rows"), Some(s.train.len() as f64));
            }
            ExperimentKind::MaxDegree => {
                let m = &cfg.max_degree;
                let mut rng = RandomSource::new(seed, "max-degree-data");
                let train = max_degree_dataset(m.train_family, m.n_train, m.train_nodes, m.features, &mut rng)?;
                let test = max_degree_dataset(m.test_family, m.n_test, m.test_nodes, m.features, &mut rng)?;
                write_graphs(art, &format!("{dir}/train.jsonl"), &train)?;
                write_graphs(art, &format!("{dir}/test.jsonl"), &test)?;
                summary.insert(format!("{dir}.train_graphs"), Some(train.len() as f64));
            }
            ExperimentKind::ShortestPath => {
                let p = &cfg.shortest_path;
                let mut rng = RandomSource::new(seed, "shortest-path-data");
                let train =
                    shortest_path_dataset(p.train_family, p.n_train, p.train_nodes, SP_TRAIN_WEIGHT_HI, &mut rng)?;
                let hi = if p.weight_extrapolation { SP_EXTRAP_WEIGHT_HI } else { SP_TRAIN_WEIGHT_HI };
                let test = shortest_path_dataset(p.test_family, p.n_test, p.test_nodes, hi, &mut rng)?;
                write_graphs(art, &format!("{dir}/train.jsonl"), &train)?;
                write_graphs(art, &format!("{dir}/test.jsonl"), &test)?;
                summary.insert(format!("{dir}.train_graphs"), Some(train.len() as f64));
            }
            ExperimentKind::Nbody => {
                let n = &cfg.nbody;
                let mut rng = RandomSource::new(seed, "nbody-data");
                let videos = (n.n_videos / 4).max(1);
                let sets: [(&str, &SimConfig, usize, usize, DistanceFilter); 3] = [
                    ("train", &n.train_sim, n.n_videos, n.n_train, DistanceFilter::TRAIN),
                    ("ood_mass", &n.mass_sim, videos, n.n_test, DistanceFilter::TRAIN),
                    ("ood_distance", &n.distance_sim, videos, n.n_test, DistanceFilter::NEAR),
                ];
                for (name, sim, n_videos, count, filter) in sets {
                    let frames = sample_frames(sim, n_videos, count, filter, &mut rng)?;
                    let mut f =
                        std::io::BufWriter::new(std::fs::File::create(art.path(&format!("{dir}/{name}.jsonl"))?)?);
                    for fr in &frames {
                        serde_json::to_writer(&mut f, fr)?;
                        f.write_all(b"\n")?;
                    }
                    f.flush()?;
                    summary.insert(format!("{dir}.{name}_frames"), Some(frames.len() as f64));
                }
            }
            ExperimentKind::NtkExact => {
                return Err(CliError::Validation("kind: ntk-exact has no dataset to generate".into()));
            }
        }
    }
    Ok(summary)
}

fn write_set(art: &mut Artifacts, stem: &str, set: &LabeledSet, seed: u64) -> Result<(), CliError> {
    set.write_csv(&art.path(&format!("{stem}.csv"))?)?;
    set.write_metadata(&art.path(&format!("{stem}.meta"))?, seed)?;
    Ok(())
}

fn write_graphs(art: &mut Artifacts, name: &str, set: &[GraphExample]) -> Result<(), CliError> {
    let items: Vec<_> = set.iter().map(|e| (e.graph.clone(), Some(GraphLabel::Scalar(e.target.get(0, 0))))).collect();
    write_jsonl(&art.path(name)?, &items)?;
    Ok(())
}
