use std::path::Path;
use std::process::{Command, Output};

use extrapolab::graphgen::{read_jsonl, GraphLabel};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_extrapolab"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn preset(kind: &str, dir: &Path) -> std::path::PathBuf {
    let o = run(&["preset", kind, "--scale", "smoke"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let p = dir.join(format!("{kind}.toml"));
    std::fs::write(&p, &o.stdout).unwrap();
    p
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn ntk_config_reports_machine_precision_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("ntk.toml");
    std::fs::write(&cfg, "kind = \"ntk-exact\"\nseeds = [3]\n[ntk]\ndims = [2]\nbases = 5\n").unwrap();
    let out = tmp.path().join("run");
    let o = run(&["ntk", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = manifest(&out);
    assert_eq!(m["status"], "complete");
    assert!(m["summary"]["max_error"].as_f64().unwrap() < 1e-6);
    let files: Vec<&str> = m["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap()).collect();
    assert_eq!(files, ["config.toml", "predictor_d2.json", "max_errors.csv"]);
    let csv = std::fs::read_to_string(out.join("max_errors.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "seed,dim,basis,max_error");
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn unknown_kind_is_a_validation_error_naming_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "kind = \"teleport\"\n").unwrap();
    let o = run(&["ntk", cfg.to_str().unwrap(), "--out", tmp.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("kind"), "{}", stderr(&o));
}

#[test]
fn unknown_and_invalid_fields_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("typo.toml");
    std::fs::write(&cfg, "kind = \"ntk-exact\"\nsedes = [1]\n").unwrap();
    let o = run(&["ntk", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sedes"), "{}", stderr(&o));

    std::fs::write(&cfg, "kind = \"max-degree\"\n[max_degree]\nn_train = 0\n").unwrap();
    let o = run(&["train-gnn", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("max_degree"), "{}", stderr(&o));
}

#[test]
fn subcommand_rejects_other_kinds() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = preset("nbody", tmp.path());
    let o = run(&["train-mlp", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nbody"));
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = run(&["ntk", "--scale", "smoke", "--out", blocker.join("run").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn same_config_gives_identical_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = preset("linear-geometry", tmp.path());
    let mut results = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let o = run(&["train-mlp", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "2"]);
        assert!(o.status.success(), "{}", stderr(&o));
        results.push(std::fs::read(out.join("results.csv")).unwrap());
        let m = manifest(&out);
        assert_eq!(m["kind"], "linear-geometry");
    }
    assert_eq!(results[0], results[1]);
    assert_eq!(manifest(&tmp.path().join("a"))["config_hash"], manifest(&tmp.path().join("b"))["config_hash"]);
    let text = String::from_utf8(results[0].clone()).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("target,geometry,activation,depth,width,seed,in_mape,ood_mape"));
    // two geometries x two seeds
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn report_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = run(&["ntk", "--scale", "smoke", "--seed", "4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&["report", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["files_verified"], 3);
    assert_eq!(manifest(&out)["seeds"], serde_json::json!([4]));

    std::fs::write(out.join("max_errors.csv"), "seed,dim,basis,max_error\n").unwrap();
    let o = run(&["report", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("max_errors.csv"));
}

#[test]
fn generated_graphs_carry_max_degree_labels() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = preset("max-degree", tmp.path());
    let out = tmp.path().join("data");
    let o = run(&["gen", cfg.to_str().unwrap(), "--seed", "1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let graphs = read_jsonl(&out.join("seed1/test.jsonl")).unwrap();
    assert_eq!(graphs.len(), 10);
    for (g, label) in graphs {
        let want = g.degrees().into_iter().max().unwrap() as f64;
        assert_eq!(label, Some(GraphLabel::Scalar(want)));
        assert!(g.num_nodes() >= 20 && g.num_nodes() <= 30);
    }
}

#[test]
fn fig5a_has_rows_per_task_module_and_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fig");
    let o = run(&["figure", "fig5a", "--scale", "smoke", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut r = csv::Reader::from_path(out.join("fig5a.csv")).unwrap();
    let headers = r.headers().unwrap().clone();
    for col in ["task", "train_family", "aggregation", "readout", "seed", "split", "mape"] {
        assert!(headers.iter().any(|h| h == col), "missing {col}");
    }
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    // max degree: 2 readouts x 2 seeds x 2 splits; shortest path: 3 aggregations x 2 seeds x 3 splits
    assert_eq!(rows.len(), 8 + 18);
    let m = manifest(&out);
    assert_eq!(m["command"], "figure fig5a");
    assert_eq!(m["files"].as_array().unwrap().len(), 1);
}

#[test]
fn presets_round_trip_through_their_config_files() {
    let tmp = tempfile::tempdir().unwrap();
    for kind in [
        "mlp-extrap",
        "linear-geometry",
        "activation-study",
        "ntk-exact",
        "direction-sweep",
        "max-degree",
        "shortest-path",
        "nbody",
    ] {
        let cfg = preset(kind, tmp.path());
        let text = std::fs::read_to_string(&cfg).unwrap();
        assert!(text.contains(&format!("kind = \"{kind}\"")));
        let o = run(&["preset", kind, "--scale", "desk"]);
        assert!(o.status.success());
    }
}

#[test]
fn bad_flags_exit_with_validation_code() {
    let o = run(&["figure", "fig99"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
}
