use std::path::{Path, PathBuf};

use spider_em::algorithms::AlgorithmKind;
use spider_em_harness::trace_csv::{read_trace, without_wall_clock};
use spider_em_harness::{run_experiment, summarize_quantiles, ExperimentConfig, HarnessError, Settings};

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(text).unwrap()
}

const SCALAR_EM: &str = r#"
name = "scalar"
[model]
kind = "scalar2"
[data]
source = "scalar"
n = 1500
seed = 4
[run]
algorithms = ["em"]
epochs = 25
"#;

const SMALL_GMM: &str = r#"
name = "small"
[model]
kind = "gmm"
components = 3
dim = 2
[data]
source = "mixture"
n = 500
components = 3
dim = 2
separation = 3.0
seed = 2
[init]
seed = 3
[run]
algorithms = ["online-em", "iem", "fiem", "sem-vr", "spider-em"]
batch_size = 50
epochs = 150
step = 0.05
steps = { iem = 1.0 }
warm_start_epochs = 2
seed_count = 3
"#;

fn settings(jobs: usize) -> Settings {
    Settings { seed_offset: 0, jobs }
}

#[test]
fn batch_em_writes_a_decreasing_objective() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&config(SCALAR_EM), dir.path(), settings(1)).unwrap();
    assert_eq!(out.records.len(), 1);
    let rows = read_trace(&out.records[0].path).unwrap();
    assert_eq!(rows.len(), 26);
    let w: Vec<f64> = rows.iter().map(|r| r.objective.unwrap()).collect();
    assert!(w.windows(2).all(|p| p[1] <= p[0] + 1e-12), "{w:?}");
    assert_eq!(rows.last().unwrap().status, "completed");
    assert_eq!(rows.last().unwrap().ce_count, 1500 * 26);
    assert_eq!(out.records[0].accounting_ok, Some(true));

    let manifest = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains(&config(SCALAR_EM).hash()));
    // The stored config is canonical: parsing it back gives the same hash.
    let stored = ExperimentConfig::load(dir.path().join("config.toml")).unwrap();
    assert_eq!(stored.hash(), config(SCALAR_EM).hash());
}

#[test]
fn every_epoch_gets_one_row_and_counters_match_the_accounting() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&config(SMALL_GMM), dir.path(), settings(2)).unwrap();
    assert_eq!(out.records.len(), 15);
    for r in &out.records {
        assert!(!r.trace.diverged(), "{} {}: {:?}", r.kind, r.seed, r.trace.status);
        let rows = read_trace(&r.path).unwrap();
        let epochs: Vec<u64> = rows.iter().map(|r| r.epoch).collect();
        assert_eq!(epochs, (0..=150).collect::<Vec<_>>(), "{}", r.kind);
        assert_eq!(r.accounting_ok, Some(true), "{} {}", r.kind, r.seed);
    }
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 16);
    assert!(summary.lines().skip(1).all(|l| l.contains(",completed,")));
}

#[test]
fn worker_count_does_not_change_the_output() {
    let cfg = config(&SMALL_GMM.replace("epochs = 150", "epochs = 10"));
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&cfg, a.path(), settings(1)).unwrap();
    run_experiment(&cfg, b.path(), settings(3)).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() > 10);
    for name in names {
        let (x, y) = (a.path().join(&name), b.path().join(&name));
        if name.to_string_lossy().ends_with(".csv") {
            assert_eq!(without_wall_clock(&x).unwrap(), without_wall_clock(&y).unwrap(), "{name:?}");
        } else {
            assert_eq!(std::fs::read(&x).unwrap(), std::fs::read(&y).unwrap(), "{name:?}");
        }
    }
}

#[test]
fn seed_offset_changes_the_draws() {
    let cfg = config(&SMALL_GMM.replace("epochs = 150", "epochs = 4"));
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let x = run_experiment(&cfg, a.path(), settings(1)).unwrap();
    let y = run_experiment(&cfg, b.path(), Settings { seed_offset: 100, jobs: 1 }).unwrap();
    assert_ne!(x.records[0].trace.final_state, y.records[0].trace.final_state);
    // Records and file names keep the config seed; the offset goes to the manifest.
    assert_eq!(y.records[0].seed, 0);
    let manifest = std::fs::read_to_string(b.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed_offset = 100"));
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

const HEADER: &str = "epoch,t,k,tau,W,h_sq_norm,ce_count,mstep_count,wall_ms,status\n";

fn trace(h: &[f64]) -> String {
    let mut s = HEADER.to_string();
    for (e, v) in h.iter().enumerate() {
        let status = if e + 1 == h.len() { "completed" } else { "running" };
        s += &format!("{e},1,{e},{e},1.0,{v:e},{},{},0.5,{status}\n", 10 * e, e);
    }
    s
}

#[test]
fn quantiles_of_identical_and_spread_traces() {
    let dir = tempfile::tempdir().unwrap();
    let same: Vec<PathBuf> = (0..3).map(|i| write(dir.path(), &format!("s{i}.csv"), &trace(&[1.0, 0.5, 0.25]))).collect();
    let t = summarize_quantiles(&same, &[0.1, 0.5, 0.9]).unwrap();
    for e in 0..3 {
        let v = t.at(e, "h_sq_norm", 0).unwrap();
        assert_eq!(v, t.at(e, "h_sq_norm", 2).unwrap());
    }
    assert_eq!(t.terminal("h_sq_norm", 1), Some(0.25));

    let spread: Vec<PathBuf> = [1.0, 2.0, 3.0, 4.0, 5.0]
        .iter()
        .enumerate()
        .map(|(i, v)| write(dir.path(), &format!("p{i}.csv"), &trace(&[*v, v / 10.0])))
        .collect();
    let t = summarize_quantiles(&spread, &[0.0, 0.5, 1.0]).unwrap();
    assert_eq!(t.at(0, "h_sq_norm", 0), Some(1.0));
    assert_eq!(t.at(0, "h_sq_norm", 1), Some(3.0));
    assert_eq!(t.at(0, "h_sq_norm", 2), Some(5.0));
    let csv = dir.path().join("q.csv");
    t.write_csv(&csv).unwrap();
    assert!(std::fs::read_to_string(csv).unwrap().lines().count() > 2);
}

#[test]
fn quantile_inputs_are_validated() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.csv", &trace(&[1.0, 0.5, 0.25]));
    let b = write(dir.path(), "b.csv", &trace(&[1.0, 0.5]));
    assert!(summarize_quantiles(std::slice::from_ref(&a), &[0.5]).is_err());
    assert!(summarize_quantiles(&[a.clone(), b], &[0.5]).is_err());
    let bad = write(dir.path(), "bad.csv", "epoch,tau\n0,0\n");
    assert!(matches!(summarize_quantiles(&[a.clone(), bad], &[0.5]), Err(HarnessError::Input(_)) | Err(HarnessError::Csv(_))));
    let c = write(dir.path(), "c.csv", &trace(&[1.0, 0.5, 0.25]));
    assert!(summarize_quantiles(&[a, c], &[1.5]).is_err());
}

#[test]
fn configs_report_the_offending_field() {
    let cases = [
        (SCALAR_EM.replace("epochs = 25", "epochs = 25\nk_in = 3"), "run.k_in"),
        (SCALAR_EM.replace("n = 1500", "n = 0"), "data.n"),
        (SCALAR_EM.replace("[\"em\"]", "[\"em\", \"spider\"]"), "run.algorithms"),
        (SCALAR_EM.replace("seed = 4", "seed = 4\ncolour = 1"), "colour"),
    ];
    for (text, field) in cases {
        let e = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(e.to_string().contains(field), "{field}: {e}");
    }
    let ok = config(SMALL_GMM);
    assert_eq!(ok.algorithms()[4], AlgorithmKind::SpiderEm);
}
