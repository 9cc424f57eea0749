use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use msgp::archive::ModelArchive;
use msgp::validation::CvReport;
use serde_json::Value;

fn msgp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msgp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A g-function bundle with a run config shrunk for test time.
fn bundle(dir: &Path) -> PathBuf {
    ok(&msgp(&["--seed", "4", "testfn", "--name", "sobol-g", "--n", "60", "--out", s(dir)]));
    let cfg_path = dir.join("run.json");
    let mut cfg: Value = serde_json::from_str(&fs::read_to_string(&cfg_path).unwrap()).unwrap();
    cfg["mcmc"]["iterations"] = 400.into();
    cfg["mcmc"]["burn_in"] = 100.into();
    cfg["mcmc"]["thin"] = 5.into();
    cfg["sa"]["s"] = 500.into();
    cfg["sa"]["max_draws"] = 8.into();
    cfg["sa"]["main_effect_s"] = 100.into();
    cfg["sa"]["grid"] = 5.into();
    fs::write(&cfg_path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    cfg_path
}

#[test]
fn pipeline_runs_end_to_end_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = bundle(d);
    let (design, outputs) = (d.join("design.csv"), d.join("outputs.csv"));
    let run = |out: &str| {
        ok(&msgp(&[
            "--config",
            s(&cfg),
            "--threads",
            "2",
            "run",
            "--design",
            s(&design),
            "--outputs",
            s(&outputs),
            "--out",
            s(&d.join(out)),
        ]))
    };
    run("a");
    run("b");
    let a = fs::read(d.join("a/indices.json")).unwrap();
    assert_eq!(a, fs::read(d.join("b/indices.json")).unwrap());

    let report: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(report["inputs"].as_array().unwrap().len(), 8);
    assert_eq!(report["indices"]["first_order"].as_array().unwrap().len(), 8);
    assert_eq!(report["ranking"].as_array().unwrap().len(), 8);

    let digest = report["config_digest"].as_str().unwrap().to_string();
    for file in ["psrf.csv", "main_effects.csv"] {
        let text = fs::read_to_string(d.join("a").join(file)).unwrap();
        assert_eq!(text.lines().next().unwrap(), format!("# config_digest={digest}"));
    }
    let effects = fs::read_to_string(d.join("a/main_effects.csv")).unwrap();
    assert_eq!(effects.lines().filter(|l| !l.starts_with('#')).count(), 1 + 8 * 5);
}

#[test]
fn missing_design_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = msgp(&["run", "--design", s(&missing), "--outputs", s(&missing), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(s(&missing)));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"mcmc": {"iterations": 10, "burnin": 2}}"#).unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, r#"{"variables":[{"name":"a","kind":"continuous","lower":0,"upper":1}]}"#).unwrap();
    let out = msgp(&["--config", s(&cfg), "design", "--spec", s(&spec), "--n", "5", "--out", s(&dir.path().join("d.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("burnin"));
}

#[test]
fn fit_predict_diag_and_sa_share_one_archive() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = bundle(d);
    let model = d.join("model.jsonl");
    ok(&msgp(&[
        "--config",
        s(&cfg),
        "fit",
        "--design",
        s(&d.join("design.csv")),
        "--outputs",
        s(&d.join("outputs.csv")),
        "--out",
        s(&model),
    ]));

    let archive = ModelArchive::load(&model).unwrap();
    assert_eq!(archive.chains.len(), 3);
    assert!(archive.chains.iter().all(|c| c.len() == 60));
    assert_eq!(archive.to_jsonl(), fs::read_to_string(&model).unwrap());

    ok(&msgp(&["diag", "--model", s(&model), "--out", s(&d.join("psrf.csv"))]));
    let psrf = fs::read_to_string(d.join("psrf.csv")).unwrap();
    assert!(psrf.lines().any(|l| l.starts_with("tau[1],")));

    // Predicting the training design reproduces the training outputs.
    ok(&msgp(&[
        "predict",
        "--model",
        s(&model),
        "--design",
        s(&d.join("design.csv")),
        "--out",
        s(&d.join("pred.csv")),
    ]));
    let pred = fs::read_to_string(d.join("pred.csv")).unwrap();
    let mut rows = pred.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(rows.next().unwrap(), "g_mean,g_lower,g_upper");
    let observed = fs::read_to_string(d.join("outputs.csv")).unwrap();
    let observed: Vec<f64> = observed.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.parse().unwrap()).collect();
    for (row, y) in rows.zip(&observed) {
        let v: Vec<f64> = row.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((v[0] - y).abs() < 1e-3 * y.abs().max(1.0), "{row} vs {y}");
        assert!(v[1] <= v[0] && v[0] <= v[2]);
    }

    let idx = d.join("sa.json");
    ok(&msgp(&["sa", "--model", s(&model), "--s", "300", "--max-draws", "4", "--out", s(&idx)]));
    let report: Value = serde_json::from_str(&fs::read_to_string(&idx).unwrap()).unwrap();
    assert_eq!(report["s"], 300);
    assert_eq!(report["draws_used"], 4);
    assert!(d.join("sa_main_effects.csv").exists());
}

#[test]
fn cross_validation_report_can_be_audited() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = bundle(d);
    let out = d.join("cv.json");
    let res = msgp(&[
        "--config",
        s(&cfg),
        "cv",
        "--design",
        s(&d.join("design.csv")),
        "--outputs",
        s(&d.join("outputs.csv")),
        "--folds",
        "3",
        "--omegas",
        "0.5,0.7",
        "--out",
        s(&out),
    ]);
    ok(&res);
    assert!(String::from_utf8_lossy(&res.stdout).starts_with("kernel,omega,mean_P,mean_rho,fit_seconds"));
    let report: CvReport = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report.levels.len(), 2);
    for level in &report.levels {
        assert_eq!(level.folds.len(), 3);
        assert_eq!(level.folds.iter().map(|f| f.test_rows.len()).sum::<usize>(), 60);
        let (per_fold, aggregate) = level.recompute(1);
        assert_eq!(aggregate, level.aggregate);
        for (f, m) in level.folds.iter().zip(per_fold) {
            assert_eq!(f.metrics, m);
        }
    }
}

#[test]
fn design_command_crosses_categoricals() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"variables":[
            {"name":"rain","kind":"continuous","lower":0,"upper":10},
            {"name":"scenario","kind":"categorical","levels":["low","high"]}
        ]}"#,
    )
    .unwrap();
    let out = dir.path().join("design.csv");
    ok(&msgp(&["--seed", "3", "design", "--spec", s(&spec), "--n", "10", "--optimize", "--out", s(&out)]));
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "rain,scenario");
    assert_eq!(rows.len(), 21);
    assert_eq!(rows.iter().filter(|r| r.ends_with(",low")).count(), 10);
}
