use std::path::Path;
use std::process::{Command, Output};

fn vbtrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vbtrack")).args(args).output().unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn params_prints_thresholds() {
    let out = vbtrack(&["params", "--lambda", "5", "--p-los", "7e-4", "--p-reloc", "0.5"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["tau"], 2);
    let m_los = v["m_los"].as_f64().unwrap();
    assert!(m_los > 1.0 && m_los < 2.0);
    let m_reloc = v["m_reloc"].as_f64().unwrap();
    assert!(m_reloc > 4.0 && m_reloc < 5.0);
    assert!((v["m_init"].as_f64().unwrap() - (m_reloc - 1.0)).abs() < 1e-12);
}

#[test]
fn simulate_then_track() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = vbtrack(&[
        "simulate",
        "--preset",
        "coalescence",
        "--k",
        "8",
        "--seed",
        "1",
        "--out",
        arg(&data),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["frames.jsonl", "truth.csv", "scenario.json"] {
        assert!(data.join(f).exists(), "{f}");
    }
    assert_eq!(
        std::fs::read_to_string(data.join("frames.jsonl"))
            .unwrap()
            .lines()
            .count(),
        50
    );

    let res = dir.path().join("res");
    let out = vbtrack(&["track", "--data", arg(&data), "--mode", "vb-relo", "--out", arg(&res)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(res.join("steps.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "step,ospa,cpu_ms,n_lost,n_relocated");
    assert_eq!(text.lines().count(), 51);
    assert!(res.join("tracks.csv").exists());
}

#[test]
fn experiment_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"preset": "moderate", "num_objects": 5, "datasets": 1, "mode": "vb-relo"}"#,
    )
    .unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (o, threads) in [(&a, "1"), (&b, "2")] {
        let out = vbtrack(&[
            "experiment",
            "--config",
            arg(&cfg),
            "--seed",
            "42",
            "--threads",
            threads,
            "--out",
            arg(o),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["dataset_000_steps.csv", "dataset_000_events.csv", "per_step_mean.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn relocate_demo_dumps_inits() {
    let dir = tempfile::tempdir().unwrap();
    let out = vbtrack(&["relocate-demo", "--seed", "3", "--out", arg(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut r = csv::Reader::from_path(dir.path().join("inits.csv")).unwrap();
    let rows: Vec<vbtrack::io::InitRow> = r.deserialize().map(Result::unwrap).collect();
    assert!(rows.len() > 50);
    assert_eq!(rows.iter().filter(|r| r.winner).count(), 1);
    let w = rows.iter().find(|r| r.winner).unwrap();
    assert!(rows.iter().filter(|r| r.eligible).all(|r| r.elbo <= w.elbo));
}

#[test]
fn exit_codes() {
    assert_eq!(vbtrack(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(vbtrack(&["params", "--bogus", "1"]).status.code(), Some(2));
    assert_eq!(
        vbtrack(&["params", "--lambda", "5", "--p-los", "2"]).status.code(),
        Some(2)
    );
    let dir = tempfile::tempdir().unwrap();
    let out = vbtrack(&["experiment", "--mode", "fast", "--out", arg(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"datasets": 0}"#).unwrap();
    assert_eq!(
        vbtrack(&["experiment", "--config", arg(&bad), "--out", arg(dir.path())])
            .status
            .code(),
        Some(2)
    );
    let out = vbtrack(&[
        "track",
        "--data",
        arg(&dir.path().join("missing")),
        "--out",
        arg(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario.json"));
}
