use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tbell"))
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn tbell")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, reps: u64) -> PathBuf {
    let cfg = serde_json::json!({
        "source": { "g": 0.047, "sigma_tech": 0.31 },
        "detectors": { "eta_a": 0.1, "eta_b0": 2.54e-4, "p_dc": 9e-6 },
        "vibration": { "tau_phonon": 3.78 },
        "plan": { "delays": [0.66], "reps_per_setting": reps, "seed": 11 }
    });
    let p = dir.join("cfg.json");
    std::fs::write(&p, cfg.to_string()).unwrap();
    p
}

#[test]
fn predict_reference_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = root().join("configs/reference.json");
    let out = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--format",
        "csv",
        "predict",
        "--curve-max",
        "8",
        "--curve-step",
        "0.5",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&dir.path().join("predict.json"));
    let s = r["delays"][0]["s"].as_f64().unwrap();
    assert!((s - 2.36).abs() < 0.02, "{s}");
    assert!((r["g2_threshold"].as_f64().unwrap() - 5.828).abs() < 1e-3);
    assert!(dir.path().join("s_curve.csv").exists());
    let m = json(&dir.path().join("predict.manifest.json"));
    assert_eq!(m["command"], "predict");
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn delay_scan_shape() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = root().join("configs/delay_scan.json");
    let out = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "predict",
        "--curve-max",
        "8",
        "--curve-step",
        "0.1",
    ]);
    assert!(out.status.success());
    let r = json(&dir.path().join("predict.json"));
    let curve: Vec<(f64, f64)> = r["s_curve"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| (p["delta_t"].as_f64().unwrap(), p["s"].as_f64().unwrap()))
        .collect();
    for w in curve.windows(2) {
        assert!(w[1].1 < w[0].1, "S must decay: {w:?}");
    }
    for &(dt, s) in &curve {
        if (0.3..=4.5).contains(&dt) {
            assert!(s > 2.0, "S({dt}) = {s}");
        }
    }
    assert!(curve.last().unwrap().1 < 2.0);
}

#[test]
fn vacuum_config_flags_no_violation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = root().join("configs/vacuum.json");
    let out = run(&["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "predict"]);
    assert!(out.status.success());
    let r = json(&dir.path().join("predict.json"));
    assert_eq!(r["violation_window"]["status"], "no violation");
    for p in r["s_curve"].as_array().unwrap() {
        assert!(p["s"].as_f64().unwrap().abs() < 1e-6);
    }
}

#[test]
fn simulate_count_analyze_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d, 50_000);
    let sim = d.join("sim");
    let cnt = d.join("cnt");
    let out = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        sim.to_str().unwrap(),
        "simulate",
        "--tags",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut args: Vec<String> = vec![
        "--config".into(),
        cfg.to_str().unwrap().into(),
        "--out".into(),
        cnt.to_str().unwrap().into(),
        "count".into(),
    ];
    for s in 0..4 {
        args.push(sim.join(format!("tags_s{s}_d0.ptag")).to_str().unwrap().into());
    }
    let out = bin().args(&args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = json(&sim.join("counts.json"));
    let b = json(&cnt.join("counts.json"));
    assert_eq!(a["entries"], b["entries"]);

    let out = run(&[
        "--out",
        d.join("an").to_str().unwrap(),
        "analyze",
        cnt.join("counts.json").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&d.join("an/analysis.json"));
    assert_eq!(r[0]["entries"].as_array().unwrap().len(), 4);
}

#[test]
fn outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d, 20_000);
    for sub in ["a", "b"] {
        let out = run(&[
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "5",
            "--out",
            d.join(sub).to_str().unwrap(),
            "simulate",
        ]);
        assert!(out.status.success());
    }
    let a = std::fs::read(d.join("a/counts.json")).unwrap();
    let b = std::fs::read(d.join("b/counts.json")).unwrap();
    assert_eq!(a, b);
    let m = json(&d.join("a/simulate.manifest.json"));
    assert_eq!(m["seed"], 5);
}

#[test]
fn analyze_reference_counts() {
    let dir = tempfile::tempdir().unwrap();
    let input = root().join("data/bell_counts_0p66ps.json");
    let out = run(&["--out", dir.path().to_str().unwrap(), "analyze", input.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&dir.path().join("analysis.json"));
    let chsh = &r[0]["chsh"];
    let s_min_5sigma = chsh["confidence"][1]["s_min"].as_f64().unwrap();
    assert!((s_min_5sigma - 2.23).abs() < 0.01, "{s_min_5sigma}");
    let s_std = chsh["s_std"].as_f64().unwrap();
    assert!(s_std > 0.015 && s_std < 0.04);
}

#[test]
fn count_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.ptag");
    std::fs::write(&empty, b"").unwrap();
    let out = run(&["--out", dir.path().to_str().unwrap(), "count", empty.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&dir.path().join("counts.json"));
    let c = &r["entries"][0]["counts"];
    assert_eq!(c["reps"], 0);
    assert_eq!(c["n_pp"], 0);
}

#[test]
fn estimate_reference_rates() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "--out",
        dir.path().to_str().unwrap(),
        "estimate",
        "--stokes",
        "18000",
        "--antistokes",
        "720",
        "--coinc",
        "4.58",
    ]);
    assert!(out.status.success());
    let r = json(&dir.path().join("estimate.json"));
    assert!((r["g"].as_f64().unwrap() - 0.047).abs() < 1e-3);
    assert!((r["p_dc"].as_f64().unwrap() - 9e-6).abs() < 1e-12);
}

#[test]
fn fit_and_calibrate_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut g2 = String::from("delta_t_ps,g2\n");
    for i in 0..80 {
        let t = -1.0 + 0.2 * i as f64;
        let y = 1.0 + 25.5 * tbell::fitting::emg(t, 3.78, 0.2 / tbell::fitting::FWHM_PER_SIGMA);
        g2.push_str(&format!("{t},{y}\n"));
    }
    std::fs::write(d.join("g2.csv"), g2).unwrap();
    let out = run(&["--out", d.to_str().unwrap(), "--format", "csv", "fit", d.join("g2.csv").to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&d.join("fit.json"));
    assert!((r["fit"]["tau"].as_f64().unwrap() / 3.78 - 1.0).abs() < 1e-3);

    std::fs::write(d.join("vr.csv"), "voltage,T\n0.5,1.0\n1.0,0.75\n1.5,0.5\n2.0,0.25\n2.5,0.0\n").unwrap();
    let out = run(&[
        "--out",
        d.to_str().unwrap(),
        "calibrate-vr",
        d.join("vr.csv").to_str().unwrap(),
        "--target",
        "1.5707963267948966",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&d.join("calibration.json"));
    assert!((r["lookups"][0]["voltages"][0].as_f64().unwrap() - 1.5).abs() < 1e-9);
}

#[test]
fn oracle_agrees_with_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "--out",
        dir.path().to_str().unwrap(),
        "oracle",
        "--alpha",
        "0.3",
        "--beta",
        "-0.2",
        "--phi",
        "0.4",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&dir.path().join("oracle.json"));
    assert!(r["max_abs_diff"].as_f64().unwrap() < 1e-10);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let bad = d.join("bad.json");
    std::fs::write(
        &bad,
        r#"{"source":{"g":0.05},"detectors":{"eta_a":1.5,"eta_b0":0.1,"p_dc":0},"vibration":{"tau_phonon":3.78}}"#,
    )
    .unwrap();
    let out = run(&["--config", bad.to_str().unwrap(), "--out", d.to_str().unwrap(), "predict"]);
    assert_eq!(out.status.code(), Some(2));

    let missing = d.join("nope.json");
    let out = run(&["--out", d.to_str().unwrap(), "analyze", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));

    let garbage = d.join("junk.ptag");
    std::fs::write(&garbage, b"not a tag file at all, definitely not").unwrap();
    let out = run(&["--out", d.to_str().unwrap(), "count", garbage.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));

    std::fs::write(d.join("flat.csv"), "0,1\n1,1\n2,1\n3,1\n4,1\n").unwrap();
    let out = run(&["--out", d.to_str().unwrap(), "fit", d.join("flat.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}
