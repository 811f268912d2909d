use std::fs;
use std::path::Path;
use std::process::Command;

use heatprobe_cli::config::{BoundarySpec, NonlinearitySpec, PotentialSpec};
use heatprobe_cli::{ExperimentConfig, Manifest};
use sha2::{Digest, Sha256};

fn heatprobe(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_heatprobe")).args(args).output().expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let mut cfg = ExperimentConfig::default();
    cfg.grid.nx = 17;
    cfg.grid.nt = 33;
    cfg.carleman.samples = 4;
    cfg.cgo.rho = vec![4.0, 6.0, 8.0, 10.0];
    cfg.pairing.cases = 3;
    cfg.pairing.threshold = 0.5;
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn config_round_trips_and_rejects_unknown_keys() {
    let cfg = ExperimentConfig {
        potential: PotentialSpec::Random { bound: 0.7 },
        boundary: BoundarySpec::Level { value: -0.25 },
        nonlinearity: NonlinearitySpec::Polynomial { coefficients: vec![0.0, 1.0, 0.1, 1.0 / 3.0] },
        threads: Some(2),
        ..ExperimentConfig::default()
    };
    let text = serde_json::to_string(&cfg).unwrap();
    assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);

    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
    value["grid"]["spacing"] = 0.1.into();
    assert!(ExperimentConfig::from_json(&value.to_string()).is_err());
    let bad = r#"{"grid": {"n": 1, "nx": 9, "nt": 9}, "potential": {"family": "sine", "amplitude": 1, "phase": 0}}"#;
    assert!(ExperimentConfig::from_json(bad).is_err());
    let minimal = r#"{"grid": {"n": 2, "nx": 9, "nt": 9}}"#;
    assert_eq!(ExperimentConfig::from_json(minimal).unwrap().theta, 0.5);
}

#[test]
fn malformed_config_exits_2_without_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    let out = tmp.path().join("out");
    for text in [r#"{"grid": {"n": 1, "nx": 9}"#, r#"{"grid": {"n": 3, "nx": 9, "nt": 9}}"#, r#"{"grid": {"n": 1, "nx": 9, "nt": 9}, "extra": 1}"#] {
        fs::write(&cfg, text).unwrap();
        let o = heatprobe(&["forward", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.exists());
    }
}

#[test]
fn numerical_failure_exits_3_with_module_tag() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    // ρ beyond the weight guard
    fs::write(&cfg, r#"{"grid": {"n": 1, "nx": 17, "nt": 17}, "reconstruction": {"s": 0.2, "rho": 80.0, "mode": "full", "probe": "reference", "omega0": [1.0], "basis": {"space_modes": 1, "time_modes": 2}}}"#).unwrap();
    let out = tmp.path().join("out");
    let o = heatprobe(&["reconstruct", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("[reconstruct]"));
    assert!(!out.exists());
}

#[test]
fn outputs_are_deterministic_and_fully_listed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    for cmd in ["forward", "dtn", "pairing-check", "cgo-check", "carleman-check", "reconstruct", "semilinear"] {
        let a = tmp.path().join(format!("{cmd}-a"));
        let b = tmp.path().join(format!("{cmd}-b"));
        for (dir, threads) in [(&a, "1"), (&b, "3")] {
            let o = heatprobe(&[cmd, "--config", &cfg, "--seed", "5", "--threads", threads, "--out", dir.to_str().unwrap()]);
            assert_eq!(o.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        }
        let (ma, mb) = (manifest(&a), manifest(&b));
        assert_eq!(ma, mb, "{cmd}");
        assert_eq!(ma.seed, 5);
        let mut on_disk: Vec<String> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
        on_disk.retain(|f| f != "manifest.json");
        on_disk.sort();
        let mut listed: Vec<String> = ma.files.iter().map(|f| f.file.clone()).collect();
        listed.sort();
        assert_eq!(on_disk, listed, "{cmd}");
        for f in &ma.files {
            let bytes = fs::read(a.join(&f.file)).unwrap();
            assert_eq!(format!("{:x}", Sha256::digest(&bytes)), f.sha256);
            if f.file.ends_with(".csv") {
                assert_eq!(bytes, fs::read(b.join(&f.file)).unwrap());
            }
        }
    }
}

#[test]
fn pairing_check_passes_on_default_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("p");
    let o = heatprobe(&["pairing-check", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(out.join("pairing.csv")).unwrap();
    let mut rows = text.lines().skip(1);
    assert!(rows.all(|r| r.rsplit(',').next().unwrap().parse::<f64>().unwrap() < 0.05));
}

#[test]
fn rerun_replaces_previous_output_but_refuses_foreign_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("o");
    let o = out.to_str().unwrap();
    assert_eq!(heatprobe(&["dtn", "--config", &cfg, "--out", o]).status.code(), Some(0));
    assert_eq!(heatprobe(&["forward", "--config", &cfg, "--out", o]).status.code(), Some(0));
    assert!(!out.join("dtn.bin").exists());
    fs::write(out.join("notes.txt"), "keep").unwrap();
    assert_eq!(heatprobe(&["forward", "--config", &cfg, "--out", o]).status.code(), Some(2));
    assert!(out.join("notes.txt").exists());
}

#[test]
fn recovery_reports_the_slope_gap() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { nonlinearity: NonlinearitySpec::Linear { slope: 1.0 }, ..ExperimentConfig::default() };
    let path = tmp.path().join("c.json");
    fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let out = tmp.path().join("r");
    let o = heatprobe(&["recover-nonlinearity", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("recovery.csv")).unwrap();
    for row in text.lines().skip(1) {
        let d: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert!((d - 0.5).abs() < 0.15, "{row}");
    }
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::from_json(&fs::read_to_string(&path).unwrap()).unwrap();
        cfg.prepare().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 4);
}
