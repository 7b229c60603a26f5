use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use polmem_cli::RunConfig;
use polmem_core::Polarization;

fn polmem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polmem")).args(args).output().unwrap()
}

fn polmem_in(out: &Path, config: Option<&Path>, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_polmem"));
    cmd.args(args).arg("--out").arg(out);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, cfg: &RunConfig) -> PathBuf {
    let path = dir.join("input.toml");
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    path
}

/// Data rows of a CSV, skipping the metadata header and the column names.
fn rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn show_defaults_round_trips() {
    let out = polmem(&["show-defaults"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let parsed: RunConfig = toml::from_str(&text).unwrap();
    assert_eq!(parsed, RunConfig::default());
}

#[test]
fn bad_config_exits_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    std::fs::write(&path, "[predict]\nmu1 = -0.1\n").unwrap();
    assert_eq!(polmem_in(tmp.path(), Some(&path), &["predict"]).status.code(), Some(2));
    std::fs::write(&path, "no_such_key = 1\n").unwrap();
    assert_eq!(polmem_in(tmp.path(), Some(&path), &["predict"]).status.code(), Some(2));
    assert_eq!(polmem(&["show-defaults", "--mu", "1.0"]).status.code(), Some(2));
}

#[test]
fn predict_without_noise_is_flat() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.predict.mu1 = 0.0;
    cfg.predict.mu1_err = 0.0;
    let path = write_config(tmp.path(), &cfg);
    let out = tmp.path().join("out");
    assert!(polmem_in(&out, Some(&path), &["predict"]).status.success());
    let rows = rows(&out.join("fidelity_curve.csv"));
    assert_eq!(rows.len(), 100);
    for r in rows {
        for v in &r[1..] {
            assert!((v.parse::<f64>().unwrap() - cfg.predict.f_c).abs() < 1e-12);
        }
    }
}

#[test]
fn predict_band_is_ordered_and_outputs_have_metadata() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(polmem_in(tmp.path(), None, &["predict", "--mu", "0.8,1.4,3.6,8.2", "--seed", "5"]).status.success());
    let text = std::fs::read_to_string(tmp.path().join("fidelity_curve.csv")).unwrap();
    assert!(text.starts_with("# polmem "));
    assert!(text.contains("# command: predict") && text.contains("# seed: 5") && text.contains("# config_sha256: "));
    let rows = rows(&tmp.path().join("fidelity_curve.csv"));
    assert_eq!(rows.len(), 4);
    for r in rows {
        let v: Vec<f64> = r.iter().map(|x| x.parse().unwrap()).collect();
        assert!(v[2] <= v[1] && v[1] <= v[3], "{r:?}");
    }
    let saved: RunConfig = toml::from_str(&std::fs::read_to_string(tmp.path().join("config.toml")).unwrap()).unwrap();
    assert_eq!(saved.seed, 5);
    assert_eq!(saved.predict.grid.mu, vec![0.8, 1.4, 3.6, 8.2]);
}

#[test]
fn tomography_from_count_files() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    // Noiseless identity channel: each setting sees the exact projection.
    for p in Polarization::PROBE_INPUTS {
        let input = polmem_core::polarization::standard_state(p);
        let mut text = String::from("setting,counts\n");
        for s in polmem_core::AnalysisSetting::all() {
            let prob = polmem_core::polarization::expectation(&input, &s);
            text += &format!("{},{}\n", s.label(), (10_000.0 * prob).round());
        }
        let name = format!("counts_{p}.csv");
        std::fs::write(tmp.path().join(&name), text).unwrap();
        cfg.tomography.count_files.insert(p, PathBuf::from(name));
    }
    let path = write_config(tmp.path(), &cfg);
    let out = tmp.path().join("out");
    let run = polmem_in(&out, Some(&path), &["tomography"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let process = rows(&out.join("process.csv"));
    let chi00: f64 = process[0][1].parse().unwrap();
    assert!(chi00 > 0.99, "chi00 = {chi00}");
    for r in rows(&out.join("states.csv")) {
        assert!(r[1].parse::<f64>().unwrap() > 0.99, "{r:?}");
    }

    cfg.tomography.count_files.remove(&Polarization::R);
    let path = write_config(tmp.path(), &cfg);
    assert_eq!(polmem_in(&out, Some(&path), &["tomography"]).status.code(), Some(2));
}

#[test]
fn full_efficiency_threshold_equals_plain() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.bounds.eta_t = 1e-9;
    cfg.bounds.eta_m = 1.0 - 1e-9;
    cfg.bounds.grid.points = 8;
    cfg.bounds.search.grid_points = 12;
    cfg.bounds.search.refine_levels = 1;
    let path = write_config(tmp.path(), &cfg);
    let out = tmp.path().join("out");
    let run = polmem_in(&out, Some(&path), &["bounds"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let rows = rows(&out.join("bounds.csv"));
    assert_eq!(rows.len(), 8);
    for r in rows {
        let plain: f64 = r[1].parse().unwrap();
        let threshold: f64 = r[2].parse().unwrap();
        assert!((plain - threshold).abs() < 1e-6, "{r:?}");
    }
}

#[test]
fn emitted_config_reproduces_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    let second = tmp.path().join("second");
    assert!(polmem_in(&first, None, &["simulate", "--mu", "1.4", "--trials", "20000", "--seed", "11"])
        .status
        .success());
    let saved = first.join("config.toml");
    assert!(polmem_in(&second, Some(&saved), &["simulate"]).status.success());
    let mut names: Vec<_> = std::fs::read_dir(&first).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() > 2);
    for name in names {
        assert_eq!(std::fs::read(first.join(&name)).unwrap(), std::fs::read(second.join(&name)).unwrap(), "{name:?}");
    }
}
