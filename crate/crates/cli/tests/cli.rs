use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spectral-langevin"))
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// A shortened toy config written into `dir`.
fn toy_config(dir: &Path) -> PathBuf {
    let text = ok(bin().args(["template", "toy-fig1"]).output().unwrap());
    let mut cfg: serde_json::Value = serde_json::from_str(&text).unwrap();
    cfg["sampler"]["n_steps"] = 2_000.into();
    cfg["sampler"]["burn_in"] = 200.into();
    cfg["sampler"]["n_chains"] = 2.into();
    let path = dir.join("toy.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

#[test]
fn templates_are_valid_configs() {
    for args in [
        vec!["template", "toy-fig1", "--identity-prior"],
        vec!["template", "brownian-sheet", "--m", "40"],
        vec!["template", "heat-equation", "--profile", "vanilla", "--tau", "0.1"],
    ] {
        let text = ok(bin().args(&args).output().unwrap());
        let cfg: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(cfg["problem"].is_object() && cfg["sampler"].is_object(), "{args:?}");
    }
}

#[test]
fn run_defaults_to_the_output_root() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path());
    let root = dir.path().join("runs");
    let stdout = ok(bin().arg("run").arg(&cfg).env("SPECTRAL_LANGEVIN_OUT", &root).output().unwrap());
    assert!(stdout.contains("total KL"), "{stdout}");
    let runs: Vec<_> = fs::read_dir(&root).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(runs.len(), 1);
    let name = runs[0].file_name().unwrap().to_string_lossy().into_owned();
    assert!(name.starts_with("toy_fig1-"), "{name}");
    assert!(runs[0].join("manifest.json").is_file());

    // the acf subcommand reads the run's chains back
    let stdout = ok(bin().arg("acf").arg(&runs[0]).args(["--max-lag", "20"]).output().unwrap());
    assert!(stdout.contains("IACT"));
    let acf = csv_rows(&runs[0].join("acf.csv"));
    let iact = csv_rows(&runs[0].join("iact.csv"));
    assert_eq!(acf.len(), 21 * iact.len());
    // the multi-chain estimator puts ρ₀ at 1 - W/(n·var⁺), just under 1
    let rho0: Vec<f64> = acf.iter().filter(|r| &r[1] == "0").map(|r| r[2].parse().unwrap()).collect();
    assert!(rho0.iter().all(|r| *r > 0.99 && *r <= 1.0), "{rho0:?}");
}

#[test]
fn explicit_out_wins() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path());
    let out = dir.path().join("here");
    ok(bin().arg("run").arg(&cfg).arg("--out").arg(&out).output().unwrap());
    assert!(out.join("uq_table.csv").is_file());
}

#[test]
fn precond_table_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path());
    let table = dir.path().join("precond.csv");
    let out = bin().arg("precond").arg(&cfg).arg("--out").arg(&table).output().unwrap();
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    ok(out);
    assert!(stderr.contains("max|kappa-1|"), "{stderr}");
    assert_eq!(csv_rows(&table).len(), 100);
}

#[test]
fn kl_scan_prints_one_row_per_tau() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path());
    let stdout = ok(bin().arg("kl-scan").arg(&cfg).args(["--tau-grid", "1e-4:1e-2:3"]).output().unwrap());
    let mut r = csv::Reader::from_reader(stdout.as_bytes());
    assert_eq!(r.headers().unwrap().iter().next(), Some("tau"));
    let rows: Vec<_> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    let taus: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert!((taus[1] - 1e-3).abs() < 1e-15);
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path());
    let out = bin().arg("kl-scan").arg(&cfg).args(["--tau-grid", "1e-3"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("a:b:n"));

    let out = bin().arg("run").arg(dir.path().join("missing.json")).output().unwrap();
    assert!(!out.status.success());
}
