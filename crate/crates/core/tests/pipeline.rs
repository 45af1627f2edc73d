//! End-to-end runs of the experiment pipeline on small configs.

use std::fs;
use std::path::Path;

use spectral_langevin::experiment::{read_manifest_config, ARTIFACTS, Z_975};
use spectral_langevin::precond::PreconditionerFamily;
use spectral_langevin::score::ModeValues;
use spectral_langevin::{prepare, run_experiment, synthesize_data, ErrorFieldConfig, ExperimentConfig};

fn small_toy() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::toy_fig1(true);
    cfg.sampler.n_steps = 3_000;
    cfg.sampler.burn_in = 500;
    cfg.sampler.n_chains = 2;
    cfg
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap_or_default().to_string()
}

#[test]
fn writes_every_artifact_with_headers() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&small_toy(), dir.path()).unwrap();
    for name in ARTIFACTS {
        assert!(dir.path().join(name).is_file(), "{name} missing");
    }
    assert_eq!(header(&dir.path().join("chains.csv")), "chain,step,mode,value");
    assert!(header(&dir.path().join("uq_table.csv")).starts_with("mode,label_j,label_k,sample_mean,q025,q975"));
    let pre = header(&dir.path().join("preconditioner.csv"));
    assert!(pre.ends_with("kappa,kappa_over_index_sq"), "{pre}");
    let diag: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("diagnostics.json")).unwrap()).unwrap();
    assert!(diag["modes"].as_array().is_some_and(|m| !m.is_empty()));
    assert_eq!(read_manifest_config(dir.path()).unwrap(), small_toy());
}

#[test]
fn toy_drift_table_shows_the_vanilla_rates() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&small_toy(), dir.path()).unwrap();
    let mut r = csv::Reader::from_path(dir.path().join("preconditioner.csv")).unwrap();
    let h = r.headers().unwrap().clone();
    let col = |name: &str| h.iter().position(|c| c == name).unwrap();
    let (cj, ck, cr) = (col("label_j"), col("kappa"), col("kappa_over_index_sq"));
    let rows: Vec<(f64, f64, f64)> = r
        .records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[cj].parse().unwrap(), rec[ck].parse().unwrap(), rec[cr].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 100);
    for (j, kappa, ratio) in &rows {
        assert!((ratio * j * j / kappa - 1.0).abs() < 1e-12);
    }
    // C = I at τ > 0 reverts the tail strictly slower than j²
    assert!(rows[90..].iter().all(|r| r.2 > 0.0 && r.2 < 1.0));
}

#[test]
fn reruns_are_bit_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&small_toy(), a.path()).unwrap();
    run_experiment(&small_toy(), b.path()).unwrap();
    for name in ARTIFACTS {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn uq_table_rows_and_oracle_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&small_toy(), dir.path()).unwrap();
    assert_eq!(out.uq.len(), 35);
    for (j, row) in out.uq.iter().enumerate() {
        let half = Z_975 * out.oracle.vars[j].sqrt();
        assert_eq!(row.mode, j);
        assert!((row.oracle_mean - out.oracle.means[j]).abs() < 1e-15);
        assert!((row.oracle_lo - (row.oracle_mean - half)).abs() < 1e-12);
        assert!((row.oracle_hi - (row.oracle_mean + half)).abs() < 1e-12);
        assert!(row.q025 <= row.sample_mean && row.sample_mean <= row.q975);
    }
    let rows = csv::Reader::from_path(dir.path().join("uq_table.csv")).unwrap().records().count();
    assert_eq!(rows, 35);
}

#[test]
fn oracle_intervals_cover_the_truth() {
    let mut covered = 0;
    for seed in 0..5 {
        let mut cfg = small_toy();
        cfg.truth_seed = seed;
        let p = prepare(&cfg).unwrap();
        let (truth, _) = synthesize_data(&p.spec, seed);
        let post = spectral_langevin::posterior_oracle(&p.model, &p.y).unwrap();
        covered += (0..100)
            .filter(|&j| (truth[j] - post.means[j]).abs() <= Z_975 * post.vars[j].sqrt())
            .count();
    }
    assert!(covered >= 450, "{covered}/500 modes covered");
}

fn stage_of(cfg: &ExperimentConfig) -> String {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(cfg, dir.path()).unwrap_err().to_string()
}

#[test]
fn errors_name_their_stage() {
    let mut cfg = small_toy();
    cfg.problem.n_modes = 0;
    assert!(stage_of(&cfg).starts_with("problem:"), "{}", stage_of(&cfg));

    let mut cfg = small_toy();
    cfg.observation = Some(vec![0.0; 3]);
    assert!(stage_of(&cfg).starts_with("observation:"), "{}", stage_of(&cfg));

    let mut cfg = small_toy();
    cfg.score.eps_a = ErrorFieldConfig::Literal {
        values: ModeValues::Vector(vec![0.1; 7]),
    };
    assert!(stage_of(&cfg).starts_with("score:"), "{}", stage_of(&cfg));

    let mut cfg = small_toy();
    cfg.precond = PreconditionerFamily::Literal { values: vec![1.0; 4] };
    assert!(stage_of(&cfg).starts_with("preconditioner:"), "{}", stage_of(&cfg));

    let mut cfg = small_toy();
    cfg.sampler.step_size = -1.0;
    assert!(stage_of(&cfg).starts_with("sampler:"), "{}", stage_of(&cfg));
}
