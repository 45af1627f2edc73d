//! Config-driven experiment pipeline and its tabular artifacts.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{chain_diagnostics, kl_report, ChainDiagnostics, KlReport};
use crate::error::{Error, Result};
use crate::precond::{build_preconditioner, reversion_rate, PreconditionerFamily, PreconditionerSpec};
use crate::problems::{heat_score_error, BuiltinProblem, ExperimentTag, ProblemConfig, ScoreConfig};
use crate::rng::NoiseStream;
use crate::sampler::{run, ChainEnsemble, Divergence, Integrator, SamplerConfig};
use crate::score::{ErrorConvention, ErrorField, ScoreError, ScoreModel};
use crate::spectrum::{gaussian_posterior, posterior_density_1d, ModeSpectrum, Observation, PosteriorOracle};

/// Noise stream reserved for ground-truth draws and synthetic data.
const TRUTH_STREAM: u64 = u64::MAX;

/// Standard normal 97.5% quantile.
pub const Z_975: f64 = 1.959964;

fn default_uq_modes() -> usize {
    35
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// `2 sin(π(j-½)x₁) sin(π(k-½)x₂)`
    Brownian,
    /// `2 sin(jπx₁) sin(kπx₂)`
    Heat,
}

impl FromStr for Basis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brownian" => Ok(Basis::Brownian),
            "heat" => Ok(Basis::Heat),
            other => Err(Error::config(format!("unknown basis `{other}` (expected brownian or heat)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionConfig {
    pub basis: Basis,
    pub grid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub experiment: ExperimentTag,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub score: ScoreConfig,
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub precond: PreconditionerFamily,
    #[serde(default)]
    pub outputs: Option<PathBuf>,
    /// Seed of the ground-truth prior draw and the observation noise.
    #[serde(default)]
    pub truth_seed: u64,
    /// Literal data; synthesized from the truth draw when absent.
    #[serde(default)]
    pub observation: Option<Vec<f64>>,
    #[serde(default = "default_uq_modes")]
    pub uq_modes: usize,
    #[serde(default)]
    pub reconstruction: Option<ReconstructionConfig>,
    /// Leading traced modes written to `chains.csv`; all traced modes when absent.
    #[serde(default)]
    pub chain_csv_modes: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatProfile {
    /// Optimal corrected preconditioner, `5·10³` steps at `h = 10⁻²`.
    Preconditioned,
    /// `C = C_μ`, `1.5·10⁴` steps at `h = 10⁻⁶`.
    Vanilla,
}

impl ExperimentConfig {
    fn with_defaults(problem: BuiltinProblem, sampler: SamplerConfig) -> Self {
        Self {
            experiment: problem.tag(),
            problem: problem.problem(),
            score: ScoreConfig::default(),
            sampler,
            precond: PreconditionerFamily::default(),
            outputs: None,
            truth_seed: 2024,
            observation: None,
            uq_modes: default_uq_modes(),
            reconstruction: None,
            chain_csv_modes: None,
        }
    }

    /// Exact score, posterior-form preconditioner, `5·10³` steps of size `0.5`.
    ///
    /// With `κ ≡ 1` the per-mode chain is an exact OU transition, so the step
    /// size sets only the autocorrelation and not the stationary variance.
    pub fn brownian_sheet(m: usize) -> Self {
        let mut sampler = SamplerConfig::new(0.5, 5_000, 2, 7);
        sampler.burn_in = 500;
        sampler.integrator = Integrator::ExactOu;
        let mut cfg = Self::with_defaults(BuiltinProblem::BrownianSheet { m }, sampler);
        cfg.sampler.trace_modes = Some((0..cfg.uq_modes).collect());
        cfg.score.tau = 0.0;
        cfg.precond = PreconditionerFamily::PosteriorForm;
        cfg.reconstruction = Some(ReconstructionConfig {
            basis: Basis::Brownian,
            grid: 64,
        });
        cfg
    }

    /// Multiplicative score error `ε^a_j ~ N(0, 0.1²)` scaled by `τ`.
    ///
    /// Both profiles spend `2.4·10⁵` chain-steps; the preconditioned one
    /// spreads them over more, shorter chains.
    pub fn heat_equation(profile: HeatProfile, tau: f64) -> Self {
        let mut sampler = match profile {
            HeatProfile::Preconditioned => {
                let mut s = SamplerConfig::new(1e-2, 5_000, 48, 11);
                s.burn_in = 1_000;
                s
            }
            HeatProfile::Vanilla => {
                let mut s = SamplerConfig::new(1e-6, 15_000, 16, 11);
                s.burn_in = 3_000;
                s
            }
        };
        sampler.thin = 10;
        let mut cfg = Self::with_defaults(BuiltinProblem::HeatEquation, sampler);
        cfg.chain_csv_modes = Some(cfg.uq_modes);
        cfg.score.tau = tau;
        cfg.score.eps_a = heat_score_error(5);
        cfg.precond = match profile {
            HeatProfile::Preconditioned => PreconditionerFamily::OptimalCorrected,
            HeatProfile::Vanilla => PreconditionerFamily::Prior,
        };
        cfg.reconstruction = Some(ReconstructionConfig {
            basis: Basis::Heat,
            grid: 64,
        });
        cfg
    }

    /// `C = I` with the identity or the `1/j²` prior, `τ = 10⁻³`, `h = 10⁻³`.
    pub fn toy_fig1(trace_class: bool) -> Self {
        let mut sampler = SamplerConfig::new(1e-3, 10_000, 4, 3);
        sampler.burn_in = 2_000;
        let mut cfg = Self::with_defaults(BuiltinProblem::ToyFig1 { trace_class }, sampler);
        cfg.precond = PreconditionerFamily::Identity;
        cfg
    }

    pub fn convention(&self) -> ErrorConvention {
        self.score.convention.unwrap_or(if self.problem.potential.is_some() {
            ErrorConvention::PotentialAware
        } else {
            ErrorConvention::Gaussian
        })
    }
}

/// Everything the pipeline needs before sampling.
#[derive(Debug, Clone)]
pub struct PreparedExperiment {
    pub spec: ModeSpectrum,
    pub truth: Vec<f64>,
    pub y: Observation,
    pub precond: PreconditionerSpec,
    pub kappa: Vec<f64>,
    pub model: ScoreModel,
}

/// Ground truth `x ~ N(0, C_μ)` (counter 0) and data `y = Ax + σn` (counter 1).
pub fn synthesize_data(spec: &ModeSpectrum, seed: u64) -> (Vec<f64>, Observation) {
    let n = spec.n_modes();
    let mut stream = NoiseStream::new(seed, TRUTH_STREAM, n);
    let mut xi = vec![0.0; n];
    stream.fill(0, &mut xi);
    let truth: Vec<f64> = xi.iter().enumerate().map(|(j, z)| spec.prior_var(j).sqrt() * z).collect();
    stream.fill(1, &mut xi);
    let y = (0..spec.n_observed())
        .map(|j| spec.forward(j) * truth[j] + spec.noise_std() * xi[j])
        .collect();
    (truth, Observation::new(y))
}

pub fn prepare(config: &ExperimentConfig) -> Result<PreparedExperiment> {
    let spec = config.problem.build().map_err(|e| e.in_stage("problem"))?;
    let phi = config.problem.potential_spec();
    if let Some(p) = &phi {
        p.validate(&spec).map_err(|e| e.in_stage("problem"))?;
    }
    let (truth, synthetic) = synthesize_data(&spec, config.truth_seed);
    let y = match &config.observation {
        Some(v) => {
            let y = Observation::new(v.clone());
            y.check(&spec).map_err(|e| e.in_stage("observation"))?;
            y
        }
        None => synthetic,
    };
    let n = spec.n_modes();
    let tau = config.score.tau;
    let eps_a = ErrorField::from_config(&config.score.eps_a, n).map_err(|e| e.in_stage("score"))?;
    let eps_b = ErrorField::from_config(&config.score.eps_b, n).map_err(|e| e.in_stage("score"))?;
    let precond = build_preconditioner(&config.precond, &spec, tau, &eps_a, phi.as_ref())
        .map_err(|e| e.in_stage("preconditioner"))?;
    let eps_a_values: Vec<f64> = (0..n).map(|j| eps_a.at(j, tau)).collect();
    let kappa =
        reversion_rate(&spec, &precond.lambda, tau, &eps_a_values).map_err(|e| e.in_stage("preconditioner"))?;
    let model = ScoreModel::new(
        spec.clone(),
        precond.lambda.clone(),
        tau,
        ScoreError::new(eps_a, eps_b),
        phi,
        config.convention(),
    )
    .map_err(|e| e.in_stage("score"))?;
    Ok(PreparedExperiment {
        spec,
        truth,
        y,
        precond,
        kappa,
        model,
    })
}

/// Posterior means and variances: closed form, or per-mode quadrature with a potential.
pub fn posterior_oracle(model: &ScoreModel, y: &Observation) -> Result<PosteriorOracle> {
    let spec = model.spec();
    match model.potential() {
        Some(phi) if !phi.is_zero() => {
            let (means, vars) = (0..spec.n_modes())
                .map(|j| posterior_density_1d(spec, y, phi, j)?.moments())
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .unzip();
            Ok(PosteriorOracle { means, vars })
        }
        _ => gaussian_posterior(spec, y),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UqRow {
    pub mode: usize,
    pub label_j: u32,
    pub label_k: u32,
    pub sample_mean: f64,
    pub q025: f64,
    pub q975: f64,
    pub oracle_mean: f64,
    pub oracle_lo: f64,
    pub oracle_hi: f64,
    pub truth: f64,
}

/// Linear-interpolation empirical quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-mode sample summary against the oracle for the first `first_k` modes.
/// Quantiles pool every chain's trace and are NaN for untraced modes.
pub fn emit_uq_table(
    ensemble: &ChainEnsemble,
    oracle: &PosteriorOracle,
    truth: Option<&[f64]>,
    labels: Option<&[(u32, u32)]>,
    first_k: usize,
) -> Vec<UqRow> {
    let moments = ensemble.mode_moments();
    (0..first_k.min(ensemble.n_modes))
        .map(|j| {
            let mut pooled: Vec<f64> = (0..ensemble.n_chains())
                .filter_map(|k| ensemble.trace(k, j))
                .flatten()
                .collect();
            pooled.sort_by(f64::total_cmp);
            let half = Z_975 * oracle.vars[j].sqrt();
            let (label_j, label_k) = labels.map_or((j as u32 + 1, 0), |l| l[j]);
            UqRow {
                mode: j,
                label_j,
                label_k,
                sample_mean: moments[j].mean,
                q025: quantile(&pooled, 0.025),
                q975: quantile(&pooled, 0.975),
                oracle_mean: oracle.means[j],
                oracle_lo: oracle.means[j] - half,
                oracle_hi: oracle.means[j] + half,
                truth: truth.map_or(f64::NAN, |t| t[j]),
            }
        })
        .collect()
}

/// Truncated eigenfunction expansion on the uniform `grid × grid` lattice of
/// `[0,1]²` (boundaries included); `out[i1][i2]` is the value at `(x₁, x₂)`.
pub fn field_reconstruction(
    coefficients: &[f64],
    labels: &[(u32, u32)],
    basis: Basis,
    grid: usize,
) -> Result<Vec<Vec<f64>>> {
    if grid < 2 {
        return Err(Error::config(format!("grid must be at least 2, got {grid}")));
    }
    if coefficients.len() != labels.len() {
        return Err(Error::config(format!(
            "{} coefficients for {} labels",
            coefficients.len(),
            labels.len()
        )));
    }
    let side = labels.iter().map(|&(j, k)| j.max(k)).max().unwrap_or(0) as usize;
    let xs: Vec<f64> = (0..grid).map(|i| i as f64 / (grid - 1) as f64).collect();
    let freq = |j: usize| match basis {
        Basis::Brownian => PI * (j as f64 - 0.5),
        Basis::Heat => PI * j as f64,
    };
    // sines[j-1][i] = sin(freq(j) x_i); the expansion is the product Sᵀ C S
    let sines: Vec<Vec<f64>> = (1..=side).map(|j| xs.iter().map(|x| (freq(j) * x).sin()).collect()).collect();
    let mut coef = vec![vec![0.0; side]; side];
    for (&c, &(j, k)) in coefficients.iter().zip(labels) {
        if j == 0 || k == 0 {
            return Err(Error::config("field reconstruction needs 2-D mode labels"));
        }
        coef[j as usize - 1][k as usize - 1] += 2.0 * c;
    }
    // partial[j][i2] = Σ_k coef[j][k] sin(freq(k) x_i2)
    let partial: Vec<Vec<f64>> = coef
        .iter()
        .map(|row| {
            let mut out = vec![0.0; grid];
            for (c, s) in row.iter().zip(&sines) {
                if *c != 0.0 {
                    for (o, v) in out.iter_mut().zip(s) {
                        *o += c * v;
                    }
                }
            }
            out
        })
        .collect();
    Ok((0..grid)
        .map(|i1| {
            let mut out = vec![0.0; grid];
            for (p, s) in partial.iter().zip(&sines) {
                let w = s[i1];
                for (o, v) in out.iter_mut().zip(p) {
                    *o += w * v;
                }
            }
            out
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReconstructionMetrics {
    /// `‖m̂ - m‖₂ / ‖m‖₂` over observed modes, sample mean against oracle mean.
    pub relative_l2_coefficient_error: f64,
    /// Grid RMSE between the sample-mean and oracle-mean fields.
    pub field_rmse: f64,
    /// Grid RMSE between the sample-mean field and the ground-truth field.
    pub truth_field_rmse: f64,
}

pub fn relative_l2_error(estimate: &[f64], reference: &[f64]) -> f64 {
    let num: f64 = estimate.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = reference.iter().map(|b| b * b).sum();
    (num / den).sqrt()
}

fn grid_rmse(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for (ra, rb) in a.iter().zip(b) {
        for (x, y) in ra.iter().zip(rb) {
            s += (x - y) * (x - y);
            n += 1;
        }
    }
    (s / n as f64).sqrt()
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub dir: PathBuf,
    pub prepared: PreparedExperiment,
    pub ensemble: ChainEnsemble,
    pub diagnostics: ChainDiagnostics,
    pub oracle: PosteriorOracle,
    pub kl: KlReport,
    pub uq: Vec<UqRow>,
    pub reconstruction: Option<ReconstructionMetrics>,
}

#[derive(Serialize)]
struct DiagnosticsDoc<'a> {
    experiment: ExperimentTag,
    n_chains: usize,
    kept_per_chain: usize,
    diverged: bool,
    divergence: Option<Divergence>,
    warnings: &'a [String],
    iact_max_over_min: Option<f64>,
    reconstruction: Option<ReconstructionMetrics>,
    modes: &'a [crate::analysis::ModeDiagnostics],
}

#[derive(Serialize)]
struct KlRow {
    mode: usize,
    exact: f64,
    expansion: Option<f64>,
    residual: Option<f64>,
}

#[derive(Serialize)]
struct PrecondRow {
    mode: usize,
    label_j: u32,
    label_k: u32,
    mu: f64,
    lambda0: f64,
    lambda1: f64,
    lambda: f64,
    kappa: f64,
    kappa_over_index_sq: f64,
}

#[derive(Serialize)]
struct ChainRow {
    chain: usize,
    step: usize,
    mode: usize,
    value: f64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    crate_version: &'static str,
    config: &'a ExperimentConfig,
    seed: u64,
    truth_seed: u64,
    input_hash: String,
    artifacts: Vec<(String, String)>,
}

/// Git-style object hash (`blob <len>\0<content>`) with SHA-256.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// `max/min` of the IACT over traced modes.
pub fn iact_spread(diag: &ChainDiagnostics) -> Option<f64> {
    let t: Vec<f64> = diag.iacts().into_iter().map(|(_, t)| t).collect();
    if t.is_empty() {
        return None;
    }
    let max = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = t.iter().copied().fold(f64::INFINITY, f64::min);
    Some(max / min)
}

pub const ARTIFACTS: [&str; 7] = [
    "chains.csv",
    "diagnostics.json",
    "kl_report.csv",
    "kl_report.json",
    "preconditioner.csv",
    "uq_table.csv",
    "manifest.json",
];

/// Runs the whole pipeline and writes its artifacts under `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutput> {
    let mut config = config.clone();
    let prepared = prepare(&config)?;
    let spec = &prepared.spec;
    let n = spec.n_modes();
    let uq_k = config.uq_modes.min(n);
    if let Some(modes) = &mut config.sampler.trace_modes {
        for j in 0..uq_k {
            if !modes.contains(&j) {
                modes.push(j);
            }
        }
        modes.sort_unstable();
    }

    let ensemble = run(&prepared.model, &prepared.y, &config.sampler).map_err(|e| e.in_stage("sampler"))?;
    let diagnostics = chain_diagnostics(&ensemble).map_err(|e| e.in_stage("diagnostics"))?;
    let oracle = posterior_oracle(&prepared.model, &prepared.y).map_err(|e| e.in_stage("oracle"))?;
    let kl = kl_report(&prepared.model, &prepared.y).map_err(|e| e.in_stage("kl"))?;
    let uq = emit_uq_table(&ensemble, &oracle, Some(&prepared.truth), spec.labels(), uq_k);

    let reconstruction = match (config.reconstruction, spec.labels()) {
        (Some(rc), Some(labels)) => {
            let m = spec.n_observed();
            let sample: Vec<f64> = diagnostics.modes.iter().map(|d| d.mean).collect();
            let field = |c: &[f64]| field_reconstruction(c, labels, rc.basis, rc.grid);
            let stage = |e: Error| e.in_stage("reconstruction");
            let f_sample = field(&sample).map_err(stage)?;
            let f_oracle = field(&oracle.means).map_err(stage)?;
            let f_truth = field(&prepared.truth).map_err(stage)?;
            let metrics = ReconstructionMetrics {
                relative_l2_coefficient_error: relative_l2_error(&sample[..m], &oracle.means[..m]),
                field_rmse: grid_rmse(&f_sample, &f_oracle),
                truth_field_rmse: grid_rmse(&f_sample, &f_truth),
            };
            let xs = |i: usize| i as f64 / (rc.grid - 1) as f64;
            let rows = (0..rc.grid).flat_map(|i1| {
                let (fs, fo, ft) = (&f_sample, &f_oracle, &f_truth);
                (0..rc.grid).map(move |i2| (xs(i1), xs(i2), ft[i1][i2], fo[i1][i2], fs[i1][i2]))
            });
            fs::create_dir_all(out_dir).map_err(|e| Error::from(e).in_stage("output"))?;
            let mut w = csv::Writer::from_path(out_dir.join("fields.csv")).map_err(|e| Error::from(e).in_stage("output"))?;
            let write = |w: &mut csv::Writer<fs::File>| -> Result<()> {
                w.write_record(["x1", "x2", "truth", "oracle_mean", "sample_mean"])?;
                for (a, b, c, d, e) in rows {
                    w.write_record([a, b, c, d, e].iter().map(|v| v.to_string()))?;
                }
                w.flush()?;
                Ok(())
            };
            write(&mut w).map_err(|e| e.in_stage("output"))?;
            Some(metrics)
        }
        (Some(_), None) => {
            return Err(Error::config("field reconstruction needs a 2-D problem").in_stage("reconstruction"))
        }
        _ => None,
    };

    write_artifacts(&config, &prepared, &ensemble, &diagnostics, &kl, &uq, reconstruction, out_dir)
        .map_err(|e| e.in_stage("output"))?;

    Ok(ExperimentOutput {
        dir: out_dir.to_path_buf(),
        prepared,
        ensemble,
        diagnostics,
        oracle,
        kl,
        uq,
        reconstruction,
    })
}

#[allow(clippy::too_many_arguments)]
fn write_artifacts(
    config: &ExperimentConfig,
    prepared: &PreparedExperiment,
    ensemble: &ChainEnsemble,
    diagnostics: &ChainDiagnostics,
    kl: &KlReport,
    uq: &[UqRow],
    reconstruction: Option<ReconstructionMetrics>,
    out_dir: &Path,
) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let spec = &prepared.spec;
    let label = |j: usize| spec.labels().map_or((j as u32 + 1, 0), |l| l[j]);

    let mut chains = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(out_dir.join("chains.csv"))?;
    chains.write_record(["chain", "step", "mode", "value"])?;
    let w = ensemble.trace_modes.len();
    let shown = config.chain_csv_modes.unwrap_or(w).min(w);
    if shown > 0 {
        for (k, trace) in ensemble.traces.iter().enumerate() {
            for (row, &step) in trace.chunks_exact(w).zip(&ensemble.kept_steps) {
                for (&mode, &value) in ensemble.trace_modes.iter().zip(row).take(shown) {
                    chains.serialize(ChainRow {
                        chain: k,
                        step,
                        mode,
                        value,
                    })?;
                }
            }
        }
    }
    chains.flush()?;

    let doc = DiagnosticsDoc {
        experiment: config.experiment,
        n_chains: diagnostics.n_chains,
        kept_per_chain: diagnostics.kept_per_chain,
        diverged: diagnostics.diverged,
        divergence: ensemble.divergence,
        warnings: &ensemble.warnings,
        iact_max_over_min: iact_spread(diagnostics),
        reconstruction,
        modes: &diagnostics.modes,
    };
    fs::write(out_dir.join("diagnostics.json"), serde_json::to_vec_pretty(&doc)?)?;

    write_rows(
        &out_dir.join("kl_report.csv"),
        kl.modes.iter().map(|m| KlRow {
            mode: m.mode,
            exact: m.exact,
            expansion: m.expansion,
            residual: m.residual,
        }),
    )?;
    fs::write(out_dir.join("kl_report.json"), serde_json::to_vec_pretty(kl)?)?;

    let p = &prepared.precond;
    write_rows(
        &out_dir.join("preconditioner.csv"),
        (0..spec.n_modes()).map(|j| {
            let (lj, lk) = label(j);
            PrecondRow {
                mode: j,
                label_j: lj,
                label_k: lk,
                mu: spec.prior_var(j),
                lambda0: p.lambda0[j],
                lambda1: p.lambda1[j],
                lambda: p.lambda[j],
                kappa: prepared.kappa[j],
                kappa_over_index_sq: prepared.kappa[j] / ((j + 1) as f64).powi(2),
            }
        }),
    )?;

    write_rows(&out_dir.join("uq_table.csv"), uq.iter())?;

    let config_bytes = serde_json::to_vec(config)?;
    let mut artifacts = Vec::new();
    let mut names: Vec<&str> = ARTIFACTS.iter().copied().filter(|a| *a != "manifest.json").collect();
    if reconstruction.is_some() {
        names.push("fields.csv");
    }
    for name in names {
        artifacts.push((name.to_string(), content_hash(&fs::read(out_dir.join(name))?)));
    }
    let manifest = Manifest {
        crate_version: env!("CARGO_PKG_VERSION"),
        config,
        seed: config.sampler.seed,
        truth_seed: config.truth_seed,
        input_hash: content_hash(&config_bytes),
        artifacts,
    };
    fs::write(out_dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

/// Rebuilds the config recorded in a run manifest.
pub fn read_manifest_config(run_dir: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(run_dir.join("manifest.json"))?;
    let doc: serde_json::Value = serde_json::from_str(&text)?;
    let cfg = doc
        .get("config")
        .cloned()
        .ok_or_else(|| Error::config("manifest has no config"))?;
    Ok(serde_json::from_value(cfg)?)
}
