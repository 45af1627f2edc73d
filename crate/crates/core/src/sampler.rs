//! Preconditioned Langevin chains, integrated mode by mode.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::NoiseStream;
use crate::score::ScoreModel;
use crate::spectrum::Observation;

/// Any component beyond this magnitude marks the chain as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitSpec {
    Zero,
    #[default]
    PriorDraw,
    Literal(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    EulerMaruyama,
    /// Exact transition of the per-mode OU process; affine drifts only.
    ExactOu,
}

fn default_thin() -> usize {
    1
}

fn default_batches() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub step_size: f64,
    pub n_steps: usize,
    pub n_chains: usize,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub integrator: Integrator,
    /// Modes whose full traces are kept; `None` keeps every mode.
    #[serde(default)]
    pub trace_modes: Option<Vec<usize>>,
    /// Batches per chain for batch-means standard errors.
    #[serde(default = "default_batches")]
    pub n_batches: usize,
}

impl SamplerConfig {
    pub fn new(step_size: f64, n_steps: usize, n_chains: usize, seed: u64) -> Self {
        Self {
            step_size,
            n_steps,
            n_chains,
            burn_in: 0,
            thin: 1,
            seed,
            init: InitSpec::default(),
            integrator: Integrator::default(),
            trace_modes: None,
            n_batches: default_batches(),
        }
    }

    pub fn validate(&self, n_modes: usize) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::config(format!("step_size must be positive, got {}", self.step_size)));
        }
        if self.n_chains == 0 {
            return Err(Error::config("n_chains must be at least 1"));
        }
        if self.thin == 0 {
            return Err(Error::config("thin must be at least 1"));
        }
        if self.burn_in >= self.n_steps {
            return Err(Error::config(format!(
                "burn_in = {} leaves no steps out of n_steps = {}",
                self.burn_in, self.n_steps
            )));
        }
        if self.n_batches < 2 {
            return Err(Error::config("n_batches must be at least 2"));
        }
        if let InitSpec::Literal(v) = &self.init {
            if v.len() != n_modes {
                return Err(Error::config(format!("literal init has length {}, expected {n_modes}", v.len())));
            }
        }
        if let Some(modes) = &self.trace_modes {
            if let Some(j) = modes.iter().find(|j| **j >= n_modes) {
                return Err(Error::config(format!("trace mode {j} out of range")));
            }
        }
        Ok(())
    }

    /// Kept samples per chain (post burn-in, thinned).
    pub fn kept_per_chain(&self) -> usize {
        (self.n_steps - self.burn_in).div_ceil(self.thin)
    }
}

/// `(rate, offset)` per mode when the drift is `-rate·x + offset`.
pub fn linear_drift(model: &ScoreModel, y: &Observation) -> Result<Option<Vec<(f64, f64)>>> {
    let spec = model.spec();
    y.check(spec)?;
    if !model.is_linear() {
        return Ok(None);
    }
    let prec = spec.noise_precision();
    Ok(Some(
        (0..spec.n_modes())
            .map(|j| {
                let lambda = model.lambda(j);
                let a = spec.forward(j);
                let rate = model.score_rate(j) + model.eps_a(j) + lambda * a * a * prec;
                let offset = lambda * a * y.value(j) * prec - model.eps_b(j);
                (rate, offset)
            })
            .collect(),
    ))
}

fn drift_mode(model: &ScoreModel, y: &Observation, prec: f64, j: usize, x: f64) -> Result<f64> {
    let a = model.spec().forward(j);
    let lik = if a != 0.0 { prec * a * (y.value(j) - a * x) } else { 0.0 };
    Ok(model.perturbed_score_mode(j, x)? + model.lambda(j) * lik)
}

/// Perturbed score plus the preconditioned likelihood gradient.
pub fn drift(model: &ScoreModel, y: &Observation, x: &[f64]) -> Result<Vec<f64>> {
    let spec = model.spec();
    y.check(spec)?;
    spec.check_len("state", x.len())?;
    let prec = spec.noise_precision();
    x.iter()
        .enumerate()
        .map(|(j, &xj)| drift_mode(model, y, prec, j, xj))
        .collect()
}

/// One Euler–Maruyama step `x + h·drift(x) + sqrt(2λh)·noise`.
pub fn step(x: &[f64], model: &ScoreModel, y: &Observation, h: f64, noise: &[f64]) -> Result<Vec<f64>> {
    model.spec().check_len("noise", noise.len())?;
    let d = drift(model, y, x)?;
    Ok(x.iter()
        .zip(&d)
        .zip(noise)
        .enumerate()
        .map(|(j, ((&xj, &dj), &n))| xj + h * dj + (2.0 * model.lambda(j) * h).sqrt() * n)
        .collect())
}

/// First component to leave the finite region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub chain: usize,
    pub step: usize,
    pub mode: usize,
    pub value: f64,
}

/// Per-mode sample moments with batch-means standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeMoments {
    pub mean: f64,
    pub var: f64,
    pub mean_se: f64,
    pub var_se: f64,
}

#[derive(Debug, Clone)]
struct Accumulator {
    batch_len: usize,
    n_modes: usize,
    counts: Vec<usize>,
    sums: Vec<f64>,
    sumsq: Vec<f64>,
}

impl Accumulator {
    fn new(n_modes: usize, n_batches: usize, kept: usize) -> Self {
        Self {
            batch_len: (kept / n_batches).max(1),
            n_modes,
            counts: vec![0; n_batches],
            sums: vec![0.0; n_batches * n_modes],
            sumsq: vec![0.0; n_batches * n_modes],
        }
    }

    fn push(&mut self, index: usize, x: &[f64], shift: &[f64]) {
        let b = (index / self.batch_len).min(self.counts.len() - 1);
        self.counts[b] += 1;
        let off = b * self.n_modes;
        let sums = &mut self.sums[off..off + self.n_modes];
        let sumsq = &mut self.sumsq[off..off + self.n_modes];
        for (((s, q), &xj), &c) in sums.iter_mut().zip(sumsq.iter_mut()).zip(x).zip(shift) {
            let d = xj - c;
            *s += d;
            *q += d * d;
        }
    }
}

/// `K` independent chains with streamed moments and optional full traces.
#[derive(Debug, Clone)]
pub struct ChainEnsemble {
    pub config: SamplerConfig,
    pub n_modes: usize,
    /// Modes recorded in `traces`, in column order.
    pub trace_modes: Vec<usize>,
    /// Per chain, row-major `kept × trace_modes.len()`.
    pub traces: Vec<Vec<f64>>,
    /// Number of steps taken at each kept sample (shared by all chains).
    pub kept_steps: Vec<usize>,
    pub stream_ids: Vec<u64>,
    pub final_states: Vec<Vec<f64>>,
    pub divergence: Option<Divergence>,
    pub warnings: Vec<String>,
    kept_counts: Vec<usize>,
    shift: Vec<f64>,
    accumulators: Vec<Accumulator>,
}

impl ChainEnsemble {
    pub fn n_chains(&self) -> usize {
        self.traces.len()
    }

    pub fn diverged(&self) -> bool {
        self.divergence.is_some()
    }

    /// Kept samples of chain `k` (may be short if the chain diverged).
    pub fn kept(&self, chain: usize) -> usize {
        self.kept_counts[chain]
    }

    /// Trace of mode `mode` in chain `chain`, if it was recorded.
    pub fn trace(&self, chain: usize, mode: usize) -> Option<Vec<f64>> {
        let col = self.trace_modes.iter().position(|m| *m == mode)?;
        let w = self.trace_modes.len();
        Some(self.traces[chain].iter().skip(col).step_by(w).copied().collect())
    }

    /// Pooled moments of every mode over all kept samples of all chains.
    pub fn mode_moments(&self) -> Vec<ModeMoments> {
        (0..self.n_modes).map(|j| self.moments_of(j)).collect()
    }

    fn moments_of(&self, j: usize) -> ModeMoments {
        let mut n = 0usize;
        let (mut s, mut q) = (0.0, 0.0);
        let mut batches = Vec::new();
        for acc in &self.accumulators {
            for (b, &c) in acc.counts.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                let bs = acc.sums[b * acc.n_modes + j];
                let bq = acc.sumsq[b * acc.n_modes + j];
                n += c;
                s += bs;
                q += bq;
                batches.push((bs / c as f64, bq / c as f64));
            }
        }
        if n == 0 {
            return ModeMoments {
                mean: f64::NAN,
                var: f64::NAN,
                mean_se: f64::NAN,
                var_se: f64::NAN,
            };
        }
        let nf = n as f64;
        let m = s / nf;
        let var = ((q / nf - m * m) * nf / (nf - 1.0).max(1.0)).max(0.0);
        let nb = batches.len() as f64;
        let spread = |vals: &mut dyn Iterator<Item = f64>| {
            let v: Vec<f64> = vals.collect();
            let mean = v.iter().sum::<f64>() / nb;
            let ss = v.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>();
            (ss / (nb - 1.0).max(1.0) / nb).sqrt()
        };
        let mean_se = spread(&mut batches.iter().map(|(bm, _)| *bm));
        let var_se = spread(&mut batches.iter().map(|(bm, bq)| bq - 2.0 * m * bm + m * m));
        ModeMoments {
            mean: m + self.shift[j],
            var,
            mean_se,
            var_se,
        }
    }
}

enum Kernel {
    /// `x ← a·x + b + s·ξ`
    Affine(Vec<(f64, f64, f64)>),
    Euler,
}

/// Runs `config.n_chains` chains from the model's perturbed score.
///
/// A diverging chain stops at the offending step; its partial trace is kept
/// and the divergence is reported on the ensemble rather than as an error.
pub fn run(model: &ScoreModel, y: &Observation, config: &SamplerConfig) -> Result<ChainEnsemble> {
    let spec = model.spec();
    let n = spec.n_modes();
    config.validate(n)?;
    y.check(spec)?;
    let h = config.step_size;
    let linear = linear_drift(model, y)?;

    let mut warnings = Vec::new();
    if config.integrator == Integrator::EulerMaruyama {
        let prec = spec.noise_precision();
        let (worst, rate) = (0..n)
            .map(|j| {
                let a = spec.forward(j);
                (j, model.score_rate(j) + model.eps_a(j) + model.lambda(j) * a * a * prec)
            })
            .fold((0, f64::NEG_INFINITY), |acc, v| if v.1 > acc.1 { v } else { acc });
        if h * rate >= 2.0 {
            let msg = format!(
                "explicit Euler is unstable: h·κ = {:.3e} ≥ 2 at mode {worst} (κ = {rate:.3e}, h = {h:e})",
                h * rate
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }

    let kernel = match (&linear, config.integrator) {
        (Some(coef), Integrator::EulerMaruyama) => Kernel::Affine(
            coef.iter()
                .enumerate()
                .map(|(j, &(r, c))| (1.0 - h * r, h * c, (2.0 * model.lambda(j) * h).sqrt()))
                .collect(),
        ),
        (Some(coef), Integrator::ExactOu) => Kernel::Affine(
            coef.iter()
                .enumerate()
                .map(|(j, &(r, c))| {
                    let one_minus_a = -(-r * h).exp_m1();
                    let var = model.lambda(j) * -(-2.0 * r * h).exp_m1() / r;
                    (1.0 - one_minus_a, c / r * one_minus_a, var.sqrt())
                })
                .collect(),
        ),
        (None, Integrator::EulerMaruyama) => Kernel::Euler,
        (None, Integrator::ExactOu) => {
            return Err(Error::config("the exact OU integrator needs an affine drift (no potential)"));
        }
    };
    let shift: Vec<f64> = match &linear {
        Some(coef) => coef.iter().map(|&(r, c)| c / r).collect(),
        None => vec![0.0; n],
    };
    let trace_modes: Vec<usize> = config.trace_modes.clone().unwrap_or_else(|| (0..n).collect());
    let kept_steps: Vec<usize> = (config.burn_in..config.n_steps)
        .step_by(config.thin)
        .map(|t| t + 1)
        .collect();

    let chains: Vec<ChainOutput> = (0..config.n_chains)
        .into_par_iter()
        .map(|k| run_chain(model, y, config, &kernel, &shift, &trace_modes, k))
        .collect::<Result<_>>()?;

    let divergence = chains.iter().find_map(|c| c.divergence);
    if let Some(d) = divergence {
        log::warn!(
            "chain {} diverged at step {} (mode {}, value {:e})",
            d.chain,
            d.step,
            d.mode,
            d.value
        );
    }
    let mut ensemble = ChainEnsemble {
        config: config.clone(),
        n_modes: n,
        trace_modes,
        traces: Vec::with_capacity(chains.len()),
        kept_steps,
        stream_ids: (0..config.n_chains as u64).collect(),
        final_states: Vec::with_capacity(chains.len()),
        divergence,
        warnings,
        kept_counts: Vec::with_capacity(chains.len()),
        shift,
        accumulators: Vec::with_capacity(chains.len()),
    };
    for c in chains {
        ensemble.kept_counts.push(c.kept);
        ensemble.traces.push(c.trace);
        ensemble.final_states.push(c.state);
        ensemble.accumulators.push(c.acc);
    }
    Ok(ensemble)
}

struct ChainOutput {
    kept: usize,
    trace: Vec<f64>,
    state: Vec<f64>,
    acc: Accumulator,
    divergence: Option<Divergence>,
}

fn run_chain(
    model: &ScoreModel,
    y: &Observation,
    config: &SamplerConfig,
    kernel: &Kernel,
    shift: &[f64],
    trace_modes: &[usize],
    chain: usize,
) -> Result<ChainOutput> {
    let spec = model.spec();
    let n = spec.n_modes();
    let h = config.step_size;
    let prec = spec.noise_precision();
    let mut noise = NoiseStream::new(config.seed, chain as u64, n);
    let mut xi = vec![0.0; n];
    let mut x = match &config.init {
        InitSpec::Zero => vec![0.0; n],
        InitSpec::Literal(v) => v.clone(),
        InitSpec::PriorDraw => {
            noise.fill(0, &mut xi);
            xi.iter().zip(spec.prior_vars()).map(|(z, mu)| z * mu.sqrt()).collect()
        }
    };
    let kept = config.kept_per_chain();
    let mut acc = Accumulator::new(n, config.n_batches, kept);
    let mut trace = Vec::with_capacity(kept * trace_modes.len());
    let scales: Vec<f64> = (0..n).map(|j| (2.0 * model.lambda(j) * h).sqrt()).collect();
    let mut divergence = None;
    let mut kept_index = 0;

    for t in 0..config.n_steps {
        noise.fill(t as u64 + 1, &mut xi);
        match kernel {
            Kernel::Affine(coef) => {
                for ((xj, &(a, b, s)), &z) in x.iter_mut().zip(coef).zip(&xi) {
                    *xj = a * *xj + b + s * z;
                }
            }
            Kernel::Euler => {
                for j in 0..n {
                    let d = drift_mode(model, y, prec, j, x[j]).map_err(|e| e.at_mode(j))?;
                    x[j] += h * d + scales[j] * xi[j];
                }
            }
        }
        if let Some(j) = x.iter().position(|v| !(v.abs() <= DIVERGENCE_THRESHOLD)) {
            divergence = Some(Divergence {
                chain,
                step: t + 1,
                mode: j,
                value: x[j],
            });
            break;
        }
        if t >= config.burn_in && (t - config.burn_in) % config.thin == 0 {
            acc.push(kept_index, &x, shift);
            trace.extend(trace_modes.iter().map(|&j| x[j]));
            kept_index += 1;
        }
    }
    Ok(ChainOutput {
        kept: kept_index,
        trace,
        state: x,
        acc,
        divergence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{ErrorField, ScoreError};
    use crate::spectrum::{gaussian_posterior, ModeSpectrum};

    fn observed_model(tau: f64) -> (ScoreModel, Observation) {
        let spec = ModeSpectrum::new(vec![1.0, 0.25, 0.04], vec![1.0, 0.5], 0.5).unwrap();
        let lambda = spec.prior_vars().to_vec();
        (
            ScoreModel::gaussian(spec, lambda, tau, ScoreError::zero()).unwrap(),
            Observation::new(vec![0.8, -0.3]),
        )
    }

    #[test]
    fn drift_vanishes_at_the_posterior_mean() {
        let (model, y) = observed_model(0.0);
        let post = gaussian_posterior(model.spec(), &y).unwrap();
        for d in drift(&model, &y, &post.means).unwrap() {
            assert!(d.abs() < 1e-12);
        }
        let x1 = step(&post.means, &model, &y, 0.1, &[0.0; 3]).unwrap();
        for (a, b) in x1.iter().zip(&post.means) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn unobserved_drift_is_the_score() {
        let (model, y) = observed_model(0.01);
        let d = drift(&model, &y, &[0.0, 0.0, 1.5]).unwrap();
        assert!((d[2] + model.score_rate(2) * 1.5).abs() < 1e-15);
    }

    #[test]
    fn vanilla_drift_rate_grows_like_j_squared() {
        let mu: Vec<f64> = (1..=100).map(|j| 1.0 / (j * j) as f64).collect();
        let spec = ModeSpectrum::new(mu, vec![], 1.0).unwrap();
        let model = ScoreModel::gaussian(spec, vec![1.0; 100], 1e-8, ScoreError::zero()).unwrap();
        let coef = linear_drift(&model, &Observation::zeros(0)).unwrap().unwrap();
        for (j, (r, _)) in coef.iter().enumerate() {
            let jj = ((j + 1) * (j + 1)) as f64;
            assert!((r / jj - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn step_definition() {
        let (model, y) = observed_model(0.01);
        let x0 = [0.0; 3];
        let d = drift(&model, &y, &x0).unwrap();
        let h = 0.02;
        let x1 = step(&x0, &model, &y, h, &[1.0, 0.0, 0.0]).unwrap();
        assert!((x1[0] - (h * d[0] + (2.0 * model.lambda(0) * h).sqrt())).abs() < 1e-15);
        assert!((x1[1] - h * d[1]).abs() < 1e-15);
        assert_eq!(step(&[0.3, 0.2, 0.1], &model, &y, 0.0, &[5.0, 5.0, 5.0]).unwrap(), vec![0.3, 0.2, 0.1]);
    }

    #[test]
    fn burn_in_must_leave_samples() {
        let (model, y) = observed_model(0.01);
        let mut cfg = SamplerConfig::new(0.01, 100, 1, 0);
        cfg.burn_in = 100;
        assert!(matches!(run(&model, &y, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn runs_are_bit_reproducible() {
        let (model, y) = observed_model(0.01);
        let mut cfg = SamplerConfig::new(0.01, 500, 3, 99);
        cfg.thin = 7;
        let a = run(&model, &y, &cfg).unwrap();
        let b = run(&model, &y, &cfg).unwrap();
        assert_eq!(a.traces, b.traces);
        assert_eq!(a.kept(0), cfg.kept_per_chain());
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run(&model, &y, &cfg).unwrap());
        assert_eq!(a.traces, single.traces);
    }

    #[test]
    fn unobserved_modes_ignore_the_data() {
        let (model, _) = observed_model(0.01);
        let cfg = SamplerConfig::new(0.01, 300, 2, 5);
        let a = run(&model, &Observation::new(vec![0.8, -0.3]), &cfg).unwrap();
        let b = run(&model, &Observation::new(vec![-4.0, 2.0]), &cfg).unwrap();
        for k in 0..2 {
            assert_eq!(a.trace(k, 2), b.trace(k, 2));
            assert_ne!(a.trace(k, 0), b.trace(k, 0));
        }
    }

    #[test]
    fn divergence_is_flagged_and_partial_output_kept() {
        let mu: Vec<f64> = (1..=20).map(|j| 1.0 / (j * j) as f64).collect();
        let spec = ModeSpectrum::new(mu, vec![], 1.0).unwrap();
        let model = ScoreModel::gaussian(spec, vec![1.0; 20], 0.0, ScoreError::zero()).unwrap();
        let cfg = SamplerConfig::new(0.01, 2000, 1, 1);
        let ens = run(&model, &Observation::zeros(0), &cfg).unwrap();
        assert!(!ens.warnings.is_empty());
        let d = ens.divergence.expect("unstable run must diverge");
        assert_eq!(d.chain, 0);
        assert!(ens.kept(0) < cfg.kept_per_chain());
        assert!(ens.kept(0) > 0);
    }

    #[test]
    fn exact_ou_rejects_potentials() {
        use crate::score::ErrorConvention;
        use crate::spectrum::{PotentialSpec, ScalarPotential};
        let spec = ModeSpectrum::new(vec![1.0], vec![], 1.0).unwrap();
        let phi = PotentialSpec::uniform(ScalarPotential::Quartic { c: 1.0 }, 1);
        let model =
            ScoreModel::new(spec, vec![1.0], 0.1, ScoreError::zero(), Some(phi), ErrorConvention::PotentialAware).unwrap();
        let mut cfg = SamplerConfig::new(0.1, 10, 1, 0);
        cfg.integrator = Integrator::ExactOu;
        assert!(run(&model, &Observation::zeros(0), &cfg).is_err());
    }

    #[test]
    fn exact_ou_hits_the_stationary_law() {
        let spec = ModeSpectrum::new(vec![1.0, 0.5], vec![], 1.0).unwrap();
        let err = ScoreError::new(ErrorField::Zero, ErrorField::Constant { value: 0.3 });
        let model = ScoreModel::gaussian(spec, vec![1.0, 0.5], 0.0, err).unwrap();
        let mut cfg = SamplerConfig::new(0.5, 40_000, 2, 3);
        cfg.integrator = Integrator::ExactOu;
        cfg.burn_in = 100;
        let m = run(&model, &Observation::zeros(0), &cfg).unwrap().mode_moments();
        // v̌ = μ, m̌ = -v̌·ε_b/λ
        for (j, &(mu, lambda)) in [(1.0f64, 1.0f64), (0.5, 0.5)].iter().enumerate() {
            let mean = -mu * 0.3 / lambda;
            assert!((m[j].mean - mean).abs() < 4.0 * m[j].mean_se, "{:?}", m[j]);
            assert!((m[j].var - mu).abs() < 4.0 * m[j].var_se, "{:?}", m[j]);
        }
    }
}
