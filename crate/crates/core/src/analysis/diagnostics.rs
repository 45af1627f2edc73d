use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sampler::ChainEnsemble;

pub const MIN_KEPT_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeDiagnostics {
    pub mode: usize,
    pub mean: f64,
    pub var: f64,
    pub mean_se: f64,
    pub var_se: f64,
    /// Only for modes with recorded traces.
    pub iact: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainDiagnostics {
    pub n_chains: usize,
    pub kept_per_chain: usize,
    pub diverged: bool,
    pub modes: Vec<ModeDiagnostics>,
}

impl ChainDiagnostics {
    pub fn iacts(&self) -> Vec<(usize, f64)> {
        self.modes.iter().filter_map(|m| m.iact.map(|t| (m.mode, t))).collect()
    }
}

/// Pooled moments for every mode and an integrated autocorrelation time for
/// every traced mode.
pub fn chain_diagnostics(ensemble: &ChainEnsemble) -> Result<ChainDiagnostics> {
    let kept = (0..ensemble.n_chains()).map(|k| ensemble.kept(k)).min().unwrap_or(0);
    if kept < MIN_KEPT_SAMPLES {
        return Err(Error::Diagnostic(format!(
            "chains hold {kept} kept samples, at least {MIN_KEPT_SAMPLES} are needed"
        )));
    }
    let moments = ensemble.mode_moments();
    let mut iacts = vec![None; ensemble.n_modes];
    let mut planner = FftPlanner::new();
    for &j in &ensemble.trace_modes {
        let traces: Vec<Vec<f64>> = (0..ensemble.n_chains())
            .map(|k| {
                let mut t = ensemble.trace(k, j).unwrap_or_default();
                t.truncate(kept);
                t
            })
            .collect();
        let refs: Vec<&[f64]> = traces.iter().map(Vec::as_slice).collect();
        iacts[j] = Some(iact_with(&refs, &mut planner).map_err(|e| match e {
            Error::Diagnostic(m) => Error::Diagnostic(format!("mode {j}: {m}")),
            other => other,
        })?);
    }
    Ok(ChainDiagnostics {
        n_chains: ensemble.n_chains(),
        kept_per_chain: kept,
        diverged: ensemble.diverged(),
        modes: moments
            .iter()
            .enumerate()
            .map(|(j, m)| ModeDiagnostics {
                mode: j,
                mean: m.mean,
                var: m.var,
                mean_se: m.mean_se,
                var_se: m.var_se,
                iact: iacts[j],
            })
            .collect(),
    })
}

/// Integrated autocorrelation time of equal-length chains, from the combined
/// multi-chain autocorrelation truncated by Geyer's initial positive sequence
/// (with the initial monotone adjustment).
pub fn iact(chains: &[&[f64]]) -> Result<f64> {
    iact_with(chains, &mut FftPlanner::new())
}

fn iact_with(chains: &[&[f64]], planner: &mut FftPlanner<f64>) -> Result<f64> {
    let rho = combined_autocorrelation(chains, planner)?;
    let n = rho.len();
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let pair = rho[t] + rho[t + 1];
        if !(pair > 0.0) {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        t += 2;
    }
    Ok((2.0 * sum - 1.0).max(1.0 / (n as f64).log10()))
}

/// Combined multi-chain autocorrelation at lags `0..=max_lag` (clamped to the
/// chain length).
pub fn autocorrelation(chains: &[&[f64]], max_lag: usize) -> Result<Vec<f64>> {
    let mut rho = combined_autocorrelation(chains, &mut FftPlanner::new())?;
    rho.truncate(max_lag + 1);
    Ok(rho)
}

/// `ρ_t = 1 - (W - mean_k acov_k(t)) / var⁺` with `W` the within-chain and
/// `var⁺` the pooled variance estimate.
fn combined_autocorrelation(chains: &[&[f64]], planner: &mut FftPlanner<f64>) -> Result<Vec<f64>> {
    let n = chains.first().map_or(0, |c| c.len());
    if chains.is_empty() || n < 4 || chains.iter().any(|c| c.len() != n) {
        return Err(Error::Diagnostic("need equal-length chains with at least 4 samples".into()));
    }
    let m = chains.len() as f64;
    let nf = n as f64;
    let mut acov_mean = vec![0.0; n];
    let mut chain_means = Vec::with_capacity(chains.len());
    let mut within = 0.0;
    for c in chains {
        let (mean, acov) = autocovariance(c, planner);
        chain_means.push(mean);
        within += acov[0] * nf / (nf - 1.0);
        for (s, a) in acov_mean.iter_mut().zip(&acov) {
            *s += a / m;
        }
    }
    within /= m;
    let grand = chain_means.iter().sum::<f64>() / m;
    let between = if chains.len() > 1 {
        nf * chain_means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    let var_plus = within * (nf - 1.0) / nf + between / nf;
    if !(var_plus > 0.0 && var_plus.is_finite()) {
        return Err(Error::Diagnostic("chain has zero variance".into()));
    }
    Ok(acov_mean.iter().map(|a| 1.0 - (within - a) / var_plus).collect())
}

/// Chain mean and biased autocovariance at every lag, via zero-padded FFT.
fn autocovariance(x: &[f64], planner: &mut FftPlanner<f64>) -> (f64, Vec<f64>) {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let len = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .map(|v| Complex::new(v - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(len)
        .collect();
    planner.plan_fft_forward(len).process(&mut buf);
    for c in &mut buf {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let scale = 1.0 / (len as f64 * n as f64);
    (mean, buf[..n].iter().map(|c| c.re * scale).collect())
}
