use serde::Serialize;

use super::stationary::{stationary_law, StationaryModeDensity};
use crate::error::{Error, Result};
use crate::quadrature::LogDensityQuadrature;
use crate::score::{ErrorField, ScoreModel};
use crate::spectrum::{gaussian_posterior, posterior_density_1d, ModePosteriorDensity, Observation, PotentialSpec};

/// `KL(N(m1, v1) || N(m2, v2))`.
pub fn kl_gaussian_1d(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
    let ratio = v1 / v2;
    let d = m1 - m2;
    0.5 * (ratio - 1.0 - ratio.ln()) + 0.5 * d * d / v2
}

/// Small-`τ` expansion of the per-mode KL between the stationary law and the
/// posterior, without the `O(τ²)` remainder.
///
/// With `d = λ⁻¹ε^b`, `δ = (p-1)τ - p⁻¹ε^a(τ)`, `r = (1 + σ⁻²μA²)⁻¹` and
/// posterior variance `v = μr`, the value is `v·[½d² - r·d·(σ⁻²Ay - d)·δ]`;
/// on unobserved modes this is `μd²(½ + δ)`.
pub fn kl_expansion(model: &ScoreModel, y: &Observation, j: usize) -> Result<f64> {
    match &model.error().eps_a {
        ErrorField::LinearTau { .. } | ErrorField::Zero => {}
        f if f.is_zero() => {}
        f => {
            return Err(Error::contract(format!(
                "the KL expansion needs a linear_tau (or zero) multiplicative error, got {}",
                f.family()
            )))
        }
    }
    if let ErrorField::LinearTau { .. } = model.error().eps_b {
        return Err(Error::contract("the KL expansion needs a τ-independent additive error"));
    }
    let spec = model.spec();
    y.check(spec)?;
    if j >= spec.n_modes() {
        return Err(Error::config(format!("mode {j} out of range")));
    }
    let mu = spec.prior_var(j);
    let lambda = model.lambda(j);
    let p = lambda / mu;
    let d = model.eps_b(j) / lambda;
    let delta = (p - 1.0) * model.tau() - model.eps_a(j) / p;
    let r = 1.0 / (1.0 + mu * spec.data_precision(j));
    let aty = spec.forward(j) * y.value(j) * spec.noise_precision();
    Ok(mu * r * (0.5 * d * d - r * d * (aty - d) * delta))
}

/// `∫ p log(p/q)` for two 1-D densities known up to constants, each placed
/// by reference moments `(center, scale)`.
pub fn kl_divergence_1d<P, Q>(log_p: P, p_ref: (f64, f64), log_q: Q, q_ref: (f64, f64)) -> Result<f64>
where
    P: Fn(f64) -> f64,
    Q: Fn(f64) -> f64,
{
    let p = LogDensityQuadrature::new(&log_p, p_ref.0, p_ref.1)?;
    let q = LogDensityQuadrature::new(&log_q, q_ref.0, q_ref.1)?;
    let (zp, zq) = (p.log_normalizer(), q.log_normalizer());
    let kl = p.expect(|x| (log_p(x) - zp) - (log_q(x) - zq))?;
    Ok(kl.max(0.0))
}

/// Quadrature KL between one mode of the stationary law and the posterior.
pub fn kl_nongaussian_1d(law: &StationaryModeDensity, oracle: &ModePosteriorDensity) -> Result<f64> {
    let (om, ov) = oracle.reference_moments();
    kl_divergence_1d(
        |x| law.log_density(x),
        (law.mean, law.var.sqrt()),
        |x| oracle.log_density(x),
        (om, ov.sqrt()),
    )
    .map_err(|e| e.at_mode(law.mode))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeKl {
    pub mode: usize,
    pub exact: f64,
    /// `None` when the error families fall outside the expansion's hypotheses.
    pub expansion: Option<f64>,
    pub residual: Option<f64>,
}

/// Quantities whose finiteness (as the truncation grows) controls the total KL.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundednessIndicators {
    /// `Σ_j |λ_j⁻¹ ε_j^b(τ)|`
    pub sum_abs_scaled_bias: f64,
    /// `max_j |p_j⁻¹ ε_j^a(τ)|`
    pub max_abs_scaled_mult: f64,
    /// `max_j |(Aᵀy)_j|`
    pub max_abs_aty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KlReport {
    pub tau: f64,
    pub modes: Vec<ModeKl>,
    pub total_exact: f64,
    pub indicators: BoundednessIndicators,
}

pub fn boundedness_indicators(model: &ScoreModel, y: &Observation) -> BoundednessIndicators {
    let spec = model.spec();
    let n = spec.n_modes();
    BoundednessIndicators {
        sum_abs_scaled_bias: (0..n).map(|j| (model.eps_b(j) / model.lambda(j)).abs()).sum(),
        max_abs_scaled_mult: (0..n)
            .map(|j| (model.eps_a(j) * spec.prior_var(j) / model.lambda(j)).abs())
            .fold(0.0, f64::max),
        max_abs_aty: (0..spec.n_observed())
            .map(|j| (spec.forward(j) * y.value(j)).abs())
            .fold(0.0, f64::max),
    }
}

/// Exact per-mode KL (closed form, or quadrature with a potential) next to
/// its small-`τ` expansion.
pub fn kl_report(model: &ScoreModel, y: &Observation) -> Result<KlReport> {
    let spec = model.spec();
    let law = stationary_law(model, y)?;
    let modes: Vec<ModeKl> = if law.is_gaussian() {
        let post = gaussian_posterior(spec, y)?;
        (0..spec.n_modes())
            .map(|j| {
                let exact = kl_gaussian_1d(law.means[j], law.vars[j], post.means[j], post.vars[j]);
                mode_entry(model, y, j, exact)
            })
            .collect()
    } else {
        let default_phi;
        let phi: &PotentialSpec = match model.potential() {
            Some(p) => p,
            None => {
                default_phi = PotentialSpec::uniform(crate::spectrum::ScalarPotential::Zero, spec.n_modes());
                &default_phi
            }
        };
        (0..spec.n_modes())
            .map(|j| {
                let oracle = posterior_density_1d(spec, y, phi, j)?;
                let exact = kl_nongaussian_1d(&law.mode_density(j), &oracle)?;
                Ok(mode_entry(model, y, j, exact))
            })
            .collect::<Result<_>>()?
    };
    let total_exact = modes.iter().map(|m| m.exact).sum();
    Ok(KlReport {
        tau: model.tau(),
        modes,
        total_exact,
        indicators: boundedness_indicators(model, y),
    })
}

fn mode_entry(model: &ScoreModel, y: &Observation, j: usize, exact: f64) -> ModeKl {
    let expansion = kl_expansion(model, y, j).ok();
    ModeKl {
        mode: j,
        exact,
        expansion,
        residual: expansion.map(|e| exact - e),
    }
}
