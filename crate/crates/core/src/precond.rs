//! Mean-reversion rates and preconditioner spectra.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score::{ou_blend, ErrorField};
use crate::spectrum::{ModeSpectrum, PotentialSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PreconditionerFamily {
    /// `C = I`
    Identity,
    /// `C = C_μ`
    Prior,
    /// `C = [C_μ⁻¹ + σ⁻²AᵀA]⁻¹`
    PosteriorForm,
    /// First-order corrected optimum for a linear-in-`τ` multiplicative error.
    #[default]
    OptimalCorrected,
    /// `[C_μ⁻¹ + σ⁻²AᵀA + C_φ]⁻¹` from per-mode convexity floors.
    NongaussianUniform,
    Literal { values: Vec<f64> },
}

impl PreconditionerFamily {
    pub fn tag(&self) -> &'static str {
        match self {
            PreconditionerFamily::Identity => "identity",
            PreconditionerFamily::Prior => "prior",
            PreconditionerFamily::PosteriorForm => "posterior_form",
            PreconditionerFamily::OptimalCorrected => "optimal_corrected",
            PreconditionerFamily::NongaussianUniform => "nongaussian_uniform",
            PreconditionerFamily::Literal { .. } => "literal",
        }
    }
}

/// `λ_j = λ_j⁽⁰⁾ + λ_j⁽¹⁾τ` together with its ingredients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreconditionerSpec {
    pub family: PreconditionerFamily,
    pub tau: f64,
    pub lambda0: Vec<f64>,
    pub lambda1: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl PreconditionerSpec {
    fn assemble(family: PreconditionerFamily, tau: f64, lambda0: Vec<f64>, lambda1: Vec<f64>) -> Result<Self> {
        let lambda: Vec<f64> = lambda0.iter().zip(&lambda1).map(|(l0, l1)| l0 + l1 * tau).collect();
        if let Some((j, l)) = lambda.iter().enumerate().find(|(_, l)| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::config(format!(
                "{} preconditioner is not positive at mode {j} (λ = {l:e}, τ = {tau:e})",
                family.tag()
            )));
        }
        Ok(Self {
            family,
            tau,
            lambda0,
            lambda1,
            lambda,
        })
    }

    /// A fixed spectrum with no `τ` correction.
    pub fn fixed(family: PreconditionerFamily, tau: f64, lambda: Vec<f64>) -> Result<Self> {
        let zeros = vec![0.0; lambda.len()];
        Self::assemble(family, tau, lambda, zeros)
    }
}

/// `λ0_j = [μ_j⁻¹ + σ⁻²A_jj²]⁻¹`.
fn posterior_form(spec: &ModeSpectrum) -> Vec<f64> {
    (0..spec.n_modes())
        .map(|j| {
            let mu = spec.prior_var(j);
            mu / (1.0 + mu * spec.data_precision(j))
        })
        .collect()
}

/// `κ_j = λ_j/μ̌_j(τ) + λ_j σ⁻²A_jj² + ε_j^a(τ)`, with `eps_a` already
/// evaluated at `τ`.
pub fn reversion_rate(spec: &ModeSpectrum, lambda: &[f64], tau: f64, eps_a: &[f64]) -> Result<Vec<f64>> {
    spec.check_len("preconditioner", lambda.len())?;
    spec.check_len("eps_a", eps_a.len())?;
    Ok((0..spec.n_modes())
        .map(|j| {
            let l = lambda[j];
            l / ou_blend(spec.prior_var(j), l, tau) + l * spec.data_precision(j) + eps_a[j]
        })
        .collect())
}

/// Corrected optimal preconditioner for `ε_j^a(τ) = ε_j^a·τ`.
pub fn optimal_preconditioner(spec: &ModeSpectrum, tau: f64, eps_a: &ErrorField) -> Result<PreconditionerSpec> {
    let n = spec.n_modes();
    let slopes = match eps_a {
        ErrorField::LinearTau { slopes } => {
            spec.check_len("eps_a slopes", slopes.len())?;
            slopes.clone()
        }
        f if f.is_zero() => vec![0.0; n],
        f => {
            return Err(Error::contract(format!(
                "the optimal preconditioner needs a linear_tau multiplicative error, got {}",
                f.family()
            )))
        }
    };
    let lambda0 = posterior_form(spec);
    // λ0³/μ² - λ0²/μ - ε λ0, factored so that μ near the underflow limit stays finite;
    // on unobserved modes λ0 = μ and this is -μ ε
    let lambda1 = (0..n)
        .map(|j| {
            let l0 = lambda0[j];
            let r = l0 / spec.prior_var(j);
            l0 * r * (r - 1.0) - slopes[j] * l0
        })
        .collect();
    PreconditionerSpec::assemble(PreconditionerFamily::OptimalCorrected, tau, lambda0, lambda1)
}

/// `λ_j = [μ_j⁻¹ + σ⁻²A_jj² + C_{φ_j}]⁻¹`.
pub fn nongaussian_uniform_lambda(spec: &ModeSpectrum, phi: &PotentialSpec) -> Result<Vec<f64>> {
    phi.validate(spec)?;
    (0..spec.n_modes())
        .map(|j| {
            let c = phi
                .convexity_floor(j)
                .ok_or_else(|| Error::contract(format!("mode {j} has no convexity floor")))?;
            let mu = spec.prior_var(j);
            Ok(mu / (1.0 + mu * (spec.data_precision(j) + c)))
        })
        .collect()
}

/// Builds any family's spectrum at `τ`.
pub fn build_preconditioner(
    family: &PreconditionerFamily,
    spec: &ModeSpectrum,
    tau: f64,
    eps_a: &ErrorField,
    phi: Option<&PotentialSpec>,
) -> Result<PreconditionerSpec> {
    let n = spec.n_modes();
    match family {
        PreconditionerFamily::Identity => PreconditionerSpec::fixed(family.clone(), tau, vec![1.0; n]),
        PreconditionerFamily::Prior => PreconditionerSpec::fixed(family.clone(), tau, spec.prior_vars().to_vec()),
        PreconditionerFamily::PosteriorForm => PreconditionerSpec::fixed(family.clone(), tau, posterior_form(spec)),
        PreconditionerFamily::OptimalCorrected => optimal_preconditioner(spec, tau, eps_a),
        PreconditionerFamily::NongaussianUniform => {
            let phi = phi.ok_or_else(|| Error::contract("nongaussian_uniform needs a potential"))?;
            PreconditionerSpec::fixed(family.clone(), tau, nongaussian_uniform_lambda(spec, phi)?)
        }
        PreconditionerFamily::Literal { values } => {
            spec.check_len("literal preconditioner", values.len())?;
            PreconditionerSpec::fixed(family.clone(), tau, values.clone())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformityReport {
    pub tau: f64,
    /// `max_j |κ_j(τ) - 1|`
    pub max_dev: f64,
    /// `max_j |κ_j(τ/2) - 1|`
    pub max_dev_half: f64,
    /// `log2(max_dev / max_dev_half)`
    pub order_estimate: f64,
}

pub fn max_deviation(kappa: &[f64]) -> f64 {
    kappa.iter().map(|k| (k - 1.0).abs()).fold(0.0, f64::max)
}

/// Compares rates computed at `τ` and `τ/2`.
pub fn uniformity_check(kappa: &[f64], kappa_half: &[f64], tau: f64) -> UniformityReport {
    let max_dev = max_deviation(kappa);
    let max_dev_half = max_deviation(kappa_half);
    UniformityReport {
        tau,
        max_dev,
        max_dev_half,
        order_estimate: (max_dev / max_dev_half).log2(),
    }
}
