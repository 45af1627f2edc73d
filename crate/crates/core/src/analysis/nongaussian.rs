//! Bias and first-order error terms of the per-mode KL with a potential.
//!
//! Notation: `e = λ⁻¹ε^b`, `c = μe`, `p = λ/μ`, `η = λ⁻¹ε^a(τ)`, `L` the
//! likelihood factor, `w(z) = e^{-φ(z)}L(z)N(-c, μ)(z)` with mass `Z(e)`,
//! and `W[f] = Z(e)⁻¹∫ w f`. With
//!
//! * `h(z) = ½ - (z+c)²/(2μ) + e(z+c)`
//! * `g(x) = λ(φ'(x)² - φ''(x)) - φ'(x)(1-2p)x`
//! * `q = ½ - E[x²]/(2μ) + ½μe²`
//!
//! and `E` the expectation under the stationary law at `τ`, the terms are
//!
//! * `B = -e E[x] - ½μe² + log Z(0) - log Z(e)`
//! * `E1 = (1-p) q + ½E[g] - W[½g + (1-p)h]`
//! * `E2 = μ q - E[φ] - W[μh - φ]`
//!
//! and `KL = B + E1·τ + E2·η` up to second order in `τ`.

use serde::Serialize;

use super::stationary::stationary_law;
use crate::error::{Error, Result};
use crate::quadrature::LogDensityQuadrature;
use crate::score::ScoreModel;
use crate::spectrum::{Observation, ScalarPotential};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KlTerms {
    pub mode: usize,
    pub tau: f64,
    /// `λ⁻¹ε^a(τ)`
    pub eta: f64,
    pub bias: f64,
    pub e1: f64,
    pub e2: f64,
}

impl KlTerms {
    /// `B + E1·τ + E2·η`.
    pub fn approximation(&self) -> f64 {
        self.bias + self.e1 * self.tau + self.e2 * self.eta
    }
}

pub fn nongaussian_kl_terms(model: &ScoreModel, y: &Observation, j: usize) -> Result<KlTerms> {
    let spec = model.spec();
    if j >= spec.n_modes() {
        return Err(Error::config(format!("mode {j} out of range")));
    }
    let phi = model.potential().map(|p| *p.mode(j)).unwrap_or(ScalarPotential::Zero);
    let law = stationary_law(model, y)?;
    let density = law.mode_density(j);

    let mu = spec.prior_var(j);
    let lambda = model.lambda(j);
    let p = lambda / mu;
    let e = model.eps_b(j) / lambda;
    let c = mu * e;
    let eta = model.eps_a(j) / lambda;
    let a = spec.forward(j);
    let yj = y.value(j);
    let prec = spec.noise_precision();
    let g = |x: f64| {
        let d1 = phi.d1(x);
        lambda * (d1 * d1 - phi.d2(x)) - d1 * (1.0 - 2.0 * p) * x
    };
    let h = |z: f64| {
        let s = z + c;
        0.5 - s * s / (2.0 * mu) + e * s
    };

    let quad = density.quadrature()?;
    let ex = quad.expect(|x| x)?;
    let ex2 = quad.expect(|x| x * x)?;
    let eg = quad.expect(g)?;
    let ephi = quad.expect(|x| phi.value(x))?;

    let log_w = |shift: f64| {
        move |z: f64| {
            let r = a * z - yj;
            let s = z + shift;
            -phi.value(z) - 0.5 * prec * r * r - 0.5 * s * s / mu
        }
    };
    let v0 = mu / (1.0 + mu * a * a * prec);
    let reference = |shift: f64| v0 * (a * yj * prec - shift / mu);
    let w_e = LogDensityQuadrature::new(log_w(c), reference(c), v0.sqrt()).map_err(|e| e.at_mode(j))?;
    let w_0 = LogDensityQuadrature::new(log_w(0.0), reference(0.0), v0.sqrt()).map_err(|e| e.at_mode(j))?;

    let q = 0.5 - ex2 / (2.0 * mu) + 0.5 * mu * e * e;
    let bias = -e * ex - 0.5 * mu * e * e + w_0.log_normalizer() - w_e.log_normalizer();
    let e1 = (1.0 - p) * q + 0.5 * eg - w_e.expect(|z| 0.5 * g(z) + (1.0 - p) * h(z))?;
    let e2 = mu * q - ephi - w_e.expect(|z| mu * h(z) - phi.value(z))?;
    Ok(KlTerms {
        mode: j,
        tau: model.tau(),
        eta,
        bias,
        e1,
        e2,
    })
}
