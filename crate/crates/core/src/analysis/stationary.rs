use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::LogDensityQuadrature;
use crate::score::{conditional_log_partition, ScoreModel};
use crate::spectrum::{Observation, ScalarPotential};

/// Limit law of the sampler driven by the perturbed score.
///
/// `means`/`vars` are the Gaussian factor `N(m̌_j, v̌_j)`; with a potential the
/// mode-`j` density is additionally weighted by `exp(-φ̌_j(x,τ) - λ_j⁻¹ε_j^a φ_j(x))`.
#[derive(Debug, Clone, Serialize)]
pub struct StationaryLaw {
    pub tau: f64,
    pub means: Vec<f64>,
    pub vars: Vec<f64>,
    #[serde(skip)]
    weights: Vec<Option<ModeWeight>>,
}

#[derive(Debug, Clone, Copy)]
struct ModeWeight {
    potential: ScalarPotential,
    mu: f64,
    lambda: f64,
    eta: f64,
}

pub fn stationary_law(model: &ScoreModel, y: &Observation) -> Result<StationaryLaw> {
    let spec = model.spec();
    y.check(spec)?;
    let prec = spec.noise_precision();
    let n = spec.n_modes();
    let mut means = Vec::with_capacity(n);
    let mut vars = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for j in 0..n {
        let lambda = model.lambda(j);
        let ea = model.eps_a(j);
        let a = spec.forward(j);
        // v̌ = [s/λ + σ⁻²A² + ε_a/λ]⁻¹ = λ/κ
        let kappa = model.score_rate(j) + ea + lambda * a * a * prec;
        if !(kappa > 0.0) {
            return Err(Error::StationaryUndefined { mode: j, rate: kappa });
        }
        let v = lambda / kappa;
        means.push(v * (a * y.value(j) * prec - model.eps_b(j) / lambda));
        vars.push(v);
        weights.push(
            model
                .potential()
                .map(|p| *p.mode(j))
                .filter(|p| !p.is_zero())
                .map(|potential| ModeWeight {
                    potential,
                    mu: spec.prior_var(j),
                    lambda,
                    eta: ea / lambda,
                }),
        );
    }
    Ok(StationaryLaw {
        tau: model.tau(),
        means,
        vars,
        weights,
    })
}

impl StationaryLaw {
    pub fn n_modes(&self) -> usize {
        self.means.len()
    }

    pub fn is_gaussian(&self) -> bool {
        self.weights.iter().all(Option::is_none)
    }

    pub fn mode_density(&self, j: usize) -> StationaryModeDensity {
        StationaryModeDensity {
            mode: j,
            tau: self.tau,
            mean: self.means[j],
            var: self.vars[j],
            weight: self.weights[j],
        }
    }
}

/// Unnormalized 1-D stationary density of one mode.
#[derive(Debug, Clone, Copy)]
pub struct StationaryModeDensity {
    pub mode: usize,
    pub tau: f64,
    pub mean: f64,
    pub var: f64,
    weight: Option<ModeWeight>,
}

impl StationaryModeDensity {
    pub fn is_gaussian(&self) -> bool {
        self.weight.is_none()
    }

    /// `-Φ̌_j(x,τ) + log N(m̌_j, v̌_j)(x)` up to a constant; NaN when the
    /// smoothed potential cannot be evaluated.
    pub fn log_density(&self, x: f64) -> f64 {
        let r = x - self.mean;
        let gauss = -0.5 * r * r / self.var;
        match self.weight {
            None => gauss,
            Some(w) => match conditional_log_partition(&w.potential, w.mu, w.lambda, self.tau, x) {
                Ok((smoothed, _)) => gauss - smoothed - w.eta * w.potential.value(x),
                Err(_) => f64::NAN,
            },
        }
    }

    pub fn quadrature(&self) -> Result<LogDensityQuadrature<impl Fn(f64) -> f64 + '_>> {
        LogDensityQuadrature::new(move |x| self.log_density(x), self.mean, self.var.sqrt())
            .map_err(|e| e.at_mode(self.mode))
    }

    pub fn moments(&self) -> Result<(f64, f64)> {
        if self.is_gaussian() {
            return Ok((self.mean, self.var));
        }
        self.quadrature()?.mean_and_variance().map_err(|e| e.at_mode(self.mode))
    }
}
