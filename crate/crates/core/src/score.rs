//! Exact and perturbed scores of the OU-noised prior, mode by mode.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::LogDensityQuadrature;
use crate::spectrum::{ModeSpectrum, PotentialSpec, ScalarPotential};

/// Grid over which the stationary law is checked to exist at construction:
/// `κ_j(τ) = s_j(τ) + ε_j^a(τ) + λ_jσ⁻²A_jj² > 0` on every mode (which reduces
/// to `s_j + ε_j^a > 0` on unobserved modes).
pub const POSITIVITY_GRID: (f64, f64, usize) = (1e-6, 1.0, 100);

/// `μ̌ = e^{-τ}μ + (1 - e^{-τ})λ`, the mode-`j` eigenvalue of `C_τ`.
pub fn ou_blend(mu: f64, lambda: f64, tau: f64) -> f64 {
    let decay = (-tau).exp();
    decay * mu + (-tau).exp_m1().abs() * lambda
}

/// `s_j(τ; μ) = λ / μ̌`.
pub fn gaussian_score_rate(mu: f64, lambda: f64, tau: f64) -> f64 {
    lambda / ou_blend(mu, lambda, tau)
}

/// Conditional law of `X_0` given `X_τ = x` under the Gaussian reference
/// prior: mean `slope·x`, variance `var`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalMoments {
    pub slope: f64,
    pub var: f64,
}

impl ConditionalMoments {
    pub fn new(mu: f64, lambda: f64, tau: f64) -> Self {
        let blend = ou_blend(mu, lambda, tau);
        // μ - e^{-τ}μ²/μ̌ = μ(1 - e^{-τ})λ/μ̌, free of cancellation
        Self {
            slope: (-0.5 * tau).exp() * mu / blend,
            var: mu * (-tau).exp_m1().abs() * lambda / blend,
        }
    }

    pub fn mean(&self, x: f64) -> f64 {
        self.slope * x
    }
}

/// `φ̌(x, τ) = -log E[exp(-φ(Z))]`, `Z ~ N(m_τ(x), v_τ)`, and its derivative
/// in `x`, by quadrature. The derivative is `m_τ'·E_tilt[φ'(Z)]` under the
/// measure tilted by `e^{-φ}`, a ratio of two quadratures.
pub fn conditional_log_partition(
    phi: &ScalarPotential,
    mu: f64,
    lambda: f64,
    tau: f64,
    x: f64,
) -> Result<(f64, f64)> {
    let cond = ConditionalMoments::new(mu, lambda, tau);
    let m = cond.mean(x);
    let v = cond.var;
    let sd = v.sqrt();
    if !(sd > 1e-150 * m.abs().max(1.0)) {
        return Ok((phi.value(m), cond.slope * phi.d1(m)));
    }
    if let ScalarPotential::Zero = phi {
        return Ok((0.0, 0.0));
    }
    let quad = LogDensityQuadrature::new(
        |z: f64| {
            let r = (z - m) / sd;
            -phi.value(z) - 0.5 * r * r
        },
        m,
        sd,
    )?;
    // ∫ exp(-½r²) dz = sd·√(2π)
    let value = -(quad.log_normalizer() - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln());
    let deriv = cond.slope * quad.expect(|z| phi.d1(z))?;
    if !(value.is_finite() && deriv.is_finite()) {
        return Err(Error::numeric(None, format!("smoothed potential is not finite at x = {x:e}")));
    }
    Ok((value, deriv))
}

/// Per-mode values, given as one scalar for every mode, an explicit vector,
/// or iid normal draws with a fixed seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModeValues {
    Scalar(f64),
    Vector(Vec<f64>),
    Normal { normal_std: f64, seed: u64 },
}

impl ModeValues {
    pub fn resolve(&self, n_modes: usize) -> Result<Vec<f64>> {
        match self {
            ModeValues::Scalar(v) => Ok(vec![*v; n_modes]),
            ModeValues::Vector(v) if v.len() == n_modes => Ok(v.clone()),
            ModeValues::Vector(v) => Err(Error::config(format!(
                "per-mode vector has length {}, expected {n_modes}",
                v.len()
            ))),
            ModeValues::Normal { normal_std, seed } => {
                let normal = Normal::new(0.0, *normal_std)
                    .map_err(|e| Error::config(format!("invalid normal_std: {e}")))?;
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok((0..n_modes).map(|_| normal.sample(&mut rng)).collect())
            }
        }
    }
}

/// Configuration form of one error field, before per-mode resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ErrorFieldConfig {
    #[default]
    Zero,
    /// Same `τ`-independent value on every mode.
    Constant { value: f64 },
    /// `ε_j(τ) = slope_j·τ`.
    LinearTau { slope: ModeValues },
    /// `τ`-independent per-mode values.
    Literal { values: ModeValues },
}

/// A resolved error field `ε_j(τ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ErrorField {
    #[default]
    Zero,
    Constant { value: f64 },
    LinearTau { slopes: Vec<f64> },
    Literal { values: Vec<f64> },
}

impl ErrorField {
    pub fn from_config(cfg: &ErrorFieldConfig, n_modes: usize) -> Result<Self> {
        let field = match cfg {
            ErrorFieldConfig::Zero => ErrorField::Zero,
            ErrorFieldConfig::Constant { value } => ErrorField::Constant { value: *value },
            ErrorFieldConfig::LinearTau { slope } => ErrorField::LinearTau {
                slopes: slope.resolve(n_modes)?,
            },
            ErrorFieldConfig::Literal { values } => ErrorField::Literal {
                values: values.resolve(n_modes)?,
            },
        };
        field.validate(n_modes)?;
        Ok(field)
    }

    pub fn validate(&self, n_modes: usize) -> Result<()> {
        let check = |v: &[f64], what: &str| {
            if v.len() != n_modes {
                return Err(Error::config(format!("{what} has length {}, expected {n_modes}", v.len())));
            }
            if v.iter().any(|e| !e.is_finite()) {
                return Err(Error::config(format!("{what} contains non-finite values")));
            }
            Ok(())
        };
        match self {
            ErrorField::Zero => Ok(()),
            ErrorField::Constant { value } if value.is_finite() => Ok(()),
            ErrorField::Constant { .. } => Err(Error::config("constant error is not finite")),
            ErrorField::LinearTau { slopes } => check(slopes, "linear_tau slopes"),
            ErrorField::Literal { values } => check(values, "literal error values"),
        }
    }

    pub fn at(&self, j: usize, tau: f64) -> f64 {
        match self {
            ErrorField::Zero => 0.0,
            ErrorField::Constant { value } => *value,
            ErrorField::LinearTau { slopes } => slopes[j] * tau,
            ErrorField::Literal { values } => values[j],
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ErrorField::Zero => true,
            ErrorField::Constant { value } => *value == 0.0,
            ErrorField::LinearTau { slopes } => slopes.iter().all(|s| *s == 0.0),
            ErrorField::Literal { values } => values.iter().all(|s| *s == 0.0),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            ErrorField::Zero => "zero",
            ErrorField::Constant { .. } => "constant",
            ErrorField::LinearTau { .. } => "linear_tau",
            ErrorField::Literal { .. } => "literal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ErrorConvention {
    /// `ε^a x + ε^b`
    #[default]
    Gaussian,
    /// `ε^a (x + φ'(x)) + ε^b`
    PotentialAware,
}

/// Multiplicative (`eps_a`) and additive (`eps_b`) score errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ScoreError {
    pub eps_a: ErrorField,
    pub eps_b: ErrorField,
}

impl ScoreError {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(eps_a: ErrorField, eps_b: ErrorField) -> Self {
        Self { eps_a, eps_b }
    }

    pub fn eps_a(&self, j: usize, tau: f64) -> f64 {
        self.eps_a.at(j, tau)
    }

    pub fn eps_b(&self, j: usize, tau: f64) -> f64 {
        self.eps_b.at(j, tau)
    }
}

/// Score evaluator at a fixed diffusion time `τ`.
#[derive(Debug, Clone)]
pub struct ScoreModel {
    spec: ModeSpectrum,
    precond_vars: Vec<f64>,
    tau: f64,
    error: ScoreError,
    potential: Option<PotentialSpec>,
    convention: ErrorConvention,
    rates: Vec<f64>,
}

impl ScoreModel {
    /// Gaussian-prior model.
    pub fn gaussian(spec: ModeSpectrum, precond_vars: Vec<f64>, tau: f64, error: ScoreError) -> Result<Self> {
        Self::new(spec, precond_vars, tau, error, None, ErrorConvention::Gaussian)
    }

    pub fn new(
        spec: ModeSpectrum,
        precond_vars: Vec<f64>,
        tau: f64,
        error: ScoreError,
        potential: Option<PotentialSpec>,
        convention: ErrorConvention,
    ) -> Result<Self> {
        let n = spec.n_modes();
        spec.check_len("preconditioner", precond_vars.len())?;
        if let Some((j, l)) = precond_vars
            .iter()
            .enumerate()
            .find(|(_, l)| !(**l > 0.0 && l.is_finite()))
        {
            return Err(Error::config(format!("preconditioner eigenvalue of mode {j} must be positive, got {l}")));
        }
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::config(format!("tau must be non-negative, got {tau}")));
        }
        error.eps_a.validate(n)?;
        error.eps_b.validate(n)?;
        if let Some(phi) = &potential {
            phi.validate(&spec)?;
            if convention != ErrorConvention::PotentialAware {
                return Err(Error::config("a potential requires the potential_aware error convention"));
            }
        }
        let rates: Vec<f64> = (0..n)
            .map(|j| gaussian_score_rate(spec.prior_var(j), precond_vars[j], tau))
            .collect();
        let model = Self {
            spec,
            precond_vars,
            tau,
            error,
            potential,
            convention,
            rates,
        };
        model.check_positivity()?;
        Ok(model)
    }

    fn check_positivity(&self) -> Result<()> {
        if self.error.eps_a.is_zero() {
            return Ok(());
        }
        let (lo, hi, n) = POSITIVITY_GRID;
        let grid = (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64));
        for t in grid.chain(std::iter::once(self.tau)) {
            for j in 0..self.spec.n_modes() {
                let rate = gaussian_score_rate(self.spec.prior_var(j), self.precond_vars[j], t)
                    + self.error.eps_a(j, t)
                    + self.precond_vars[j] * self.spec.data_precision(j);
                if !(rate > 0.0) {
                    return Err(Error::StationaryUndefined { mode: j, rate });
                }
            }
        }
        Ok(())
    }

    /// Same model at another diffusion time.
    pub fn at_tau(&self, tau: f64) -> Result<Self> {
        Self::new(
            self.spec.clone(),
            self.precond_vars.clone(),
            tau,
            self.error.clone(),
            self.potential.clone(),
            self.convention,
        )
    }

    pub fn with_error(&self, error: ScoreError) -> Result<Self> {
        Self::new(
            self.spec.clone(),
            self.precond_vars.clone(),
            self.tau,
            error,
            self.potential.clone(),
            self.convention,
        )
    }

    pub fn spec(&self) -> &ModeSpectrum {
        &self.spec
    }

    pub fn precond_vars(&self) -> &[f64] {
        &self.precond_vars
    }

    pub fn lambda(&self, j: usize) -> f64 {
        self.precond_vars[j]
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn error(&self) -> &ScoreError {
        &self.error
    }

    pub fn potential(&self) -> Option<&PotentialSpec> {
        self.potential.as_ref()
    }

    pub fn convention(&self) -> ErrorConvention {
        self.convention
    }

    /// `s_j(τ; μ)` at the model's `τ`.
    pub fn score_rate(&self, j: usize) -> f64 {
        self.rates[j]
    }

    pub fn eps_a(&self, j: usize) -> f64 {
        self.error.eps_a(j, self.tau)
    }

    pub fn eps_b(&self, j: usize) -> f64 {
        self.error.eps_b(j, self.tau)
    }

    /// `μ̌_j(τ)`.
    pub fn blended_var(&self, j: usize) -> f64 {
        ou_blend(self.spec.prior_var(j), self.precond_vars[j], self.tau)
    }

    /// True when every mode's perturbed score is affine in `x`.
    pub fn is_linear(&self) -> bool {
        self.potential.as_ref().is_none_or(|p| p.is_zero())
    }

    fn mode_potential(&self, j: usize) -> Option<&ScalarPotential> {
        self.potential.as_ref().map(|p| p.mode(j)).filter(|p| !p.is_zero())
    }

    /// Exact score component `j` at `x`.
    pub fn exact_score_mode(&self, j: usize, x: f64) -> Result<f64> {
        let gauss = -self.rates[j] * x;
        match self.mode_potential(j) {
            None => Ok(gauss),
            Some(phi) => {
                let lambda = self.precond_vars[j];
                let (_, d) = conditional_log_partition(phi, self.spec.prior_var(j), lambda, self.tau, x)
                    .map_err(|e| e.at_mode(j))?;
                Ok(-lambda * d + gauss)
            }
        }
    }

    /// The error term subtracted from the exact score at mode `j`.
    pub fn error_term(&self, j: usize, x: f64) -> f64 {
        let ea = self.eps_a(j);
        let eb = self.eps_b(j);
        let arg = match (self.convention, self.mode_potential(j)) {
            (ErrorConvention::PotentialAware, Some(phi)) => x + phi.d1(x),
            _ => x,
        };
        ea * arg + eb
    }

    pub fn perturbed_score_mode(&self, j: usize, x: f64) -> Result<f64> {
        Ok(self.exact_score_mode(j, x)? - self.error_term(j, x))
    }
}

pub fn exact_score(model: &ScoreModel, x: &[f64]) -> Result<Vec<f64>> {
    model.spec.check_len("state", x.len())?;
    x.iter().enumerate().map(|(j, &xj)| model.exact_score_mode(j, xj)).collect()
}

pub fn perturbed_score(model: &ScoreModel, x: &[f64]) -> Result<Vec<f64>> {
    model.spec.check_len("state", x.len())?;
    x.iter().enumerate().map(|(j, &xj)| model.perturbed_score_mode(j, xj)).collect()
}
