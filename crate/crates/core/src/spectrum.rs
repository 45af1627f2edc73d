//! The truncated, mode-diagonal linear inverse problem and its exact posterior.
//!
//! Modes `0..n_observed` carry a forward coefficient `A_jj`; the remaining
//! modes lie in the nullspace of the forward map. All indices are 0-based.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::LogDensityQuadrature;

/// Prior covariance eigenvalues, diagonal forward coefficients and noise level
/// over a `J`-mode truncation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSpectrum {
    prior_vars: Vec<f64>,
    forward_diag: Vec<f64>,
    noise_std: f64,
    /// Original `(j, k)` indices when the modes come from a 2-D family.
    labels: Option<Vec<(u32, u32)>>,
}

impl ModeSpectrum {
    pub fn new(prior_vars: Vec<f64>, forward_diag: Vec<f64>, noise_std: f64) -> Result<Self> {
        if prior_vars.is_empty() {
            return Err(Error::config("spectrum must have at least one mode"));
        }
        if forward_diag.len() > prior_vars.len() {
            return Err(Error::config(format!(
                "n_observed = {} exceeds n_modes = {}",
                forward_diag.len(),
                prior_vars.len()
            )));
        }
        if let Some((j, v)) = prior_vars
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
        {
            return Err(Error::config(format!("prior variance of mode {j} must be positive and finite, got {v}")));
        }
        if let Some((j, a)) = forward_diag.iter().enumerate().find(|(_, a)| !a.is_finite()) {
            return Err(Error::config(format!("forward coefficient of mode {j} is not finite: {a}")));
        }
        if !(noise_std > 0.0 && noise_std.is_finite()) {
            return Err(Error::config(format!("noise_std must be positive, got {noise_std}")));
        }
        Ok(Self {
            prior_vars,
            forward_diag,
            noise_std,
            labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<(u32, u32)>) -> Result<Self> {
        if labels.len() != self.prior_vars.len() {
            return Err(Error::config("one label per mode is required"));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n_modes(&self) -> usize {
        self.prior_vars.len()
    }

    pub fn n_observed(&self) -> usize {
        self.forward_diag.len()
    }

    pub fn prior_vars(&self) -> &[f64] {
        &self.prior_vars
    }

    pub fn prior_var(&self, j: usize) -> f64 {
        self.prior_vars[j]
    }

    pub fn forward_diag(&self) -> &[f64] {
        &self.forward_diag
    }

    /// `A_jj`, zero for unobserved modes.
    pub fn forward(&self, j: usize) -> f64 {
        self.forward_diag.get(j).copied().unwrap_or(0.0)
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn noise_precision(&self) -> f64 {
        1.0 / (self.noise_std * self.noise_std)
    }

    /// `σ⁻² A_jj²`, the data precision contributed to mode `j`.
    pub fn data_precision(&self, j: usize) -> f64 {
        let a = self.forward(j);
        a * a * self.noise_precision()
    }

    pub fn labels(&self) -> Option<&[(u32, u32)]> {
        self.labels.as_deref()
    }

    pub fn is_observed(&self, j: usize) -> bool {
        j < self.forward_diag.len()
    }

    /// `Σ_j μ_j` at this truncation.
    pub fn trace(&self) -> f64 {
        self.prior_vars.iter().sum()
    }

    /// Same spectrum with a different noise level.
    pub fn with_noise_std(&self, noise_std: f64) -> Result<Self> {
        let mut out = Self::new(self.prior_vars.clone(), self.forward_diag.clone(), noise_std)?;
        out.labels = self.labels.clone();
        Ok(out)
    }

    /// Same problem with the prior variances replaced (used for `μ̌_j(τ)` oracles).
    pub fn with_prior_vars(&self, prior_vars: Vec<f64>) -> Result<Self> {
        let mut out = Self::new(prior_vars, self.forward_diag.clone(), self.noise_std)?;
        out.labels = self.labels.clone();
        Ok(out)
    }

    /// First `n` modes only; observed modes beyond `n` are dropped with them.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        let n = n.min(self.n_modes());
        let mut out = Self::new(
            self.prior_vars[..n].to_vec(),
            self.forward_diag[..self.n_observed().min(n)].to_vec(),
            self.noise_std,
        )?;
        out.labels = self.labels.as_ref().map(|l| l[..n].to_vec());
        Ok(out)
    }

    pub(crate) fn check_len(&self, what: &str, len: usize) -> Result<()> {
        if len != self.n_modes() {
            return Err(Error::config(format!(
                "{what} has length {len}, expected n_modes = {}",
                self.n_modes()
            )));
        }
        Ok(())
    }
}

/// Data `y_j` in the observation basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub values: Vec<f64>,
}

impl Observation {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n] }
    }

    pub fn check(&self, spec: &ModeSpectrum) -> Result<()> {
        if self.values.len() != spec.n_observed() {
            return Err(Error::config(format!(
                "observation has {} entries but n_observed = {}",
                self.values.len(),
                spec.n_observed()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("observation contains non-finite values"));
        }
        Ok(())
    }

    /// `y_j`, zero for unobserved modes.
    pub fn value(&self, j: usize) -> f64 {
        self.values.get(j).copied().unwrap_or(0.0)
    }
}

/// Exact per-mode posterior mean and variance (Gaussian prior).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorOracle {
    pub means: Vec<f64>,
    pub vars: Vec<f64>,
}

/// Conjugate Gaussian posterior, mode by mode.
pub fn gaussian_posterior(spec: &ModeSpectrum, y: &Observation) -> Result<PosteriorOracle> {
    y.check(spec)?;
    let prec = spec.noise_precision();
    let (means, vars) = (0..spec.n_modes())
        .map(|j| {
            let mu = spec.prior_var(j);
            if !spec.is_observed(j) {
                return (0.0, mu);
            }
            let a = spec.forward(j);
            // (μ⁻¹ + σ⁻²A²)⁻¹ written to stay finite for μ near the underflow limit
            let v = mu / (1.0 + mu * prec * a * a);
            (v * prec * a * y.value(j), v)
        })
        .unzip();
    Ok(PosteriorOracle { means, vars })
}

/// Gradient of `-(1/2σ²)‖Ax - y‖²`.
pub fn likelihood_grad(spec: &ModeSpectrum, y: &Observation, x: &[f64]) -> Result<Vec<f64>> {
    y.check(spec)?;
    spec.check_len("state", x.len())?;
    let prec = spec.noise_precision();
    Ok(x.iter()
        .enumerate()
        .map(|(j, &xj)| {
            if spec.is_observed(j) {
                let a = spec.forward(j);
                prec * a * (y.value(j) - a * xj)
            } else {
                0.0
            }
        })
        .collect())
}

/// A separable scalar potential `φ_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ScalarPotential {
    Zero,
    /// `φ(x) = c·x`
    Linear { c: f64 },
    /// `φ(x) = c·x²/2`
    Quadratic { c: f64 },
    /// `φ(x) = c·x⁴/4`
    Quartic { c: f64 },
}

impl ScalarPotential {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            ScalarPotential::Zero => 0.0,
            ScalarPotential::Linear { c } => c * x,
            ScalarPotential::Quadratic { c } => 0.5 * c * x * x,
            ScalarPotential::Quartic { c } => 0.25 * c * x * x * x * x,
        }
    }

    pub fn d1(&self, x: f64) -> f64 {
        match *self {
            ScalarPotential::Zero => 0.0,
            ScalarPotential::Linear { c } => c,
            ScalarPotential::Quadratic { c } => c * x,
            ScalarPotential::Quartic { c } => c * x * x * x,
        }
    }

    pub fn d2(&self, x: f64) -> f64 {
        match *self {
            ScalarPotential::Zero | ScalarPotential::Linear { .. } => 0.0,
            ScalarPotential::Quadratic { c } => c,
            ScalarPotential::Quartic { c } => 3.0 * c * x * x,
        }
    }

    /// Largest `C` with `φ'' ≥ C` everywhere, when it exists.
    pub fn natural_convexity_floor(&self) -> Option<f64> {
        match *self {
            ScalarPotential::Zero | ScalarPotential::Linear { .. } => Some(0.0),
            ScalarPotential::Quadratic { c } => Some(c),
            ScalarPotential::Quartic { c } if c >= 0.0 => Some(0.0),
            ScalarPotential::Quartic { .. } => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            ScalarPotential::Zero => true,
            ScalarPotential::Linear { c }
            | ScalarPotential::Quadratic { c }
            | ScalarPotential::Quartic { c } => c == 0.0,
        }
    }
}

/// Per-mode potentials `Φ(X) = Σ_j φ_j(X_j)` with optional convexity floors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub modes: Vec<ScalarPotential>,
    /// Explicit `C_{φ_j}`; falls back to the potential's natural floor.
    pub convexity_floors: Option<Vec<f64>>,
}

impl PotentialSpec {
    pub fn uniform(potential: ScalarPotential, n_modes: usize) -> Self {
        Self {
            modes: vec![potential; n_modes],
            convexity_floors: None,
        }
    }

    pub fn mode(&self, j: usize) -> &ScalarPotential {
        &self.modes[j]
    }

    pub fn is_zero(&self) -> bool {
        self.modes.iter().all(ScalarPotential::is_zero)
    }

    pub fn convexity_floor(&self, j: usize) -> Option<f64> {
        match &self.convexity_floors {
            Some(f) => f.get(j).copied(),
            None => self.modes[j].natural_convexity_floor(),
        }
    }

    pub fn validate(&self, spec: &ModeSpectrum) -> Result<()> {
        spec.check_len("potential", self.modes.len())?;
        if let Some(f) = &self.convexity_floors {
            spec.check_len("convexity floors", f.len())?;
            if f.iter().any(|c| !(*c >= 0.0)) {
                return Err(Error::config("convexity floors must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Unnormalized 1-D posterior log-density of one mode:
/// `x ↦ -φ_j(x) - (A_jj x - y_j)²/(2σ²) - x²/(2μ_j)`.
#[derive(Debug, Clone, Copy)]
pub struct ModePosteriorDensity {
    pub mode: usize,
    pub potential: ScalarPotential,
    pub prior_var: f64,
    pub forward: f64,
    pub y: f64,
    pub noise_precision: f64,
}

impl ModePosteriorDensity {
    pub fn log_density(&self, x: f64) -> f64 {
        let r = self.forward * x - self.y;
        -self.potential.value(x) - 0.5 * self.noise_precision * r * r - 0.5 * x * x / self.prior_var
    }

    /// Gaussian (`φ = 0`) moments used to place the quadrature window.
    pub fn reference_moments(&self) -> (f64, f64) {
        let a = self.forward;
        let v = self.prior_var / (1.0 + self.prior_var * self.noise_precision * a * a);
        (v * self.noise_precision * a * self.y, v)
    }

    pub fn quadrature(&self) -> Result<LogDensityQuadrature<impl Fn(f64) -> f64 + '_>> {
        let (m, v) = self.reference_moments();
        LogDensityQuadrature::new(move |x| self.log_density(x), m, v.sqrt())
            .map_err(|e| e.at_mode(self.mode))
    }

    /// Quadrature mean and variance.
    pub fn moments(&self) -> Result<(f64, f64)> {
        self.quadrature()?
            .mean_and_variance()
            .map_err(|e| e.at_mode(self.mode))
    }
}

pub fn posterior_density_1d(
    spec: &ModeSpectrum,
    y: &Observation,
    phi: &PotentialSpec,
    j: usize,
) -> Result<ModePosteriorDensity> {
    y.check(spec)?;
    phi.validate(spec)?;
    if j >= spec.n_modes() {
        return Err(Error::config(format!("mode {j} out of range")));
    }
    Ok(ModePosteriorDensity {
        mode: j,
        potential: *phi.mode(j),
        prior_var: spec.prior_var(j),
        forward: spec.forward(j),
        y: y.value(j),
        noise_precision: spec.noise_precision(),
    })
}
