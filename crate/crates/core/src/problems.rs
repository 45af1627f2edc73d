//! Problems built from configuration, and the builtin problems.
//!
//! 2-D index families `(j, k)` are flattened onto one mode index: the observed
//! block (`j, k ≤ M` with `M² = n_observed`) comes first, then the rest; each
//! block is sorted by prior variance, largest first. The `(j, k)` pairs are
//! kept as mode labels.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score::{ErrorConvention, ErrorFieldConfig, ModeValues};
use crate::spectrum::{ModeSpectrum, PotentialSpec, ScalarPotential};

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PriorConfig {
    Literal { values: Vec<f64> },
    /// `μ_j = scale·j^{-exponent}`; exponent 0 gives the identity prior.
    PowerLaw {
        #[serde(default = "two")]
        exponent: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `μ_{j,k} = exp(-β π²(j² + k²))` on a square index set.
    ExpLaplacian { beta: f64 },
    /// `μ_{j,k} = ((j-½)π(k-½)π)^{-2}` on a square index set.
    BrownianSheetKl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ForwardConfig {
    Literal { values: Vec<f64> },
    /// `A_jj = value` on every observed mode.
    IdentityProj {
        #[serde(default = "one")]
        value: f64,
    },
    /// `A_jj = exp(-ζ_j t)` with `ζ` the Dirichlet Laplacian eigenvalue of the mode label.
    HeatSemigroup { t: f64 },
    /// `A_jj = exp(-rate·j)`, 1-based `j`.
    ExpDecay { rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PotentialConfig {
    PerMode(PotentialSpec),
    Uniform {
        #[serde(flatten)]
        potential: ScalarPotential,
        #[serde(default)]
        convexity_floor: Option<f64>,
    },
}

impl PotentialConfig {
    pub fn resolve(&self, n_modes: usize) -> PotentialSpec {
        match self {
            PotentialConfig::PerMode(p) => p.clone(),
            PotentialConfig::Uniform {
                potential,
                convexity_floor,
            } => PotentialSpec {
                modes: vec![*potential; n_modes],
                convexity_floors: convexity_floor.map(|c| vec![c; n_modes]),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub n_modes: usize,
    pub n_observed: usize,
    pub prior: PriorConfig,
    pub forward: ForwardConfig,
    pub noise_std: f64,
    #[serde(default)]
    pub potential: Option<PotentialConfig>,
}

fn is_2d(prior: &PriorConfig) -> bool {
    matches!(prior, PriorConfig::ExpLaplacian { .. } | PriorConfig::BrownianSheetKl)
}

fn exact_sqrt(n: usize, what: &str) -> Result<usize> {
    let s = (n as f64).sqrt().round() as usize;
    if s * s != n {
        return Err(Error::config(format!("{what} = {n} must be a perfect square for a 2-D family")));
    }
    Ok(s)
}

/// Dirichlet Laplacian eigenvalue attached to a label: `π²(j² + k²)` in 2-D,
/// `π²j²` for 1-D labels `(j, 0)`.
pub fn laplacian_eigenvalue(label: (u32, u32)) -> f64 {
    let (j, k) = (label.0 as f64, label.1 as f64);
    PI * PI * (j * j + k * k)
}

impl ProblemConfig {
    pub fn build(&self) -> Result<ModeSpectrum> {
        let n = self.n_modes;
        let m = self.n_observed;
        if n == 0 || m > n {
            return Err(Error::config(format!("need 0 ≤ n_observed ≤ n_modes and n_modes > 0 (got {m}, {n})")));
        }
        let (prior, labels): (Vec<f64>, Vec<(u32, u32)>) = if is_2d(&self.prior) {
            let side = exact_sqrt(n, "n_modes")?;
            let obs_side = exact_sqrt(m, "n_observed")?;
            let var = |j: u32, k: u32| match self.prior {
                PriorConfig::ExpLaplacian { beta } => (-beta * laplacian_eigenvalue((j, k))).exp(),
                PriorConfig::BrownianSheetKl => {
                    let a = (j as f64 - 0.5) * PI * (k as f64 - 0.5) * PI;
                    1.0 / (a * a)
                }
                _ => unreachable!(),
            };
            let mut observed = Vec::with_capacity(m);
            let mut rest = Vec::with_capacity(n - m);
            for j in 1..=side as u32 {
                for k in 1..=side as u32 {
                    let entry = (var(j, k), (j, k));
                    if j as usize <= obs_side && k as usize <= obs_side {
                        observed.push(entry);
                    } else {
                        rest.push(entry);
                    }
                }
            }
            let by_variance = |a: &(f64, (u32, u32)), b: &(f64, (u32, u32))| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
            observed.sort_by(by_variance);
            rest.sort_by(by_variance);
            observed.into_iter().chain(rest).unzip()
        } else {
            let labels = (1..=n as u32).map(|j| (j, 0)).collect();
            let prior = match &self.prior {
                PriorConfig::Literal { values } => {
                    if values.len() != n {
                        return Err(Error::config(format!("literal prior has {} values, n_modes = {n}", values.len())));
                    }
                    values.clone()
                }
                PriorConfig::PowerLaw { exponent, scale } => {
                    (1..=n).map(|j| scale * (j as f64).powf(-exponent)).collect()
                }
                _ => unreachable!(),
            };
            (prior, labels)
        };
        let forward: Vec<f64> = match &self.forward {
            ForwardConfig::Literal { values } => {
                if values.len() != m {
                    return Err(Error::config(format!("literal forward has {} values, n_observed = {m}", values.len())));
                }
                values.clone()
            }
            ForwardConfig::IdentityProj { value } => vec![*value; m],
            ForwardConfig::HeatSemigroup { t } => labels[..m]
                .iter()
                .map(|&l| (-laplacian_eigenvalue(l) * t).exp())
                .collect(),
            ForwardConfig::ExpDecay { rate } => (1..=m).map(|j| (-rate * j as f64).exp()).collect(),
        };
        ModeSpectrum::new(prior, forward, self.noise_std)?.with_labels(labels)
    }

    pub fn potential_spec(&self) -> Option<PotentialSpec> {
        self.potential.as_ref().map(|p| p.resolve(self.n_modes))
    }
}

fn default_tau() -> f64 {
    1e-3
}

/// Score block: evaluation time and error model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub eps_a: ErrorFieldConfig,
    #[serde(default)]
    pub eps_b: ErrorFieldConfig,
    #[serde(default)]
    pub convention: Option<ErrorConvention>,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            tau: default_tau(),
            eps_a: ErrorFieldConfig::Zero,
            eps_b: ErrorFieldConfig::Zero,
            convention: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentTag {
    ToyFig1,
    BrownianSheet,
    HeatEquation,
    #[default]
    Custom,
}

/// Builtin problem families with their reference parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "snake_case")]
pub enum BuiltinProblem {
    /// `N = 200` truncation per axis, identity projection on `j, k ≤ m`, `σ = 0.01`.
    BrownianSheet { m: usize },
    /// `β = 0.1`, `T = 0.1`, `σ = 0.005`, `M = 15`.
    HeatEquation,
    /// `J = 100`, `A_jj = e^{-0.1j}`, `σ = 0.05`; identity or `1/j²` prior.
    ToyFig1 { trace_class: bool },
}

pub const BROWNIAN_SIDE: usize = 200;
pub const BROWNIAN_NOISE: f64 = 0.01;
pub const HEAT_BETA: f64 = 0.1;
pub const HEAT_TIME: f64 = 0.1;
pub const HEAT_NOISE: f64 = 0.005;
pub const HEAT_SIDE: usize = 15;
pub const TOY_MODES: usize = 100;
pub const TOY_NOISE: f64 = 0.05;
pub const TOY_FORWARD_RATE: f64 = 0.1;

impl BuiltinProblem {
    pub fn tag(&self) -> ExperimentTag {
        match self {
            BuiltinProblem::BrownianSheet { .. } => ExperimentTag::BrownianSheet,
            BuiltinProblem::HeatEquation => ExperimentTag::HeatEquation,
            BuiltinProblem::ToyFig1 { .. } => ExperimentTag::ToyFig1,
        }
    }

    pub fn problem(&self) -> ProblemConfig {
        match *self {
            BuiltinProblem::BrownianSheet { m } => ProblemConfig {
                n_modes: BROWNIAN_SIDE * BROWNIAN_SIDE,
                n_observed: m * m,
                prior: PriorConfig::BrownianSheetKl,
                forward: ForwardConfig::IdentityProj { value: 1.0 },
                noise_std: BROWNIAN_NOISE,
                potential: None,
            },
            BuiltinProblem::HeatEquation => ProblemConfig {
                n_modes: HEAT_SIDE * HEAT_SIDE,
                n_observed: HEAT_SIDE * HEAT_SIDE,
                prior: PriorConfig::ExpLaplacian { beta: HEAT_BETA },
                forward: ForwardConfig::HeatSemigroup { t: HEAT_TIME },
                noise_std: HEAT_NOISE,
                potential: None,
            },
            BuiltinProblem::ToyFig1 { trace_class } => ProblemConfig {
                n_modes: TOY_MODES,
                n_observed: TOY_MODES,
                prior: PriorConfig::PowerLaw {
                    exponent: if trace_class { 2.0 } else { 0.0 },
                    scale: 1.0,
                },
                forward: ForwardConfig::ExpDecay { rate: TOY_FORWARD_RATE },
                noise_std: TOY_NOISE,
                potential: None,
            },
        }
    }
}

/// `ε^a_j ~ N(0, 0.1²)·τ` as used for the heat experiment.
pub fn heat_score_error(seed: u64) -> ErrorFieldConfig {
    ErrorFieldConfig::LinearTau {
        slope: ModeValues::Normal {
            normal_std: 0.1,
            seed,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{gaussian_posterior, Observation};

    #[test]
    fn heat_posterior_variance_matches_closed_form() {
        let spec = BuiltinProblem::HeatEquation.problem().build().unwrap();
        let y = Observation::zeros(spec.n_observed());
        let post = gaussian_posterior(&spec, &y).unwrap();
        let s2 = HEAT_NOISE * HEAT_NOISE;
        for (j, &label) in spec.labels().unwrap().iter().enumerate() {
            let z = laplacian_eigenvalue(label);
            let expected = (-HEAT_BETA * z).exp() * s2 / ((-(HEAT_BETA + 2.0 * HEAT_TIME) * z).exp() + s2);
            assert!((post.vars[j] / expected - 1.0).abs() < 1e-12, "mode {j}");
        }
    }

    #[test]
    fn brownian_labels_put_observed_modes_first() {
        let spec = BuiltinProblem::BrownianSheet { m: 3 }.problem().build().unwrap();
        let labels = spec.labels().unwrap();
        assert_eq!(spec.n_modes(), 40_000);
        assert_eq!(labels[0], (1, 1));
        assert!(labels[..9].iter().all(|&(j, k)| j <= 3 && k <= 3));
        assert!(labels[9..].iter().all(|&(j, k)| j > 3 || k > 3));
        let mu = spec.prior_vars();
        assert!(mu[..9].windows(2).all(|w| w[0] >= w[1]));
        assert!(mu[9..].windows(2).all(|w| w[0] >= w[1]));
        let a = (0.5 * PI) * (0.5 * PI);
        assert!((mu[0] - 1.0 / (a * a)).abs() < 1e-15);
    }

    #[test]
    fn toy_problem_parameters() {
        let spec = BuiltinProblem::ToyFig1 { trace_class: true }.problem().build().unwrap();
        assert_eq!(spec.n_modes(), 100);
        assert!((spec.forward(0) - (-0.1f64).exp()).abs() < 1e-15);
        assert!((spec.prior_var(9) - 0.01).abs() < 1e-15);
        let flat = BuiltinProblem::ToyFig1 { trace_class: false }.problem().build().unwrap();
        assert!(flat.prior_vars().iter().all(|&m| m == 1.0));
    }

    #[test]
    fn config_round_trip_and_validation() {
        let json = r#"{"n_modes": 9, "n_observed": 4, "prior": {"family": "exp_laplacian", "beta": 0.1},
                       "forward": {"family": "heat_semigroup", "t": 0.1}, "noise_std": 0.005}"#;
        let cfg: ProblemConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.build().unwrap().n_observed(), 4);
        let bad = ProblemConfig { n_modes: 8, ..cfg.clone() };
        assert!(bad.build().is_err());
        let lit = r#"{"n_modes": 2, "n_observed": 1, "prior": {"family": "literal", "values": [1.0, 0.5]},
                      "forward": {"family": "literal", "values": [2.0]}, "noise_std": 0.1,
                      "potential": {"family": "quartic", "c": 1.0}}"#;
        let cfg: ProblemConfig = serde_json::from_str(lit).unwrap();
        let phi = cfg.potential_spec().unwrap();
        assert_eq!(phi.modes, vec![ScalarPotential::Quartic { c: 1.0 }; 2]);
        assert_eq!(cfg.build().unwrap().forward(0), 2.0);
    }
}
