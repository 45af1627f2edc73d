//! Spectral simulation of preconditioned Langevin samplers driven by
//! score-based priors on a truncated Hilbert space.
//!
//! Everything is mode-diagonal: the prior covariance, the preconditioner and
//! the forward operator share one eigenbasis, so each mode evolves as an
//! independent 1-D diffusion and every law of interest is a product of 1-D
//! laws with closed forms (Gaussian priors) or quadrature oracles (separable
//! potentials).

pub mod analysis;
pub mod error;
pub mod experiment;
pub mod precond;
pub mod problems;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod score;
pub mod spectrum;

pub use analysis::{
    chain_diagnostics, kl_expansion, kl_gaussian_1d, kl_nongaussian_1d, kl_report, nongaussian_kl_terms,
    stationary_law, ChainDiagnostics, KlReport, KlTerms, StationaryLaw,
};
pub use error::{Error, Result};
pub use experiment::{
    emit_uq_table, field_reconstruction, posterior_oracle, prepare, run_experiment, synthesize_data, Basis,
    ExperimentConfig, ExperimentOutput, HeatProfile, UqRow,
};
pub use precond::{
    build_preconditioner, nongaussian_uniform_lambda, optimal_preconditioner, reversion_rate, uniformity_check,
    PreconditionerFamily, PreconditionerSpec, UniformityReport,
};
pub use problems::{BuiltinProblem, ExperimentTag, ProblemConfig, ScoreConfig};
pub use sampler::{drift, run, step, ChainEnsemble, InitSpec, Integrator, SamplerConfig};
pub use score::{
    conditional_log_partition, exact_score, gaussian_score_rate, ou_blend, perturbed_score, ErrorConvention,
    ErrorField, ErrorFieldConfig, ScoreError, ScoreModel,
};
pub use spectrum::{
    gaussian_posterior, likelihood_grad, posterior_density_1d, ModeSpectrum, Observation, PosteriorOracle,
    PotentialSpec, ScalarPotential,
};
