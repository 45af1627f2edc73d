//! Stationary laws under score error, KL divergences and chain diagnostics.

mod diagnostics;
mod kl;
mod nongaussian;
mod stationary;

pub use diagnostics::{autocorrelation, chain_diagnostics, iact, ChainDiagnostics, ModeDiagnostics, MIN_KEPT_SAMPLES};
pub use kl::{
    boundedness_indicators, kl_divergence_1d, kl_expansion, kl_gaussian_1d, kl_nongaussian_1d, kl_report,
    BoundednessIndicators, KlReport, ModeKl,
};
pub use nongaussian::{nongaussian_kl_terms, KlTerms};
pub use stationary::{stationary_law, StationaryLaw, StationaryModeDensity};
