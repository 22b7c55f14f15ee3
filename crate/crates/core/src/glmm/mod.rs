//! Hierarchical binomial-logit model for clinic surveillance counts.
//!
//! Site `s` in region `r` tests `N_rst` people in year `t`, of whom
//! `Y_rst ~ Binomial(N_rst, π_rst)` are positive, with
//! `logit π_rst = μ + α_r + X(t)ᵀβ + γ_s`, `α₁ = 0`, a three-column cubic
//! B-spline trend `X(t)` and exchangeable site effects `γ_s ~ N(0, τ²)`.
//! The decision target is the regional prevalence at `γ = 0`.

mod data;
mod influence;
mod mcmc;
mod model;
mod sampler;
mod spline;
mod synthetic;

pub use data::{ClinicData, ClinicObservation, Row};
pub use influence::{site_influence, GlmmInfluence, GlmmInfluenceConfig, ProspectiveMethod, RunDiagnostics, SiteInfluence};
pub use mcmc::{mcmc_sample, tau2_conditional_draw, BlockAcceptance, ChainOutput, McmcConfig, McmcOutput};
pub use model::{log_posterior, logistic, softplus, GlmmModel, GlmmParams, Priors};
pub use sampler::GlmmSampler;
pub use spline::{cubic_basis, spline_design, SplineBasis};
pub use synthetic::{SyntheticData, SyntheticSpec};
