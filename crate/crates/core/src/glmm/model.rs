use statrs::function::factorial::ln_binomial;
use statrs::function::gamma::ln_gamma;

use super::data::{ClinicData, Row};
use super::spline::SplineBasis;
use crate::error::{Result, VoiError};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `1 / (1 + e^{−η})`, evaluated without overflow for either sign.
pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^η)`.
pub fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// Prior hyperparameters. Normal spreads are variances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Priors {
    pub mu_var: f64,
    pub alpha_var: f64,
    pub beta_var: f64,
    /// Inverse-gamma shape and scale for `τ²`.
    pub tau2_shape: f64,
    pub tau2_scale: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            mu_var: 100.0,
            alpha_var: 100.0,
            beta_var: 100.0,
            tau2_shape: 0.1,
            tau2_scale: 0.1,
        }
    }
}

impl Priors {
    pub fn validate(&self) -> Result<()> {
        let all = [self.mu_var, self.alpha_var, self.beta_var, self.tau2_shape, self.tau2_scale];
        if all.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(VoiError::InvalidArgument(
                "prior variances and inverse-gamma parameters must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn ln_normal(x: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln() + x * x / var)
}

fn ln_inv_gamma(x: f64, shape: f64, scale: f64) -> f64 {
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
}

/// Parameters of the hierarchical logit model. `alpha[0]` is the reference region and stays 0.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmmParams {
    pub mu: f64,
    pub alpha: Vec<f64>,
    pub beta: [f64; 3],
    pub gamma: Vec<f64>,
    pub tau2: f64,
}

impl GlmmParams {
    pub fn zeros(n_regions: usize, n_sites: usize) -> Self {
        Self {
            mu: 0.0,
            alpha: vec![0.0; n_regions],
            beta: [0.0; 3],
            gamma: vec![0.0; n_sites],
            tau2: 1.0,
        }
    }

    /// Regional prevalence `π_rt` at a zero site effect, row-major over regions × years.
    pub fn prevalence(&self, basis: &SplineBasis) -> Vec<f64> {
        let trend = basis.trend(&self.beta);
        self.alpha
            .iter()
            .flat_map(|a| trend.iter().map(move |x| logistic(self.mu + a + x)))
            .collect()
    }
}

/// The model for a dataset, optionally with one site removed entirely.
#[derive(Debug, Clone)]
pub struct GlmmModel {
    data: ClinicData,
    basis: SplineBasis,
    priors: Priors,
    excluded: Option<usize>,
    /// Site-years that enter the likelihood (nobody tested and excluded site dropped).
    active: Vec<Row>,
    ln_coef: Vec<f64>,
    /// Indices into `active` for each site and each region.
    by_site: Vec<Vec<usize>>,
    by_region: Vec<Vec<usize>>,
}

impl GlmmModel {
    pub fn new(data: ClinicData, priors: Priors, excluded: Option<usize>) -> Result<Self> {
        priors.validate()?;
        if let Some(s) = excluded {
            if s >= data.n_sites() {
                return Err(VoiError::UnknownUnit(s.to_string()));
            }
        }
        let basis = super::spline::spline_design(data.years())?;
        let active: Vec<Row> = data
            .rows()
            .iter()
            .filter(|r| r.tested > 0 && Some(r.site) != excluded)
            .copied()
            .collect();
        let ln_coef = active
            .iter()
            .map(|r| ln_binomial(r.tested, r.positive))
            .collect();
        let mut by_site = vec![Vec::new(); data.n_sites()];
        let mut by_region = vec![Vec::new(); data.n_regions()];
        for (i, r) in active.iter().enumerate() {
            by_site[r.site].push(i);
            by_region[r.region].push(i);
        }
        Ok(Self {
            data,
            basis,
            priors,
            excluded,
            active,
            ln_coef,
            by_site,
            by_region,
        })
    }

    pub fn data(&self) -> &ClinicData {
        &self.data
    }

    pub fn basis(&self) -> &SplineBasis {
        &self.basis
    }

    pub fn priors(&self) -> &Priors {
        &self.priors
    }

    pub fn excluded(&self) -> Option<usize> {
        self.excluded
    }

    pub fn includes_site(&self, s: usize) -> bool {
        Some(s) != self.excluded
    }

    /// Number of sites whose effects are in the model.
    pub fn n_modelled_sites(&self) -> usize {
        self.data.n_sites() - usize::from(self.excluded.is_some())
    }

    pub(crate) fn active_rows(&self) -> &[Row] {
        &self.active
    }

    pub(crate) fn site_active_rows(&self, s: usize) -> &[usize] {
        &self.by_site[s]
    }

    pub(crate) fn region_active_rows(&self, r: usize) -> &[usize] {
        &self.by_region[r]
    }

    fn check(&self, p: &GlmmParams) -> Result<()> {
        if p.alpha.len() != self.data.n_regions() {
            return Err(VoiError::DimensionMismatch {
                expected: self.data.n_regions(),
                found: p.alpha.len(),
            });
        }
        if p.gamma.len() != self.data.n_sites() {
            return Err(VoiError::DimensionMismatch {
                expected: self.data.n_sites(),
                found: p.gamma.len(),
            });
        }
        if p.alpha[0] != 0.0 {
            return Err(VoiError::InvalidArgument("the reference region effect must be 0".into()));
        }
        if !(p.tau2 > 0.0) {
            return Err(VoiError::InvalidArgument(format!("tau2 must be positive, got {}", p.tau2)));
        }
        Ok(())
    }

    /// Log-likelihood term of one active row given its linear predictor.
    pub(crate) fn row_loglik(&self, i: usize, eta: f64) -> f64 {
        let r = &self.active[i];
        r.positive as f64 * eta - r.tested as f64 * softplus(eta) + self.ln_coef[i]
    }

    pub(crate) fn eta(&self, p: &GlmmParams, trend: &[f64], r: &Row) -> f64 {
        p.mu + p.alpha[r.region] + trend[r.year] + p.gamma[r.site]
    }

    pub fn log_likelihood(&self, p: &GlmmParams) -> Result<f64> {
        self.check(p)?;
        let trend = self.basis.trend(&p.beta);
        Ok(self
            .active
            .iter()
            .enumerate()
            .map(|(i, r)| self.row_loglik(i, self.eta(p, &trend, r)))
            .sum())
    }

    pub fn log_prior(&self, p: &GlmmParams) -> Result<f64> {
        self.check(p)?;
        let pr = &self.priors;
        let mut lp = ln_normal(p.mu, pr.mu_var);
        lp += p.alpha[1..].iter().map(|a| ln_normal(*a, pr.alpha_var)).sum::<f64>();
        lp += p.beta.iter().map(|b| ln_normal(*b, pr.beta_var)).sum::<f64>();
        lp += (0..self.data.n_sites())
            .filter(|&s| self.includes_site(s))
            .map(|s| ln_normal(p.gamma[s], p.tau2))
            .sum::<f64>();
        lp += ln_inv_gamma(p.tau2, pr.tau2_shape, pr.tau2_scale);
        Ok(lp)
    }

    pub fn log_posterior(&self, p: &GlmmParams) -> Result<f64> {
        Ok(self.log_likelihood(p)? + self.log_prior(p)?)
    }
}

/// Unnormalized log-posterior of `params` given `data`.
pub fn log_posterior(params: &GlmmParams, data: &ClinicData, priors: &Priors) -> Result<f64> {
    GlmmModel::new(data.clone(), *priors, None)?.log_posterior(params)
}
