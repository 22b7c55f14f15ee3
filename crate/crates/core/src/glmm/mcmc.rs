//! Adaptive random-walk Metropolis-within-Gibbs for [`GlmmModel`].
//!
//! Each sweep updates `μ`, the region effects as one block, the trend
//! coefficients as one block, optionally all fixed effects jointly, each site
//! effect, and finally draws `τ²` from its inverse-gamma full conditional.
//! A translation move per region then shifts the region level (`μ` for the
//! reference region) against that region's site effects, which the data
//! barely distinguish.
//! Proposal scales follow a Robbins–Monro recursion on the log scale during
//! burn-in, targeting acceptance 0.44 for scalar blocks and 0.234 for vector
//! blocks; vector blocks also learn their proposal covariance. Everything is
//! frozen once burn-in ends.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;

use super::model::{logistic, GlmmModel, GlmmParams};
use crate::error::{Result, VoiError};
use crate::seed;
use crate::stats;
use crate::voi::PosteriorDraws;

const SCALAR_TARGET: f64 = 0.44;
const VECTOR_TARGET: f64 = 0.234;
const CHAIN_STREAM: u64 = 0x4D43;
/// Burn-in iteration from which vector blocks use their empirical covariance.
const COVARIANCE_START: usize = 500;
const COVARIANCE_REFRESH: usize = 100;
const RHAT_WARN: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McmcConfig {
    pub chains: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Add a joint random-walk block over `(μ, α, β)`.
    pub joint_fixed_block: bool,
    /// Learn proposal covariances of the vector blocks during burn-in.
    pub adapt_covariance: bool,
    /// Per-region moves trading the region level against its site effects.
    pub translation_moves: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            iterations: 20_000,
            burn_in: 10_000,
            thin: 10,
            joint_fixed_block: true,
            adapt_covariance: true,
            translation_moves: true,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.thin == 0 {
            return Err(VoiError::InvalidArgument("chains and thin must be at least 1".into()));
        }
        if self.iterations <= self.burn_in {
            return Err(VoiError::InvalidArgument(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            )));
        }
        Ok(())
    }

    pub fn draws_per_chain(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    pub fn total_draws(&self) -> usize {
        self.chains * self.draws_per_chain()
    }

    /// The same schedule lengthened or shortened to give at least `n` draws in total.
    pub fn for_draws(&self, n: usize) -> Self {
        let per_chain = n.div_ceil(self.chains).max(1);
        Self {
            iterations: self.burn_in + self.thin * per_chain,
            ..*self
        }
    }
}

/// Post-burn-in acceptance rate of one block (site effects are averaged).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockAcceptance {
    pub block: String,
    pub rate: f64,
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub draws: Vec<GlmmParams>,
    pub acceptance: Vec<BlockAcceptance>,
}

#[derive(Debug, Clone)]
pub struct McmcOutput {
    pub chains: Vec<ChainOutput>,
    /// Split-chain potential scale reduction per scalar parameter.
    pub rhat: Vec<(String, f64)>,
}

impl McmcOutput {
    pub fn draws(&self) -> impl Iterator<Item = &GlmmParams> {
        self.chains.iter().flat_map(|c| c.draws.iter())
    }

    pub fn n_draws(&self) -> usize {
        self.chains.iter().map(|c| c.draws.len()).sum()
    }

    /// The first `n` draws, taken chain by chain.
    pub fn first_draws(&self, n: usize) -> Vec<&GlmmParams> {
        self.draws().take(n).collect()
    }

    /// Prevalence draws `π_rt` (row-major regions × years) of the first `n` parameter draws.
    pub fn target_draws(&self, model: &GlmmModel, n: usize) -> Result<PosteriorDraws> {
        let rows: Vec<DVector<f64>> = self
            .first_draws(n)
            .into_iter()
            .map(|p| DVector::from_vec(p.prevalence(model.basis())))
            .collect();
        PosteriorDraws::from_rows(&rows)
    }

    pub fn max_rhat(&self) -> f64 {
        self.rhat.iter().map(|(_, r)| *r).fold(f64::NAN, f64::max)
    }

    /// Acceptance rates averaged over chains.
    pub fn acceptance(&self) -> Vec<BlockAcceptance> {
        let Some(first) = self.chains.first() else {
            return Vec::new();
        };
        first
            .acceptance
            .iter()
            .enumerate()
            .map(|(j, b)| BlockAcceptance {
                block: b.block.clone(),
                rate: self.chains.iter().map(|c| c.acceptance[j].rate).sum::<f64>() / self.chains.len() as f64,
            })
            .collect()
    }
}

struct ScalarAdapt {
    log_scale: f64,
    accepted: usize,
    tried: usize,
}

impl ScalarAdapt {
    fn new(scale: f64) -> Self {
        Self {
            log_scale: scale.ln(),
            accepted: 0,
            tried: 0,
        }
    }

    fn record(&mut self, accept_prob: f64, accepted: bool, t: Option<usize>, target: f64) {
        match t {
            Some(t) => self.log_scale = (self.log_scale + robbins_monro(t) * (accept_prob - target)).clamp(-20.0, 5.0),
            None => {
                self.tried += 1;
                self.accepted += usize::from(accepted);
            }
        }
    }

    fn rate(&self) -> f64 {
        if self.tried == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.tried as f64
        }
    }
}

fn robbins_monro(t: usize) -> f64 {
    (1.0 + t as f64).powf(-0.6)
}

/// A vector block with adaptive scale and online empirical covariance.
struct VectorAdapt {
    scalar: ScalarAdapt,
    chol: DMatrix<f64>,
    count: usize,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
}

impl VectorAdapt {
    fn new(dim: usize) -> Self {
        Self {
            scalar: ScalarAdapt::new(0.05),
            chol: DMatrix::identity(dim, dim),
            count: 0,
            mean: DVector::zeros(dim),
            m2: DMatrix::zeros(dim, dim),
        }
    }

    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn observe(&mut self, x: &DVector<f64>) {
        self.count += 1;
        let delta = x - &self.mean;
        self.mean += &delta / self.count as f64;
        let delta2 = x - &self.mean;
        self.m2 += &delta * delta2.transpose();
    }

    fn refresh(&mut self, first: bool) {
        let d = self.dim();
        let cov = &self.m2 / (self.count as f64 - 1.0);
        let jitter = 1e-10 * (cov.trace() / d as f64).max(1e-12);
        if let Some(ch) = (cov + DMatrix::identity(d, d) * jitter).cholesky() {
            self.chol = ch.l();
            if first {
                self.scalar.log_scale = (2.38 / (d as f64).sqrt()).ln();
            }
        }
    }

    fn propose(&self, rng: &mut seed::Rng) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.chol * z * self.scalar.log_scale.exp()
    }
}

#[derive(Clone, Copy)]
enum Fixed {
    Mu,
    Alpha,
    Beta,
    Joint,
}

struct Chain<'a> {
    model: &'a GlmmModel,
    params: GlmmParams,
    row_ll: Vec<f64>,
    scratch: Vec<f64>,
    total_ll: f64,
    rng: seed::Rng,
}

impl<'a> Chain<'a> {
    fn new(model: &'a GlmmModel, params: GlmmParams, rng: seed::Rng) -> Result<Self> {
        let n = model.active_rows().len();
        let mut chain = Self {
            model,
            params,
            row_ll: vec![0.0; n],
            scratch: vec![0.0; n],
            total_ll: 0.0,
            rng,
        };
        chain.total_ll = chain.fill_loglik(&chain.params.clone(), true);
        let lp = model.log_posterior(&chain.params)?;
        if !lp.is_finite() {
            return Err(VoiError::NonFiniteInit);
        }
        Ok(chain)
    }

    /// Row log-likelihoods at `p` into `row_ll` (`current`) or `scratch`; returns their sum.
    fn fill_loglik(&mut self, p: &GlmmParams, current: bool) -> f64 {
        let trend = self.model.basis().trend(&p.beta);
        let out = if current { &mut self.row_ll } else { &mut self.scratch };
        let mut total = 0.0;
        for (i, r) in self.model.active_rows().iter().enumerate() {
            let v = self.model.row_loglik(i, self.model.eta(p, &trend, r));
            out[i] = v;
            total += v;
        }
        total
    }

    fn fixed_vector(&self, which: Fixed) -> DVector<f64> {
        let p = &self.params;
        match which {
            Fixed::Mu => DVector::from_element(1, p.mu),
            Fixed::Alpha => DVector::from_column_slice(&p.alpha[1..]),
            Fixed::Beta => DVector::from_column_slice(&p.beta),
            Fixed::Joint => {
                let mut v = vec![p.mu];
                v.extend_from_slice(&p.alpha[1..]);
                v.extend_from_slice(&p.beta);
                DVector::from_vec(v)
            }
        }
    }

    fn with_fixed(&self, which: Fixed, v: &DVector<f64>) -> GlmmParams {
        let mut p = self.params.clone();
        let r = p.alpha.len() - 1;
        match which {
            Fixed::Mu => p.mu = v[0],
            Fixed::Alpha => p.alpha[1..].copy_from_slice(v.as_slice()),
            Fixed::Beta => p.beta.copy_from_slice(v.as_slice()),
            Fixed::Joint => {
                p.mu = v[0];
                p.alpha[1..].copy_from_slice(&v.as_slice()[1..1 + r]);
                p.beta.copy_from_slice(&v.as_slice()[1 + r..]);
            }
        }
        p
    }

    fn fixed_log_prior(&self, p: &GlmmParams) -> f64 {
        let pr = self.model.priors();
        -0.5 * (p.mu * p.mu / pr.mu_var
            + p.alpha[1..].iter().map(|a| a * a).sum::<f64>() / pr.alpha_var
            + p.beta.iter().map(|b| b * b).sum::<f64>() / pr.beta_var)
    }

    /// One Metropolis step on a fixed-effect block; returns the acceptance probability and outcome.
    fn step_fixed(&mut self, which: Fixed, step: &DVector<f64>) -> (f64, bool) {
        let proposal = self.with_fixed(which, &(self.fixed_vector(which) + step));
        let ll = self.fill_loglik(&proposal, false);
        let log_ratio = ll - self.total_ll + self.fixed_log_prior(&proposal) - self.fixed_log_prior(&self.params);
        let prob = log_ratio.exp().min(1.0);
        let u: f64 = self.rng.gen();
        let accept = log_ratio.is_finite() && u.ln() < log_ratio;
        if accept {
            self.params = proposal;
            self.total_ll = ll;
            std::mem::swap(&mut self.row_ll, &mut self.scratch);
        }
        (if prob.is_nan() { 0.0 } else { prob }, accept)
    }

    fn step_site(&mut self, s: usize, scale: f64) -> (f64, bool) {
        let model = self.model;
        let rows = model.site_active_rows(s);
        let trend = model.basis().trend(&self.params.beta);
        let old_g = self.params.gamma[s];
        let new_g = old_g + scale * self.rng.sample::<f64, _>(StandardNormal);
        let base = self.params.mu + self.params.alpha[model.data().site_region(s)];
        let mut old_ll = 0.0;
        let mut new_ll = 0.0;
        for &i in rows {
            let r = &model.active_rows()[i];
            old_ll += self.row_ll[i];
            let v = model.row_loglik(i, base + trend[r.year] + new_g);
            self.scratch[i] = v;
            new_ll += v;
        }
        let tau2 = self.params.tau2;
        let log_ratio = new_ll - old_ll - 0.5 * (new_g * new_g - old_g * old_g) / tau2;
        let prob = log_ratio.exp().min(1.0);
        let u: f64 = self.rng.gen();
        let accept = log_ratio.is_finite() && u.ln() < log_ratio;
        if accept {
            self.params.gamma[s] = new_g;
            for &i in rows {
                self.row_ll[i] = self.scratch[i];
            }
            self.total_ll += new_ll - old_ll;
        }
        (if prob.is_nan() { 0.0 } else { prob }, accept)
    }

    /// Moves region `r`'s level by `delta` and its site effects by `−delta`.
    fn step_translate(&mut self, r: usize, delta: f64) -> (f64, bool) {
        let model = self.model;
        let mut proposal = self.params.clone();
        if r == 0 {
            proposal.mu += delta;
            for a in proposal.alpha[1..].iter_mut() {
                *a -= delta;
            }
        } else {
            proposal.alpha[r] += delta;
        }
        let mut gamma_prior = 0.0;
        for s in 0..model.data().n_sites() {
            if model.includes_site(s) && model.data().site_region(s) == r {
                let (old, new) = (self.params.gamma[s], self.params.gamma[s] - delta);
                proposal.gamma[s] = new;
                gamma_prior -= 0.5 * (new * new - old * old) / self.params.tau2;
            }
        }
        // Only region r's linear predictors change.
        let rows = model.region_active_rows(r);
        let trend = model.basis().trend(&proposal.beta);
        let (mut old_ll, mut new_ll) = (0.0, 0.0);
        for &i in rows {
            old_ll += self.row_ll[i];
            let v = model.row_loglik(i, model.eta(&proposal, &trend, &model.active_rows()[i]));
            self.scratch[i] = v;
            new_ll += v;
        }
        let log_ratio = new_ll - old_ll + self.fixed_log_prior(&proposal) - self.fixed_log_prior(&self.params)
            + gamma_prior;
        let prob = log_ratio.exp().min(1.0);
        let u: f64 = self.rng.gen();
        let accept = log_ratio.is_finite() && u.ln() < log_ratio;
        if accept {
            self.params = proposal;
            for &i in rows {
                self.row_ll[i] = self.scratch[i];
            }
            self.total_ll += new_ll - old_ll;
        }
        (if prob.is_nan() { 0.0 } else { prob }, accept)
    }

    /// Gibbs update from `InvGamma(a + k/2, b + Σγ²/2)` over the `k` modelled sites.
    ///
    /// The precision is drawn as `Gamma(a) + ½χ²_k` with one normal per site,
    /// modelled or not, so that runs with and without a site consume the
    /// random stream identically.
    fn step_tau2(&mut self) {
        let pr = self.model.priors();
        let mut ss = 0.0;
        let mut precision = Gamma::new(pr.tau2_shape, 1.0).expect("positive shape").sample(&mut self.rng);
        for (s, g) in self.params.gamma.iter().enumerate() {
            let z: f64 = self.rng.sample(StandardNormal);
            if self.model.includes_site(s) {
                ss += g * g;
                precision += 0.5 * z * z;
            }
        }
        let scale = pr.tau2_scale + 0.5 * ss;
        self.params.tau2 = (scale / precision).max(f64::MIN_POSITIVE);
    }
}

/// Draws `τ²` from its inverse-gamma full conditional given the site effects.
pub fn tau2_conditional_draw(model: &GlmmModel, gamma: &[f64], rng: &mut seed::Rng) -> f64 {
    let mut p = GlmmParams::zeros(model.data().n_regions(), model.data().n_sites());
    p.gamma = gamma.to_vec();
    let mut chain = Chain {
        model,
        params: p,
        row_ll: Vec::new(),
        scratch: Vec::new(),
        total_ll: 0.0,
        rng: rng.clone(),
    };
    chain.step_tau2();
    *rng = chain.rng;
    chain.params.tau2
}

fn empirical_logit(y: u64, n: u64) -> f64 {
    let p = (y as f64 + 0.5) / (n as f64 + 1.0);
    (p / (1.0 - p)).ln()
}

/// Over-dispersed start near the pooled empirical logits of all sites.
fn initial_state(model: &GlmmModel, rng: &mut seed::Rng) -> GlmmParams {
    let data = model.data();
    let mut z = || rng.sample::<f64, _>(StandardNormal);
    let rows = data.rows();
    let (y, n) = rows.iter().fold((0, 0), |(y, n), r| (y + r.positive, n + r.tested));
    let mu0 = empirical_logit(y, n);
    let mut p = GlmmParams::zeros(data.n_regions(), data.n_sites());
    p.mu = mu0 + 0.2 * z();
    for reg in 1..data.n_regions() {
        let (ry, rn) = rows
            .iter()
            .filter(|r| r.region == reg)
            .fold((0, 0), |(y, n), r| (y + r.positive, n + r.tested));
        p.alpha[reg] = empirical_logit(ry, rn) - mu0 + 0.2 * z();
    }
    for b in p.beta.iter_mut() {
        *b = 0.2 * z();
    }
    for s in 0..data.n_sites() {
        let g = 0.1 * z();
        if model.includes_site(s) {
            p.gamma[s] = g;
        }
    }
    p.tau2 = 0.05 * (0.5 * z()).exp();
    p
}

fn run_chain(model: &GlmmModel, config: &McmcConfig, chain_seed: u64) -> Result<ChainOutput> {
    let mut rng = seed::rng(chain_seed);
    let init = initial_state(model, &mut rng);
    let mut chain = Chain::new(model, init, rng)?;
    let n_alpha = model.data().n_regions() - 1;
    let n_sites = model.data().n_sites();

    let mut mu = ScalarAdapt::new(0.1);
    let mut alpha = VectorAdapt::new(n_alpha);
    let mut beta = VectorAdapt::new(3);
    let mut joint = VectorAdapt::new(1 + n_alpha + 3);
    let mut sites: Vec<ScalarAdapt> = (0..n_sites).map(|_| ScalarAdapt::new(0.1)).collect();
    let n_regions = n_alpha + 1;
    let mut shifts: Vec<ScalarAdapt> = (0..n_regions).map(|_| ScalarAdapt::new(0.05)).collect();
    let mut draws = Vec::with_capacity(config.draws_per_chain());

    for it in 0..config.iterations {
        let adapting = (it < config.burn_in).then_some(it);

        let step = DVector::from_element(1, mu.log_scale.exp() * chain.rng.sample::<f64, _>(StandardNormal));
        let (a, ok) = chain.step_fixed(Fixed::Mu, &step);
        mu.record(a, ok, adapting, SCALAR_TARGET);

        let mut blocks: Vec<(Fixed, &mut VectorAdapt)> = Vec::with_capacity(3);
        if n_alpha > 0 {
            blocks.push((Fixed::Alpha, &mut alpha));
        }
        blocks.push((Fixed::Beta, &mut beta));
        if config.joint_fixed_block {
            blocks.push((Fixed::Joint, &mut joint));
        }
        for (which, block) in blocks {
            let step = block.propose(&mut chain.rng);
            let (a, ok) = chain.step_fixed(which, &step);
            block.scalar.record(a, ok, adapting, VECTOR_TARGET);
            if let Some(t) = adapting {
                if config.adapt_covariance {
                    block.observe(&chain.fixed_vector(which));
                    if t + 1 >= COVARIANCE_START && (t + 1) % COVARIANCE_REFRESH == 0 {
                        block.refresh(t + 1 == COVARIANCE_START);
                    }
                }
            }
        }

        for (s, site) in sites.iter_mut().enumerate() {
            if model.includes_site(s) {
                let (a, ok) = chain.step_site(s, site.log_scale.exp());
                site.record(a, ok, adapting, SCALAR_TARGET);
            } else {
                // Keep the random stream aligned with runs that include this site.
                let _: (f64, f64) = (chain.rng.sample(StandardNormal), chain.rng.gen());
            }
        }
        if config.translation_moves {
            for (r, shift) in shifts.iter_mut().enumerate() {
                let delta = shift.log_scale.exp() * chain.rng.sample::<f64, _>(StandardNormal);
                let (a, ok) = chain.step_translate(r, delta);
                shift.record(a, ok, adapting, SCALAR_TARGET);
            }
        }
        chain.step_tau2();

        if it >= config.burn_in && (it - config.burn_in + 1) % config.thin == 0 {
            draws.push(chain.params.clone());
        }
    }

    let mut acceptance = vec![BlockAcceptance {
        block: "mu".into(),
        rate: mu.rate(),
    }];
    if n_alpha > 0 {
        acceptance.push(BlockAcceptance {
            block: "alpha".into(),
            rate: alpha.scalar.rate(),
        });
    }
    acceptance.push(BlockAcceptance {
        block: "beta".into(),
        rate: beta.scalar.rate(),
    });
    if config.joint_fixed_block {
        acceptance.push(BlockAcceptance {
            block: "fixed".into(),
            rate: joint.scalar.rate(),
        });
    }
    let site_rates: Vec<f64> = (0..n_sites)
        .filter(|&s| model.includes_site(s))
        .map(|s| sites[s].rate())
        .collect();
    if !site_rates.is_empty() {
        acceptance.push(BlockAcceptance {
            block: "gamma".into(),
            rate: stats::mean(&site_rates),
        });
    }
    if config.translation_moves {
        acceptance.push(BlockAcceptance {
            block: "translation".into(),
            rate: stats::mean(&shifts.iter().map(ScalarAdapt::rate).collect::<Vec<_>>()),
        });
    }
    Ok(ChainOutput { draws, acceptance })
}

fn rhat_table(model: &GlmmModel, chains: &[ChainOutput]) -> Vec<(String, f64)> {
    let series = |f: &dyn Fn(&GlmmParams) -> f64| -> Vec<Vec<f64>> {
        chains.iter().map(|c| c.draws.iter().map(f).collect()).collect()
    };
    let data = model.data();
    let mut out = vec![("mu".to_string(), stats::split_rhat(&series(&|p| p.mu)))];
    for r in 1..data.n_regions() {
        out.push((format!("alpha[{}]", data.regions()[r]), stats::split_rhat(&series(&|p| p.alpha[r]))));
    }
    for j in 0..3 {
        out.push((format!("beta[{}]", j + 1), stats::split_rhat(&series(&|p| p.beta[j]))));
    }
    out.push(("tau2".into(), stats::split_rhat(&series(&|p| p.tau2))));
    let trend_len = data.n_years();
    for r in 0..data.n_regions() {
        for t in 0..trend_len {
            let name = format!("pi[{},{}]", data.regions()[r], data.years()[t]);
            let f = |p: &GlmmParams| {
                let x = model.basis().row(t);
                logistic(p.mu + p.alpha[r] + x[0] * p.beta[0] + x[1] * p.beta[1] + x[2] * p.beta[2])
            };
            out.push((name, stats::split_rhat(&series(&f))));
        }
    }
    out
}

/// Runs `config.chains` independent chains; chain `c` uses a seed derived from `seed` and `c`.
pub fn mcmc_sample(model: &GlmmModel, config: &McmcConfig, seed: u64) -> Result<McmcOutput> {
    config.validate()?;
    let chains: Vec<ChainOutput> = (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(model, config, seed::derive(seed, CHAIN_STREAM, c as u64)))
        .collect::<Result<_>>()?;
    let rhat = if config.chains > 1 && config.draws_per_chain() >= 4 {
        rhat_table(model, &chains)
    } else {
        Vec::new()
    };
    let out = McmcOutput { chains, rhat };
    let worst = out.max_rhat();
    if worst > RHAT_WARN {
        log::warn!("split R-hat reaches {worst:.3}; chains may not have converged");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glmm::data::{ClinicData, ClinicObservation};
    use crate::glmm::model::Priors;
    use statrs::distribution::{ContinuousCDF, Gamma as GammaDist};

    fn obs(region: &str, site: &str, year: i32, tested: u64, positive: u64) -> ClinicObservation {
        ClinicObservation {
            region: region.into(),
            site: site.into(),
            year,
            tested,
            positive,
        }
    }

    fn empty_data() -> ClinicData {
        ClinicData::new(&[
            obs("A", "a1", 2002, 0, 0),
            obs("A", "a2", 2004, 0, 0),
            obs("B", "b1", 2006, 0, 0),
            obs("B", "b2", 2008, 0, 0),
        ])
        .unwrap()
    }

    #[test]
    fn schedule_for_draws() {
        let c = McmcConfig::default();
        assert_eq!(c.total_draws(), 4000);
        assert_eq!(c.for_draws(4000), c);
        assert_eq!(c.for_draws(401).total_draws(), 404);
        assert!(McmcConfig { burn_in: 20_000, ..c }.validate().is_err());
    }

    #[test]
    fn tau2_update_matches_its_conditional() {
        let model = GlmmModel::new(empty_data(), Priors::default(), None).unwrap();
        let gamma = [0.3, -0.1, 0.2, 0.05];
        let mut rng = seed::rng(3);
        let draws: Vec<f64> = (0..4000).map(|_| tau2_conditional_draw(&model, &gamma, &mut rng)).collect();
        // τ² ~ InvGamma(a, b) ⇔ 1/τ² ~ Gamma(a, rate b).
        let a = 0.1 + 2.0;
        let b = 0.1 + 0.5 * gamma.iter().map(|g| g * g).sum::<f64>();
        let precision = GammaDist::new(a, b).unwrap();
        let d = stats::ks_statistic(&draws, |x| 1.0 - precision.cdf(1.0 / x));
        assert!(stats::ks_p_value(d, draws.len()) > 0.01, "D = {d}");
    }

    #[test]
    fn prior_only_run_recovers_priors() {
        let model = GlmmModel::new(empty_data(), Priors::default(), None).unwrap();
        let config = McmcConfig {
            chains: 2,
            iterations: 42_000,
            burn_in: 2_000,
            thin: 40,
            ..McmcConfig::default()
        };
        let out = mcmc_sample(&model, &config, 17).unwrap();
        let normal = statrs::distribution::Normal::new(0.0, 10.0).unwrap();
        let mu: Vec<f64> = out.draws().map(|p| p.mu).collect();
        let se = 10.0 / (mu.len() as f64).sqrt();
        assert!(stats::mean(&mu).abs() < 3.0 * stats::batch_means_mcse(&mu, 20).max(se));
        for f in [
            &(|p: &GlmmParams| p.mu) as &dyn Fn(&GlmmParams) -> f64,
            &|p: &GlmmParams| p.alpha[1],
            &|p: &GlmmParams| p.beta[0],
            &|p: &GlmmParams| p.beta[2],
        ] {
            let xs: Vec<f64> = out.draws().map(f).collect();
            let d = stats::ks_statistic(&xs, |x| normal.cdf(x));
            assert!(stats::ks_p_value(d, xs.len()) > 0.01, "D = {d}");
        }
        assert!(out.draws().all(|p| p.alpha[0] == 0.0));
    }

    #[test]
    fn seeded_runs_repeat_exactly() {
        let data = ClinicData::new(&[
            obs("A", "a1", 2002, 50, 20),
            obs("A", "a1", 2006, 50, 22),
            obs("B", "b1", 2002, 60, 15),
            obs("B", "b1", 2006, 40, 12),
        ])
        .unwrap();
        let model = GlmmModel::new(data, Priors::default(), None).unwrap();
        let config = McmcConfig {
            chains: 2,
            iterations: 600,
            burn_in: 300,
            thin: 3,
            ..McmcConfig::default()
        };
        let a = mcmc_sample(&model, &config, 5).unwrap();
        let b = mcmc_sample(&model, &config, 5).unwrap();
        assert_eq!(a.first_draws(200), b.first_draws(200));
        assert_eq!(a.n_draws(), 200);
        let c = mcmc_sample(&model, &config, 6).unwrap();
        assert_ne!(a.first_draws(200), c.first_draws(200));
    }
}
