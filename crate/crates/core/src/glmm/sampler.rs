use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::DVector;
use rand::Rng as _;
use rand_distr::{Binomial, Distribution, StandardNormal};

use super::data::ClinicData;
use super::mcmc::{mcmc_sample, McmcConfig, McmcOutput};
use super::model::{logistic, GlmmModel, Priors};
use crate::error::{Result, VoiError};
use crate::mc::{Completion, PosteriorSampler};
use crate::seed;
use crate::voi::PosteriorDraws;

const PREDICTIVE_STREAM: u64 = 0x5052;

type RunKey = (Option<usize>, u64, usize);

/// Site-level sampling interface of the clinic model.
///
/// Unit `s` is site `s`. Its data block is the positives of each of its
/// site-years (tested counts held fixed) and the target is the regional
/// prevalence `π_rt` at a zero site effect. MCMC runs are cached by
/// `(excluded site, seed, draws)` so the retrospective and prospective
/// estimators share them.
#[derive(Debug)]
pub struct GlmmSampler {
    full: GlmmModel,
    without: Vec<GlmmModel>,
    mcmc: McmcConfig,
    cache: Mutex<HashMap<RunKey, Arc<McmcOutput>>>,
}

impl GlmmSampler {
    pub fn new(data: ClinicData, priors: Priors, mcmc: McmcConfig) -> Result<Self> {
        mcmc.validate()?;
        let full = GlmmModel::new(data.clone(), priors, None)?;
        let without = (0..data.n_sites())
            .map(|s| GlmmModel::new(data.clone(), priors, Some(s)))
            .collect::<Result<_>>()?;
        Ok(Self {
            full,
            without,
            mcmc,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn model(&self) -> &GlmmModel {
        &self.full
    }

    pub fn data(&self) -> &ClinicData {
        self.full.data()
    }

    fn check(&self, unit: usize) -> Result<()> {
        if unit >= self.without.len() {
            return Err(VoiError::UnknownUnit(unit.to_string()));
        }
        Ok(())
    }

    fn model_for(&self, exclude: Option<usize>) -> Result<&GlmmModel> {
        match exclude {
            None => Ok(&self.full),
            Some(s) => {
                self.check(s)?;
                Ok(&self.without[s])
            }
        }
    }

    /// The MCMC run for `exclude` and `seed`, long enough to give `n` draws.
    pub fn run(&self, exclude: Option<usize>, seed: u64, n: usize) -> Result<Arc<McmcOutput>> {
        let key = (exclude, seed, n);
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(hit));
        }
        let model = self.model_for(exclude)?;
        let out = Arc::new(mcmc_sample(model, &self.mcmc.for_draws(n), seed)?);
        self.cache
            .lock()
            .expect("cache lock")
            .entry(key)
            .or_insert_with(|| Arc::clone(&out));
        Ok(out)
    }

    /// Cached full-data runs, in no particular order.
    pub fn full_runs(&self) -> Vec<Arc<McmcOutput>> {
        let cache = self.cache.lock().expect("cache lock");
        let mut keys: Vec<&RunKey> = cache.keys().filter(|k| k.0.is_none()).collect();
        keys.sort();
        keys.into_iter().map(|k| Arc::clone(&cache[k])).collect()
    }

    /// Drops cached runs that exclude `unit`.
    pub fn evict(&self, unit: usize) {
        self.cache
            .lock()
            .expect("cache lock")
            .retain(|k, _| k.0 != Some(unit));
    }

    fn check_draws(n: usize) -> Result<()> {
        if n == 0 {
            return Err(VoiError::TooFewDraws {
                what: "posterior sampling",
                required: 1,
                found: 0,
            });
        }
        Ok(())
    }
}

impl PosteriorSampler for GlmmSampler {
    fn target_dim(&self) -> usize {
        self.data().n_regions() * self.data().n_years()
    }

    fn n_units(&self) -> usize {
        self.data().n_sites()
    }

    fn unit_label(&self, unit: usize) -> String {
        self.data().sites()[unit].clone()
    }

    fn posterior_draws(&self, exclude: Option<usize>, seed: u64, n: usize) -> Result<PosteriorDraws> {
        Self::check_draws(n)?;
        let model = self.model_for(exclude)?;
        self.run(exclude, seed, n)?.target_draws(model, n)
    }

    /// Joint draws given the other sites: a fresh site effect `γ ~ N(0, τ²)`
    /// for each retained draw, then binomial positives at the observed tested counts.
    fn predictive_draws(&self, unit: usize, seed: u64, n: usize) -> Result<Vec<Completion>> {
        Self::check_draws(n)?;
        self.check(unit)?;
        let model = &self.without[unit];
        let run = self.run(Some(unit), seed, n)?;
        let data = self.data();
        let region = data.site_region(unit);
        let rows: Vec<_> = data.site_rows(unit).copied().collect();
        let mut rng = seed::rng(seed::derive(seed, PREDICTIVE_STREAM, unit as u64));
        run.first_draws(n)
            .into_iter()
            .map(|p| {
                let gamma = p.tau2.sqrt() * rng.sample::<f64, _>(StandardNormal);
                let trend = model.basis().trend(&p.beta);
                let block = rows
                    .iter()
                    .map(|r| {
                        let pi = logistic(p.mu + p.alpha[region] + trend[r.year] + gamma);
                        let dist = Binomial::new(r.tested, pi)
                            .map_err(|e| VoiError::InvalidArgument(format!("binomial draw: {e}")))?;
                        Ok(dist.sample(&mut rng) as f64)
                    })
                    .collect::<Result<Vec<f64>>>()?;
                Ok(Completion {
                    block: DVector::from_vec(block),
                    target: DVector::from_vec(p.prevalence(model.basis())),
                })
            })
            .collect()
    }

    fn conditional_draws(&self, unit: usize, block: &DVector<f64>, seed: u64, n: usize) -> Result<PosteriorDraws> {
        Self::check_draws(n)?;
        self.check(unit)?;
        let positives = block
            .iter()
            .map(|&y| {
                if y >= 0.0 && y.fract() == 0.0 {
                    Ok(y as u64)
                } else {
                    Err(VoiError::InvalidArgument(format!("positives must be counts, got {y}")))
                }
            })
            .collect::<Result<Vec<u64>>>()?;
        let data = self.data().with_site_positives(unit, &positives)?;
        let model = GlmmModel::new(data, *self.full.priors(), None)?;
        mcmc_sample(&model, &self.mcmc.for_draws(n), seed)?.target_draws(&model, n)
    }
}
