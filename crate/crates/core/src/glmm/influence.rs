use super::data::ClinicData;
use super::mcmc::{BlockAcceptance, McmcConfig};
use super::model::Priors;
use super::sampler::GlmmSampler;
use crate::error::{Result, VoiError};
use crate::mc::{
    prospective_evsi_knn, prospective_evsi_naive, retrospective_evsi_mc, MetaModelConfig, PosteriorSampler,
    SeedPlan,
};
use crate::voi::{InfluenceRecord, LossSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProspectiveMethod {
    #[default]
    Knn,
    Naive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmmInfluenceConfig {
    pub priors: Priors,
    pub mcmc: McmcConfig,
    /// Posterior draws per MCMC run; also the number of outer draws of the prospective estimators.
    pub draws: usize,
    pub seeds: SeedPlan,
    /// `n_outer` is overridden by `draws`.
    pub meta: MetaModelConfig,
    pub method: ProspectiveMethod,
}

impl Default for GlmmInfluenceConfig {
    fn default() -> Self {
        let mcmc = McmcConfig::default();
        Self {
            priors: Priors::default(),
            mcmc,
            draws: mcmc.total_draws(),
            seeds: SeedPlan::default(),
            meta: MetaModelConfig::default(),
            method: ProspectiveMethod::Knn,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiteInfluence {
    pub record: InfluenceRecord,
    pub region: String,
}

/// Convergence summary of one full-data MCMC run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunDiagnostics {
    pub seed_group: usize,
    pub acceptance: Vec<BlockAcceptance>,
    pub rhat: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmmInfluence {
    pub sites: Vec<SiteInfluence>,
    pub diagnostics: Vec<RunDiagnostics>,
}

/// One influence record per site under unit-weight quadratic loss on the regional prevalences.
pub fn site_influence(data: &ClinicData, config: &GlmmInfluenceConfig) -> Result<GlmmInfluence> {
    if data.n_sites() < 2 {
        return Err(VoiError::Data(format!(
            "leave-one-site-out analysis needs at least 2 sites, found {}",
            data.n_sites()
        )));
    }
    let sampler = GlmmSampler::new(data.clone(), config.priors, config.mcmc)?;
    let loss = LossSpec::identity(sampler.target_dim());
    let meta = MetaModelConfig {
        n_outer: config.draws,
        ..config.meta
    };
    let mut sites = Vec::with_capacity(data.n_sites());
    for unit in 0..data.n_sites() {
        let retro = retrospective_evsi_mc(&sampler, unit, &loss, &config.seeds, config.draws)?;
        let pro = match config.method {
            ProspectiveMethod::Knn => prospective_evsi_knn(&sampler, unit, &loss, &meta, &config.seeds)?,
            ProspectiveMethod::Naive => prospective_evsi_naive(&sampler, unit, &loss, &meta, &config.seeds)?,
        };
        sampler.evict(unit);
        let record = InfluenceRecord::new(sampler.unit_label(unit), retro.value, pro.value, None)?
            .with_mcse(retro.mcse, pro.mcse);
        sites.push(SiteInfluence {
            record,
            region: data.regions()[data.site_region(unit)].clone(),
        });
    }
    let diagnostics = (0..config.seeds.groups)
        .map(|g| {
            let run = sampler.run(None, config.seeds.full_seed(g), config.draws)?;
            Ok(RunDiagnostics {
                seed_group: g,
                acceptance: run.acceptance(),
                rhat: run.rhat.clone(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(GlmmInfluence { sites, diagnostics })
}
