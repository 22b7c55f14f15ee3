use rand::Rng as _;
use rand_distr::{Binomial, Distribution, StandardNormal};

use super::data::{ClinicData, ClinicObservation};
use super::model::{logistic, GlmmParams};
use super::spline::spline_design;
use crate::error::{Result, VoiError};
use crate::seed;

/// Recipe for simulated clinic data from known parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    /// Region names with their number of sites.
    pub regions: Vec<(String, usize)>,
    pub years: Vec<i32>,
    pub mu: f64,
    /// One entry per region; the first must be 0.
    pub alpha: Vec<f64>,
    pub beta: [f64; 3],
    /// Site-effect standard deviation on the logit scale.
    pub tau: f64,
    /// Inclusive range of tested counts per site-year.
    pub tested: (u64, u64),
    /// Site index and additive shift of its prevalence.
    pub outlier: Option<(usize, f64)>,
    /// Site-years with nobody tested, as (site, year index).
    pub missing: Vec<(usize, usize)>,
}

impl Default for SyntheticSpec {
    /// Four regions and seventeen sites surveyed every other year from 2002
    /// to 2010, with the second Manzini site 0.15 above its modelled prevalence
    /// and one Lubombo site missing 2006.
    fn default() -> Self {
        Self {
            regions: vec![
                ("Hhohho".into(), 4),
                ("Lubombo".into(), 5),
                ("Manzini".into(), 4),
                ("Shiselweni".into(), 4),
            ],
            years: vec![2002, 2004, 2006, 2008, 2010],
            mu: (0.35f64 / 0.65).ln(),
            alpha: vec![0.0, 0.15, 0.1, -0.1],
            beta: [0.25, 0.45, 0.35],
            tau: 0.15,
            tested: (250, 450),
            outlier: Some((10, 0.15)),
            missing: vec![(6, 2)],
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub observations: Vec<ClinicObservation>,
    pub truth: GlmmParams,
}

impl SyntheticData {
    pub fn clinic_data(&self) -> Result<ClinicData> {
        ClinicData::new(&self.observations)
    }
}

impl SyntheticSpec {
    pub fn n_sites(&self) -> usize {
        self.regions.iter().map(|r| r.1).sum()
    }

    pub fn site_names(&self) -> Vec<String> {
        self.regions
            .iter()
            .flat_map(|(name, k)| (1..=*k).map(move |i| format!("{name} {i}")))
            .collect()
    }

    pub fn generate(&self, seed: u64) -> Result<SyntheticData> {
        if self.alpha.len() != self.regions.len() || self.alpha.first() != Some(&0.0) {
            return Err(VoiError::InvalidArgument(
                "alpha needs one entry per region with the first equal to 0".into(),
            ));
        }
        if self.tested.0 > self.tested.1 || !(self.tau >= 0.0) {
            return Err(VoiError::InvalidArgument("invalid tested range or tau".into()));
        }
        let basis = spline_design(&self.years)?;
        let trend = basis.trend(&self.beta);
        let mut rng = seed::rng(seed);
        let names = self.site_names();
        let site_region: Vec<usize> = self
            .regions
            .iter()
            .enumerate()
            .flat_map(|(r, (_, k))| std::iter::repeat(r).take(*k))
            .collect();
        let gamma: Vec<f64> = (0..names.len())
            .map(|_| self.tau * rng.sample::<f64, _>(StandardNormal))
            .collect();

        let mut observations = Vec::new();
        for (s, name) in names.iter().enumerate() {
            let r = site_region[s];
            for (t, &year) in self.years.iter().enumerate() {
                let mut tested = rng.gen_range(self.tested.0..=self.tested.1);
                if self.missing.contains(&(s, t)) {
                    tested = 0;
                }
                let mut pi = logistic(self.mu + self.alpha[r] + trend[t] + gamma[s]);
                if let Some((site, shift)) = self.outlier {
                    if site == s {
                        pi = (pi + shift).clamp(0.0, 1.0);
                    }
                }
                let positive = Binomial::new(tested, pi)
                    .map_err(|e| VoiError::InvalidArgument(format!("binomial draw: {e}")))?
                    .sample(&mut rng);
                observations.push(ClinicObservation {
                    region: self.regions[r].0.clone(),
                    site: name.clone(),
                    year,
                    tested,
                    positive,
                });
            }
        }
        let truth = GlmmParams {
            mu: self.mu,
            alpha: self.alpha.clone(),
            beta: self.beta,
            gamma,
            tau2: self.tau * self.tau,
        };
        Ok(SyntheticData { observations, truth })
    }
}
