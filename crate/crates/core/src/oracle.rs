//! Analytic normal–normal model with known observation variance.
//!
//! `θ ~ N(m₀, v₀)`, `Y₁` is `n₁` observations and `Y₂` is `n₂` observations,
//! each `N(θ, σ²)`. Everything is summarized by the block means, the
//! posterior mean is precision weighted, and the completed-data posterior mean
//! given `Y₁` is exactly Gaussian. That makes every influence quantity
//! available in closed form, which is what the Monte Carlo estimators are
//! checked against.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Result, VoiError};
use crate::mc::{Completion, PosteriorSampler};
use crate::seed;
use crate::voi::{self, LossSpec, PosteriorDraws};

/// A variance that may be taken to its infinite limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variance {
    Finite(f64),
    Infinite,
}

impl Variance {
    fn precision(self) -> f64 {
        match self {
            Variance::Finite(v) => 1.0 / v,
            Variance::Infinite => 0.0,
        }
    }

    fn validate(self, what: &str) -> Result<()> {
        match self {
            Variance::Finite(v) if !(v > 0.0) || !v.is_finite() => Err(VoiError::InvalidArgument(
                format!("{what} must be positive and finite, got {v}"),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjugateModel {
    pub prior_mean: f64,
    pub prior_var: Variance,
    pub obs_var: Variance,
    pub n1: usize,
    pub n2: usize,
}

/// Exact influence triple of one simulated data set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Replication {
    pub theta: f64,
    pub ybar1: f64,
    pub ybar2: f64,
    pub retro: f64,
    pub pro: f64,
    pub evoir: f64,
}

impl ConjugateModel {
    pub fn new(prior_mean: f64, prior_var: Variance, obs_var: Variance, n1: usize, n2: usize) -> Result<Self> {
        if !prior_mean.is_finite() {
            return Err(VoiError::NonFinite("prior mean"));
        }
        prior_var.validate("prior variance")?;
        obs_var.validate("observation variance")?;
        if n2 == 0 {
            return Err(VoiError::InvalidArgument(
                "the assessed block must hold at least one observation".into(),
            ));
        }
        Ok(Self {
            prior_mean,
            prior_var,
            obs_var,
            n1,
            n2,
        })
    }

    /// Convenience constructor for the all-finite case.
    pub fn standard(prior_mean: f64, prior_var: f64, obs_var: f64, n1: usize, n2: usize) -> Result<Self> {
        Self::new(
            prior_mean,
            Variance::Finite(prior_var),
            Variance::Finite(obs_var),
            n1,
            n2,
        )
    }

    fn block_precision(&self, n: usize) -> f64 {
        n as f64 * self.obs_var.precision()
    }

    fn precision_given_y1(&self) -> f64 {
        self.prior_var.precision() + self.block_precision(self.n1)
    }

    fn precision_given_both(&self) -> f64 {
        self.precision_given_y1() + self.block_precision(self.n2)
    }

    fn improper() -> VoiError {
        VoiError::InvalidArgument("posterior is improper (no prior or data information)".into())
    }

    /// Posterior mean of `θ` given `Y₁` and, when present, `Y₂`.
    pub fn posterior_mean(&self, ybar1: f64, ybar2: Option<f64>) -> Result<f64> {
        if !ybar1.is_finite() || ybar2.is_some_and(|y| !y.is_finite()) {
            return Err(VoiError::NonFinite("block mean"));
        }
        let p0 = self.prior_var.precision();
        let p1 = self.block_precision(self.n1);
        let (prec, weighted) = match ybar2 {
            None => (p0 + p1, p0 * self.prior_mean + p1 * ybar1),
            Some(y2) => {
                let p2 = self.block_precision(self.n2);
                (p0 + p1 + p2, p0 * self.prior_mean + p1 * ybar1 + p2 * y2)
            }
        };
        if prec <= 0.0 {
            return Err(Self::improper());
        }
        Ok(weighted / prec)
    }

    pub fn posterior_var(&self, with_y2: bool) -> Result<f64> {
        let prec = if with_y2 {
            self.precision_given_both()
        } else {
            self.precision_given_y1()
        };
        if prec <= 0.0 {
            return Err(Self::improper());
        }
        Ok(1.0 / prec)
    }

    /// Weight carried by `ȳ₂` in the completed-data posterior mean.
    pub fn completion_weight(&self) -> Result<f64> {
        let p1 = self.precision_given_y1();
        if p1 <= 0.0 {
            return Err(Self::improper());
        }
        let p2 = self.block_precision(self.n2);
        Ok(p2 / (p1 + p2))
    }

    /// `var(a_{Y₁,Y₂} | Y₁) = w² (σ²/n₂ + v₁)` under scalar unit loss.
    pub fn prospective_evsi(&self) -> Result<f64> {
        let w = self.completion_weight()?;
        if w == 0.0 {
            return Ok(0.0);
        }
        let v1 = self.posterior_var(false)?;
        let noise = 1.0 / self.block_precision(self.n2);
        Ok(w * w * (noise + v1))
    }

    /// `(a_{Y₁} − a_{Y₁,Y₂})²` under scalar unit loss.
    pub fn retrospective_evsi(&self, ybar1: f64, ybar2: f64) -> Result<f64> {
        let a1 = self.posterior_mean(ybar1, None)?;
        let a12 = self.posterior_mean(ybar1, Some(ybar2))?;
        Ok((a1 - a12).powi(2))
    }

    fn generative_sds(&self) -> Result<(f64, f64)> {
        match (self.prior_var, self.obs_var) {
            (Variance::Finite(v0), Variance::Finite(s2)) => Ok((v0.sqrt(), s2.sqrt())),
            _ => Err(VoiError::InvalidArgument(
                "simulation needs finite prior and observation variances".into(),
            )),
        }
    }

    fn draw_blocks(&self, rng: &mut seed::Rng) -> Result<(f64, f64, f64)> {
        let (prior_sd, obs_sd) = self.generative_sds()?;
        let theta = self.prior_mean + prior_sd * rng.sample::<f64, _>(StandardNormal);
        let ybar1 = if self.n1 > 0 {
            theta + obs_sd / (self.n1 as f64).sqrt() * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        let ybar2 = theta + obs_sd / (self.n2 as f64).sqrt() * rng.sample::<f64, _>(StandardNormal);
        Ok((theta, ybar1, ybar2))
    }

    /// Draws `θ`, `Y₁`, `Y₂` from the model and returns the exact influence triple.
    pub fn simulate_replication(&self, seed: u64) -> Result<Replication> {
        let mut rng = seed::rng(seed);
        let (theta, ybar1, ybar2) = self.draw_blocks(&mut rng)?;
        let retro = self.retrospective_evsi(ybar1, ybar2)?;
        let pro = self.prospective_evsi()?;
        Ok(Replication {
            theta,
            ybar1,
            ybar2,
            retro,
            pro,
            evoir: voi::evoir(retro, pro)?,
        })
    }

    /// Replication `i` uses seed `base + i`.
    pub fn simulate_many(&self, base_seed: u64, replications: usize) -> Result<Vec<Replication>> {
        (0..replications as u64)
            .into_par_iter()
            .map(|i| self.simulate_replication(base_seed.wrapping_add(i)))
            .collect()
    }
}

pub fn oracle_posterior_mean(model: &ConjugateModel, ybar1: f64, ybar2: Option<f64>) -> Result<f64> {
    model.posterior_mean(ybar1, ybar2)
}

pub fn oracle_prospective_evsi(model: &ConjugateModel) -> Result<f64> {
    model.prospective_evsi()
}

pub fn oracle_simulate_replication(model: &ConjugateModel, seed: u64) -> Result<(f64, f64, f64)> {
    let r = model.simulate_replication(seed)?;
    Ok((r.retro, r.pro, r.evoir))
}

/// Independent scalar oracles stacked into a `p`-dimensional problem with
/// diagonal loss `Q = diag(1 / pro_j)`, which makes the completed-data action
/// Gaussian with covariance `Q⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalOracle {
    components: Vec<ConjugateModel>,
    weights: Vec<f64>,
}

impl DiagonalOracle {
    pub fn new(components: Vec<ConjugateModel>) -> Result<Self> {
        if components.is_empty() {
            return Err(VoiError::InvalidArgument("diagonal oracle needs a component".into()));
        }
        let weights = components
            .iter()
            .map(|c| c.prospective_evsi().map(|p| 1.0 / p))
            .collect::<Result<Vec<_>>>()?;
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(VoiError::DegenerateProspective);
        }
        Ok(Self { components, weights })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn loss(&self) -> Result<LossSpec> {
        LossSpec::diagonal(&self.weights)
    }

    pub fn simulate_replication(&self, seed: u64) -> Result<Replication> {
        let mut rng = seed::rng(seed);
        let (mut retro, mut pro) = (0.0, 0.0);
        for (c, w) in self.components.iter().zip(&self.weights) {
            let (_, y1, y2) = c.draw_blocks(&mut rng)?;
            retro += w * c.retrospective_evsi(y1, y2)?;
            pro += w * c.prospective_evsi()?;
        }
        Ok(Replication {
            theta: f64::NAN,
            ybar1: f64::NAN,
            ybar2: f64::NAN,
            retro,
            pro,
            evoir: voi::evoir(retro, pro)?,
        })
    }

    pub fn simulate_many(&self, base_seed: u64, replications: usize) -> Result<Vec<Replication>> {
        (0..replications as u64)
            .into_par_iter()
            .map(|i| self.simulate_replication(base_seed.wrapping_add(i)))
            .collect()
    }
}

/// The conjugate model with observed block means, exposed through the
/// sampler contract. Its single unit is the `Y₂` block.
#[derive(Debug, Clone, Copy)]
pub struct ConjugateSampler {
    pub model: ConjugateModel,
    pub ybar1: f64,
    pub ybar2: f64,
}

impl ConjugateSampler {
    pub fn new(model: ConjugateModel, ybar1: f64, ybar2: f64) -> Self {
        Self { model, ybar1, ybar2 }
    }

    fn unit_check(&self, unit: usize) -> Result<()> {
        if unit != 0 {
            return Err(VoiError::UnknownUnit(unit.to_string()));
        }
        Ok(())
    }

    fn normal_draws(mean: f64, var: f64, seed: u64, n: usize) -> Result<PosteriorDraws> {
        let mut rng = seed::rng(seed);
        let sd = var.sqrt();
        let col: Vec<f64> = (0..n)
            .map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        PosteriorDraws::new(DMatrix::from_column_slice(n, 1, &col))
    }
}

impl PosteriorSampler for ConjugateSampler {
    fn target_dim(&self) -> usize {
        1
    }

    fn n_units(&self) -> usize {
        1
    }

    fn unit_label(&self, _unit: usize) -> String {
        "Y2".into()
    }

    fn posterior_draws(&self, exclude: Option<usize>, seed: u64, n: usize) -> Result<PosteriorDraws> {
        let with_y2 = match exclude {
            Some(u) => {
                self.unit_check(u)?;
                false
            }
            None => true,
        };
        let mean = self
            .model
            .posterior_mean(self.ybar1, with_y2.then_some(self.ybar2))?;
        Self::normal_draws(mean, self.model.posterior_var(with_y2)?, seed, n)
    }

    fn predictive_draws(&self, unit: usize, seed: u64, n: usize) -> Result<Vec<Completion>> {
        self.unit_check(unit)?;
        let a1 = self.model.posterior_mean(self.ybar1, None)?;
        let sd1 = self.model.posterior_var(false)?.sqrt();
        let noise = match self.model.obs_var {
            Variance::Finite(s2) => (s2 / self.model.n2 as f64).sqrt(),
            Variance::Infinite => {
                return Err(VoiError::InvalidArgument(
                    "cannot simulate observations with infinite variance".into(),
                ))
            }
        };
        let mut rng = seed::rng(seed);
        Ok((0..n)
            .map(|_| {
                let theta = a1 + sd1 * rng.sample::<f64, _>(StandardNormal);
                let ybar2 = theta + noise * rng.sample::<f64, _>(StandardNormal);
                Completion {
                    block: DVector::from_element(1, ybar2),
                    target: DVector::from_element(1, theta),
                }
            })
            .collect())
    }

    fn conditional_draws(&self, unit: usize, block: &DVector<f64>, seed: u64, n: usize) -> Result<PosteriorDraws> {
        self.unit_check(unit)?;
        if block.len() != 1 {
            return Err(VoiError::DimensionMismatch {
                expected: 1,
                found: block.len(),
            });
        }
        let mean = self.model.posterior_mean(self.ybar1, Some(block[0]))?;
        Self::normal_draws(mean, self.model.posterior_var(true)?, seed, n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    fn symmetric() -> ConjugateModel {
        ConjugateModel::standard(0.0, 1.0, 1.0, 1, 1).unwrap()
    }

    // Posterior mean by trapezoidal integration of prior × likelihood on a θ grid.
    fn grid_posterior_mean(m: &ConjugateModel, ybar1: f64, ybar2: Option<f64>) -> f64 {
        let (v0, s2) = match (m.prior_var, m.obs_var) {
            (Variance::Finite(a), Variance::Finite(b)) => (a, b),
            _ => unreachable!(),
        };
        let center = m.prior_mean;
        let half_width = 12.0 * v0.sqrt().max(s2.sqrt());
        let steps = 200_000;
        let h = 2.0 * half_width / steps as f64;
        let log_density = |t: f64| {
            let mut l = -(t - m.prior_mean).powi(2) / (2.0 * v0);
            l -= m.n1 as f64 * (ybar1 - t).powi(2) / (2.0 * s2);
            if let Some(y2) = ybar2 {
                l -= m.n2 as f64 * (y2 - t).powi(2) / (2.0 * s2);
            }
            l
        };
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..=steps {
            let t = center - half_width + i as f64 * h;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            let d = log_density(t).exp() * w;
            num += t * d;
            den += d;
        }
        num / den
    }

    #[test]
    fn flat_prior_single_observation() {
        let m = ConjugateModel::new(5.0, Variance::Infinite, Variance::Finite(2.0), 1, 1).unwrap();
        assert!((m.posterior_mean(3.0, None).unwrap() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn equal_precision_average() {
        assert!((symmetric().posterior_mean(2.0, None).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn posterior_mean_matches_grid_integration() {
        for (m, y1, y2) in [
            (ConjugateModel::standard(0.5, 2.0, 3.0, 4, 2).unwrap(), 1.3, Some(-0.4)),
            (ConjugateModel::standard(-1.0, 0.3, 1.5, 0, 3).unwrap(), 0.0, Some(2.2)),
            (ConjugateModel::standard(2.0, 1.0, 0.5, 7, 1).unwrap(), 2.6, None),
        ] {
            let exact = m.posterior_mean(y1, y2).unwrap();
            assert!((exact - grid_posterior_mean(&m, y1, y2)).abs() < 1e-6);
        }
    }

    #[test]
    fn improper_posterior_is_rejected() {
        let m = ConjugateModel::new(0.0, Variance::Infinite, Variance::Finite(1.0), 0, 1).unwrap();
        assert!(m.posterior_mean(0.0, None).is_err());
        assert!(m.prospective_evsi().is_err());
        assert!(ConjugateModel::standard(0.0, -1.0, 1.0, 1, 1).is_err());
        assert!(ConjugateModel::standard(0.0, 1.0, 1.0, 1, 0).is_err());
    }

    #[test]
    fn worthless_data_has_zero_expected_value() {
        let m = ConjugateModel::new(0.0, Variance::Finite(1.0), Variance::Infinite, 3, 2).unwrap();
        assert_eq!(m.prospective_evsi().unwrap(), 0.0);
    }

    #[test]
    fn hand_derived_prospective() {
        // w = 1/2 on ȳ₂ whose marginal variance is 2: (1/2)² · 2.
        let m = ConjugateModel::standard(0.0, 1.0, 1.0, 0, 1).unwrap();
        assert!((m.prospective_evsi().unwrap() - 0.5).abs() < 1e-15);
        // Equivalently the drop in posterior variance.
        let drop = m.posterior_var(false).unwrap() - m.posterior_var(true).unwrap();
        assert!((m.prospective_evsi().unwrap() - drop).abs() < 1e-15);
    }

    #[test]
    fn prospective_matches_naive_simulation() {
        // Symmetric case: θ | Y₁ ~ N(a₁, 1/2); simulate (θ, ȳ₂) pairs and the resulting action.
        let m = symmetric();
        let ybar1 = 0.7;
        let a1 = m.posterior_mean(ybar1, None).unwrap();
        let sd1 = m.posterior_var(false).unwrap().sqrt();
        let mut rng = seed::rng(11);
        let sq: Vec<f64> = (0..100_000)
            .map(|_| {
                let theta = a1 + sd1 * rng.sample::<f64, _>(StandardNormal);
                let y2 = theta + rng.sample::<f64, _>(StandardNormal);
                (m.posterior_mean(ybar1, Some(y2)).unwrap() - a1).powi(2)
            })
            .collect();
        let est = stats::mean(&sq);
        let se = (stats::sample_variance(&sq) / sq.len() as f64).sqrt();
        let exact = m.prospective_evsi().unwrap();
        assert!((exact - 1.0 / 6.0).abs() < 1e-15);
        assert!((est - exact).abs() < 3.0 * se, "{est} vs {exact} ± {se}");
    }

    #[test]
    fn replication_is_deterministic_and_consistent() {
        let m = ConjugateModel::standard(0.0, 1.0, 2.0, 3, 2).unwrap();
        let a = m.simulate_replication(99).unwrap();
        assert_eq!(a, m.simulate_replication(99).unwrap());
        assert_ne!(a, m.simulate_replication(100).unwrap());
        assert_eq!(a.retro / a.pro, a.evoir);
        assert_eq!(oracle_simulate_replication(&m, 99).unwrap(), (a.retro, a.pro, a.evoir));
    }

    #[test]
    fn mean_evoir_is_one() {
        let m = ConjugateModel::standard(0.0, 1.0, 1.0, 4, 1).unwrap();
        let reps = m.simulate_many(1_000, 5_000).unwrap();
        let ratios: Vec<f64> = reps.iter().map(|r| r.evoir).collect();
        let se = (stats::sample_variance(&ratios) / ratios.len() as f64).sqrt();
        assert!((stats::mean(&ratios) - 1.0).abs() < 3.0 * se);
    }

    #[test]
    fn retrospective_averages_to_prospective_at_fixed_y1() {
        let m = ConjugateModel::standard(1.0, 2.0, 1.0, 3, 2).unwrap();
        let ybar1 = 1.8;
        let a1 = m.posterior_mean(ybar1, None).unwrap();
        let sd1 = m.posterior_var(false).unwrap().sqrt();
        let noise = (1.0 / 2.0f64).sqrt();
        let mut rng = seed::rng(5);
        let (mut retro, mut moved) = (Vec::new(), Vec::new());
        for _ in 0..20_000 {
            let theta = a1 + sd1 * rng.sample::<f64, _>(StandardNormal);
            let y2 = theta + noise * rng.sample::<f64, _>(StandardNormal);
            retro.push(m.retrospective_evsi(ybar1, y2).unwrap());
            moved.push(m.posterior_mean(ybar1, Some(y2)).unwrap() - a1);
        }
        let n = retro.len() as f64;
        let se = (stats::sample_variance(&retro) / n).sqrt();
        assert!((stats::mean(&retro) - m.prospective_evsi().unwrap()).abs() < 3.0 * se);
        // Martingale: E{a_{Y₁,Y₂} | Y₁} = a_{Y₁}.
        let se = (stats::sample_variance(&moved) / n).sqrt();
        assert!(stats::mean(&moved).abs() < 3.0 * se);
    }

    #[test]
    fn scaled_ratio_is_chi_square_one() {
        let m = ConjugateModel::standard(0.0, 1.0, 1.0, 2, 1).unwrap();
        let z: Vec<f64> = m.simulate_many(77, 2_000).unwrap().iter().map(|r| r.evoir).collect();
        let d = stats::ks_statistic(&z, |x| stats::chi2_cdf(x, 1).unwrap());
        assert!(stats::ks_p_value(d, z.len()) > 0.01);
    }

    #[test]
    fn diagonal_oracle_is_chi_square_two() {
        let c = [
            ConjugateModel::standard(0.0, 1.0, 1.0, 2, 1).unwrap(),
            ConjugateModel::standard(3.0, 0.5, 2.0, 1, 4).unwrap(),
        ];
        let oracle = DiagonalOracle::new(c.to_vec()).unwrap();
        let z: Vec<f64> = oracle
            .simulate_many(123, 2_000)
            .unwrap()
            .iter()
            .map(|r| 2.0 * r.evoir)
            .collect();
        let d = stats::ks_statistic(&z, |x| stats::chi2_cdf(x, 2).unwrap());
        assert!(stats::ks_p_value(d, z.len()) > 0.01);
        let mean = stats::mean(&z) / 2.0;
        let se = (stats::sample_variance(&z) / 4.0 / z.len() as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se);
    }

    #[test]
    fn theorem_one_expected_loss_difference() {
        // E{L(a₁, θ) − L(a₁₂, θ) | Y₁, Y₂} = (a₁ − a₁₂)² from exact posterior draws.
        let m = ConjugateModel::standard(0.0, 1.0, 1.0, 1, 1).unwrap();
        let sampler = ConjugateSampler::new(m, 0.4, 2.5);
        let draws = sampler.posterior_draws(None, 3, 200_000).unwrap();
        let a1 = voi::ActionVector::from_slice(&[m.posterior_mean(0.4, None).unwrap()]).unwrap();
        let a12 = voi::ActionVector::from_slice(&[m.posterior_mean(0.4, Some(2.5)).unwrap()]).unwrap();
        let loss = LossSpec::identity(1);
        let (est, se) = voi::expected_loss_reduction_mc(&a1, &a12, &draws, &loss).unwrap();
        let exact = voi::retrospective_evsi(&a1, &a12, &loss).unwrap();
        assert!((est - exact).abs() < 3.0 * se, "{est} vs {exact} ± {se}");
    }

    #[test]
    fn bayes_action_of_draws_matches_posterior_mean() {
        let m = ConjugateModel::standard(0.0, 2.0, 1.0, 3, 1).unwrap();
        let sampler = ConjugateSampler::new(m, 1.2, 0.0);
        let draws = sampler.posterior_draws(Some(0), 8, 50_000).unwrap();
        let action = voi::bayes_action(&draws).unwrap();
        let col: Vec<f64> = draws.matrix().column(0).iter().copied().collect();
        let mcse = (stats::sample_variance(&col) / col.len() as f64).sqrt();
        let exact = m.posterior_mean(1.2, None).unwrap();
        assert!((action.values()[0] - exact).abs() < 3.0 * mcse);
    }
}
