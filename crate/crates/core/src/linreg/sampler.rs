use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use super::{fit_matrices, RegressionData};
use crate::error::{Result, VoiError};
use crate::mc::{Completion, PosteriorSampler};
use crate::seed;
use crate::voi::PosteriorDraws;

/// Exact draws from the normal-inverse-χ² posterior of `(β, σ²)`.
///
/// Unit `i` is observation `i`; its data block is the scalar `yᵢ` and the
/// target is `β`.
#[derive(Debug, Clone)]
pub struct NormalInvChi2Sampler {
    data: RegressionData,
}

struct Posterior {
    beta_hat: DVector<f64>,
    r_inv: DMatrix<f64>,
    s2: f64,
    df: usize,
}

impl Posterior {
    fn from(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        let f = fit_matrices(x, y, None)?;
        let df = x.nrows() - x.ncols();
        Ok(Self {
            beta_hat: f.beta_hat,
            r_inv: f.r_inv,
            s2: f.s2,
            df,
        })
    }

    /// `σ² = ν s² / χ²_ν`, then `β = β̂ + σ R⁻¹ z`.
    fn draw(&self, rng: &mut seed::Rng) -> (DVector<f64>, f64) {
        let chi = ChiSquared::new(self.df as f64).expect("positive degrees of freedom");
        let sigma2 = self.df as f64 * self.s2 / chi.sample(rng);
        let p = self.beta_hat.len();
        let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        (&self.beta_hat + &self.r_inv * z * sigma2.sqrt(), sigma2)
    }

    fn draws(&self, seed: u64, n: usize) -> Result<PosteriorDraws> {
        let mut rng = seed::rng(seed);
        let rows: Vec<DVector<f64>> = (0..n).map(|_| self.draw(&mut rng).0).collect();
        PosteriorDraws::from_rows(&rows)
    }
}

impl NormalInvChi2Sampler {
    pub fn new(data: RegressionData) -> Result<Self> {
        if data.n() < data.p() + 2 {
            return Err(VoiError::Data(format!(
                "posterior without one row needs n ≥ p + 2 (n = {}, p = {})",
                data.n(),
                data.p()
            )));
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &RegressionData {
        &self.data
    }

    fn check(&self, unit: usize) -> Result<()> {
        if unit >= self.data.n() {
            return Err(VoiError::UnknownUnit(unit.to_string()));
        }
        Ok(())
    }

    fn without(&self, unit: usize) -> Result<Posterior> {
        let (x, y) = self.data.without_row(unit);
        Posterior::from(&x, &y).map_err(|e| match e {
            VoiError::RankDeficient { .. } => VoiError::RankLossOnDeletion { index: unit },
            other => other,
        })
    }
}

impl PosteriorSampler for NormalInvChi2Sampler {
    fn target_dim(&self) -> usize {
        self.data.p()
    }

    fn n_units(&self) -> usize {
        self.data.n()
    }

    fn unit_label(&self, unit: usize) -> String {
        self.data.row_labels[unit].clone()
    }

    fn posterior_draws(&self, exclude: Option<usize>, seed: u64, n: usize) -> Result<PosteriorDraws> {
        let post = match exclude {
            Some(u) => {
                self.check(u)?;
                self.without(u)?
            }
            None => Posterior::from(&self.data.x, &self.data.y)?,
        };
        post.draws(seed, n)
    }

    fn predictive_draws(&self, unit: usize, seed: u64, n: usize) -> Result<Vec<Completion>> {
        self.check(unit)?;
        let post = self.without(unit)?;
        let xi = self.data.x.row(unit).transpose();
        let mut rng = seed::rng(seed);
        Ok((0..n)
            .map(|_| {
                let (beta, sigma2) = post.draw(&mut rng);
                let eps: f64 = rng.sample(StandardNormal);
                let y = xi.dot(&beta) + sigma2.sqrt() * eps;
                Completion {
                    block: DVector::from_element(1, y),
                    target: beta,
                }
            })
            .collect())
    }

    fn conditional_draws(&self, unit: usize, block: &DVector<f64>, seed: u64, n: usize) -> Result<PosteriorDraws> {
        self.check(unit)?;
        if block.len() != 1 {
            return Err(VoiError::DimensionMismatch {
                expected: 1,
                found: block.len(),
            });
        }
        let mut y = self.data.y.clone();
        y[unit] = block[0];
        Posterior::from(&self.data.x, &y)?.draws(seed, n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linreg::{longley, LinregAnalysis};
    use crate::stats;
    use crate::voi::{prospective_evsi_mc, LossSpec};

    #[test]
    fn posterior_mean_and_covariance() {
        let data = longley();
        let s = NormalInvChi2Sampler::new(data.clone()).unwrap();
        let draws = s.posterior_draws(None, 11, 40_000).unwrap();
        let a = LinregAnalysis::new(&data).unwrap();
        let loss = LossSpec::new(data.x.clone()).unwrap();
        // E‖X(β − β̂)‖² = p S² (n − p)/(n − p − 2).
        let (n, p) = (data.n() as f64, data.p() as f64);
        let expected = p * a.fit().s2 * (n - p) / (n - p - 2.0);
        let (v, mcse) = prospective_evsi_mc(&draws, &loss).unwrap();
        assert!((v - expected).abs() < 5.0 * mcse + 0.02 * expected, "{v} vs {expected}");
        let m = draws.column_means();
        let shift = loss.transform(&(m - &a.fit().beta_hat)).norm_squared();
        assert!(shift < 0.01 * expected);
    }

    #[test]
    fn predictive_variance_matches_closed_form() {
        let data = longley();
        let s = NormalInvChi2Sampler::new(data.clone()).unwrap();
        let a = LinregAnalysis::new(&data).unwrap();
        for i in [0, 8, 15] {
            let comps = s.predictive_draws(i, 5 + i as u64, 60_000).unwrap();
            let ys: Vec<f64> = comps.iter().map(|c| c.block[0]).collect();
            let loo = a.leave_one_out(i).unwrap();
            let (n, p) = (data.n() as f64, data.p() as f64);
            let df = n - 1.0 - p;
            let expected = loo.s2 * df / (df - 2.0) * (1.0 + loo.leverage_ratio);
            let v = stats::sample_variance(&ys);
            assert!((v / expected - 1.0).abs() < 0.05, "row {i}: {v} vs {expected}");
        }
    }

    #[test]
    fn conditional_on_observed_block_is_full_posterior() {
        let data = longley();
        let s = NormalInvChi2Sampler::new(data.clone()).unwrap();
        let block = DVector::from_element(1, data.y[3]);
        let a = s.conditional_draws(3, &block, 77, 100).unwrap();
        let b = s.posterior_draws(None, 77, 100).unwrap();
        assert_eq!(a.matrix(), b.matrix());
    }
}
