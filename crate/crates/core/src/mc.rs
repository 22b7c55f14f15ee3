//! Model-agnostic Monte Carlo estimators of the influence measures.
//!
//! Models plug in through [`PosteriorSampler`]. Three estimators are built on
//! top of it:
//!
//! * [`retrospective_evsi_mc`]: distance between the pooled posterior means
//!   with and without a unit, replicated over seed groups for the MCSE.
//! * [`prospective_evsi_naive`]: the nested scheme (outer joint draws of the
//!   unit's data and the target, inner re-posterior for every completion).
//! * [`prospective_evsi_knn`]: the same outer draws, with the inner posterior
//!   mean replaced by a k-nearest-neighbour regression of target on data.
//!
//! # Seeds
//!
//! Every estimator takes a [`SeedPlan`]. Group `g` of the full-data posterior
//! uses stream [`STREAM_FULL`], group `g` of the leave-unit-out posterior and
//! of the predictive draws use [`STREAM_EXCLUDED`], and inner run `k` uses
//! `stream(base, STREAM_INNER) ^ k`. Sharing the excluded stream lets a
//! caching sampler reuse one leave-unit-out run for both EVSI estimates.
//!
//! With common random numbers (the default) the excluded stream is the full
//! stream, so a sampler that consumes random numbers in step for both
//! posteriors produces strongly coupled draws and the retrospective shift is
//! estimated with far less noise. Groups stay independent of each other.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Result, VoiError};
use crate::seed;
use crate::stats;
use crate::voi::{LossSpec, PosteriorDraws};

pub const STREAM_FULL: u64 = 0x01;
pub const STREAM_EXCLUDED: u64 = 0x02;
pub const STREAM_INNER: u64 = 0x03;

/// Batches used for the MCSE of the nested estimator.
pub const NAIVE_BATCHES: usize = 20;

/// One simulated completion of a unit's data paired with the target draw
/// that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub block: DVector<f64>,
    pub target: DVector<f64>,
}

/// Sampling interface a model exposes to the estimators.
///
/// Implementations must be deterministic given the seed and must return
/// draws of the decision target with a constant dimension.
pub trait PosteriorSampler: Sync {
    fn target_dim(&self) -> usize;

    fn n_units(&self) -> usize;

    fn unit_label(&self, unit: usize) -> String;

    /// `n` draws of the target given all data, or all data except `exclude`.
    fn posterior_draws(&self, exclude: Option<usize>, seed: u64, n: usize) -> Result<PosteriorDraws>;

    /// `n` joint draws of the unit's data block and the target given the other units.
    fn predictive_draws(&self, unit: usize, seed: u64, n: usize) -> Result<Vec<Completion>>;

    /// `n` draws of the target given the other units plus `block` in place of the unit's data.
    fn conditional_draws(&self, unit: usize, block: &DVector<f64>, seed: u64, n: usize) -> Result<PosteriorDraws>;

    /// Whether the methods may be called from several threads at once.
    fn concurrent(&self) -> bool {
        true
    }
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub mcse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedPlan {
    pub base: u64,
    /// Independent replications of the whole estimate.
    pub groups: usize,
    /// Seed the leave-unit-out posterior of a group like its full-data posterior.
    pub common_random_numbers: bool,
}

impl SeedPlan {
    pub fn new(base: u64, groups: usize) -> Self {
        Self {
            base,
            groups,
            common_random_numbers: true,
        }
    }

    pub fn full_seed(&self, g: usize) -> u64 {
        seed::derive(self.base, STREAM_FULL, g as u64)
    }

    pub fn excluded_seed(&self, g: usize) -> u64 {
        let tag = if self.common_random_numbers { STREAM_FULL } else { STREAM_EXCLUDED };
        seed::derive(self.base, tag, g as u64)
    }

    pub fn inner_seed(&self, k: usize) -> u64 {
        seed::derive(self.base, STREAM_INNER, k as u64)
    }
}

impl Default for SeedPlan {
    fn default() -> Self {
        Self::new(0, 10)
    }
}

/// Settings of the prospective estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaModelConfig {
    /// `None` selects `⌈√n_outer⌉`.
    pub k_neighbors: Option<usize>,
    pub standardize: bool,
    pub n_outer: usize,
    pub n_inner: usize,
    /// Independent replications of the kNN estimate used for its MCSE.
    pub replicates: usize,
    /// Subtract the inner-sampling noise `tr(A Ŝₖ Aᵀ)/M` from each nested term.
    pub inner_bias_correction: bool,
    /// Largest tolerated fraction of failed inner runs.
    pub failure_budget: f64,
}

impl Default for MetaModelConfig {
    fn default() -> Self {
        Self {
            k_neighbors: None,
            standardize: true,
            n_outer: 2000,
            n_inner: 500,
            replicates: 10,
            inner_bias_correction: true,
            failure_budget: 0.05,
        }
    }
}

impl MetaModelConfig {
    pub fn k_for(&self, n: usize) -> usize {
        self.k_neighbors
            .unwrap_or_else(|| (n as f64).sqrt().ceil() as usize)
            .max(1)
    }

    fn validate_outer(&self) -> Result<()> {
        if self.n_outer < 2 {
            return Err(VoiError::InvalidArgument("n_outer must be at least 2".into()));
        }
        Ok(())
    }
}

fn collect_maybe_par<T, F>(concurrent: bool, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if concurrent {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

fn check_target(sampler: &impl PosteriorSampler, loss: &LossSpec, unit: usize) -> Result<()> {
    if unit >= sampler.n_units() {
        return Err(VoiError::UnknownUnit(unit.to_string()));
    }
    if loss.dim() != sampler.target_dim() {
        return Err(VoiError::DimensionMismatch {
            expected: sampler.target_dim(),
            found: loss.dim(),
        });
    }
    Ok(())
}

/// Retrospective EVSI of `unit` from posterior draws with and without it.
///
/// Each seed group contributes `n` draws to both posteriors. The estimate is
/// the loss between the pooled means; the MCSE is the jackknife over groups.
pub fn retrospective_evsi_mc<S: PosteriorSampler>(
    sampler: &S,
    unit: usize,
    loss: &LossSpec,
    seeds: &SeedPlan,
    n: usize,
) -> Result<Estimate> {
    check_target(sampler, loss, unit)?;
    if n < 2 {
        return Err(VoiError::TooFewDraws {
            what: "retrospective EVSI",
            required: 2,
            found: n,
        });
    }
    if seeds.groups < 2 {
        return Err(VoiError::InvalidArgument("at least two seed groups are needed".into()));
    }
    let label = sampler.unit_label(unit);
    let shifts: Vec<DVector<f64>> = collect_maybe_par(sampler.concurrent(), seeds.groups, |g| {
        let with = sampler.posterior_draws(None, seeds.full_seed(g), n)?;
        let without = sampler.posterior_draws(Some(unit), seeds.excluded_seed(g), n)?;
        Ok(without.column_means() - with.column_means())
    })
    .into_iter()
    .collect::<Result<_>>()
    .map_err(|e: VoiError| e.in_unit(label))?;

    let estimator = |kept: &[&DVector<f64>]| {
        let mut mean = DVector::zeros(loss.dim());
        for s in kept {
            mean += *s;
        }
        mean /= kept.len() as f64;
        loss.transform(&mean).norm_squared()
    };
    let all: Vec<&DVector<f64>> = shifts.iter().collect();
    Ok(Estimate {
        value: estimator(&all),
        mcse: stats::jackknife_se(&shifts, estimator),
    })
}

/// Prospective EVSI of `unit` by nested Monte Carlo.
///
/// 1. `n_outer` joint draws `(Y⁽ᵏ⁾, π⁽ᵏ⁾)` given the other units;
/// 2. `π̂` is the mean of the `π⁽ᵏ⁾`;
/// 3. `n_inner` posterior draws given the other units and `Y⁽ᵏ⁾`;
/// 4. `π̂⁽ᵏ⁾` is their mean;
/// 5. the estimate averages `‖A(π̂ − π̂⁽ᵏ⁾)‖²`.
///
/// Failed inner runs are dropped up to the failure budget.
pub fn prospective_evsi_naive<S: PosteriorSampler>(
    sampler: &S,
    unit: usize,
    loss: &LossSpec,
    config: &MetaModelConfig,
    seeds: &SeedPlan,
) -> Result<Estimate> {
    check_target(sampler, loss, unit)?;
    config.validate_outer()?;
    if config.n_inner < 2 {
        return Err(VoiError::InvalidArgument("n_inner must be at least 2".into()));
    }
    let label = sampler.unit_label(unit);
    let outer = sampler
        .predictive_draws(unit, seeds.excluded_seed(0), config.n_outer)
        .map_err(|e| e.in_unit(label.clone()))?;
    let center = mean_target(&outer, loss.dim())?;
    let m = config.n_inner;

    let terms: Vec<Result<f64>> = collect_maybe_par(sampler.concurrent(), outer.len(), |k| {
        let inner = sampler.conditional_draws(unit, &outer[k].block, seeds.inner_seed(k), m)?;
        let inner_mean = inner.column_means();
        let mut term = loss.transform(&(&center - &inner_mean)).norm_squared();
        if config.inner_bias_correction {
            let spread: f64 = (0..inner.n_draws())
                .map(|j| loss.transform(&(inner.row(j) - &inner_mean)).norm_squared())
                .sum();
            let n = inner.n_draws() as f64;
            term -= spread / (n * (n - 1.0));
        }
        Ok(term)
    });

    let total = terms.len();
    let ok: Vec<f64> = terms.into_iter().filter_map(|t| t.ok()).collect();
    let failed = total - ok.len();
    if failed as f64 > config.failure_budget * total as f64 || ok.len() < 2 {
        return Err(VoiError::InnerFailureBudget {
            failed,
            total,
            budget: 100.0 * config.failure_budget,
        }
        .in_unit(label));
    }
    if failed > 0 {
        log::warn!("{failed} of {total} inner posterior runs failed for unit `{label}`");
    }
    Ok(Estimate {
        value: stats::mean(&ok),
        mcse: stats::batch_means_mcse(&ok, NAIVE_BATCHES),
    })
}

/// Prospective EVSI of `unit` with a kNN meta-model for the inner posterior mean.
///
/// Replicated `config.replicates` times on disjoint seed groups; the value is
/// the replicate mean and the MCSE their standard error.
pub fn prospective_evsi_knn<S: PosteriorSampler>(
    sampler: &S,
    unit: usize,
    loss: &LossSpec,
    config: &MetaModelConfig,
    seeds: &SeedPlan,
) -> Result<Estimate> {
    check_target(sampler, loss, unit)?;
    config.validate_outer()?;
    let k = config.k_for(config.n_outer);
    if k > config.n_outer {
        return Err(VoiError::InvalidArgument(format!(
            "k_neighbors ({k}) exceeds n_outer ({})",
            config.n_outer
        )));
    }
    if config.replicates < 2 {
        return Err(VoiError::InvalidArgument("at least two kNN replicates are needed".into()));
    }
    let label = sampler.unit_label(unit);
    let reps: Vec<f64> = collect_maybe_par(sampler.concurrent(), config.replicates, |r| {
        let outer = sampler.predictive_draws(unit, seeds.excluded_seed(r), config.n_outer)?;
        knn_prospective(&outer, loss, k, config.standardize)
    })
    .into_iter()
    .collect::<Result<_>>()
    .map_err(|e: VoiError| e.in_unit(label))?;
    Ok(Estimate {
        value: stats::mean(&reps),
        mcse: (stats::sample_variance(&reps) / reps.len() as f64).sqrt(),
    })
}

/// Step 5 of the nested scheme with kNN fitted values standing in for steps 3–4.
pub fn knn_prospective(outer: &[Completion], loss: &LossSpec, k: usize, standardize: bool) -> Result<f64> {
    let center = mean_target(outer, loss.dim())?;
    let n = outer.len();
    let d = outer[0].block.len();
    let inputs = DMatrix::from_fn(n, d, |i, j| outer[i].block[j]);
    let targets = DMatrix::from_fn(n, loss.dim(), |i, j| outer[i].target[j]);
    let model = KnnRegressor::fit(inputs, targets, standardize)?;
    let total: f64 = (0..n)
        .map(|i| {
            let fitted = model.predict_row(i, k)?;
            Ok(loss.transform(&(&center - fitted)).norm_squared())
        })
        .sum::<Result<f64>>()?;
    Ok(total / n as f64)
}

fn mean_target(outer: &[Completion], dim: usize) -> Result<DVector<f64>> {
    if outer.len() < 2 {
        return Err(VoiError::TooFewDraws {
            what: "predictive completions",
            required: 2,
            found: outer.len(),
        });
    }
    let mut center = DVector::zeros(dim);
    for c in outer {
        if c.target.len() != dim {
            return Err(VoiError::DimensionMismatch {
                expected: dim,
                found: c.target.len(),
            });
        }
        center += &c.target;
    }
    Ok(center / outer.len() as f64)
}

/// Unweighted k-nearest-neighbour regression under Euclidean distance.
///
/// Inputs may be z-scored per coordinate; coordinates with zero spread keep
/// unit scale. Ties in distance go to the lower row index.
#[derive(Debug, Clone)]
pub struct KnnRegressor {
    inputs: DMatrix<f64>,
    targets: DMatrix<f64>,
    center: DVector<f64>,
    scale: DVector<f64>,
}

impl KnnRegressor {
    pub fn fit(inputs: DMatrix<f64>, targets: DMatrix<f64>, standardize: bool) -> Result<Self> {
        let (n, d) = inputs.shape();
        if targets.nrows() != n {
            return Err(VoiError::DimensionMismatch {
                expected: n,
                found: targets.nrows(),
            });
        }
        if n == 0 {
            return Err(VoiError::TooFewDraws {
                what: "kNN regression",
                required: 1,
                found: 0,
            });
        }
        let mut center = DVector::zeros(d);
        let mut scale = DVector::from_element(d, 1.0);
        let mut any_spread = false;
        for j in 0..d {
            let col: Vec<f64> = inputs.column(j).iter().copied().collect();
            let sd = stats::sample_variance(&col).sqrt();
            if sd > 0.0 {
                any_spread = true;
                if standardize {
                    center[j] = stats::mean(&col);
                    scale[j] = sd;
                }
            }
        }
        if n > 1 && !any_spread {
            return Err(VoiError::DegeneratePredictors);
        }
        let mut scaled = inputs;
        for j in 0..d {
            for i in 0..n {
                scaled[(i, j)] = (scaled[(i, j)] - center[j]) / scale[j];
            }
        }
        Ok(Self {
            inputs: scaled,
            targets,
            center,
            scale,
        })
    }

    pub fn n(&self) -> usize {
        self.inputs.nrows()
    }

    fn neighbours(&self, query: &[f64], k: usize) -> Result<Vec<usize>> {
        let n = self.n();
        if k == 0 || k > n {
            return Err(VoiError::InvalidArgument(format!(
                "k must lie in 1..={n}, got {k}"
            )));
        }
        let mut dist: Vec<(f64, usize)> = (0..n)
            .map(|i| {
                let d2: f64 = query
                    .iter()
                    .enumerate()
                    .map(|(j, q)| (self.inputs[(i, j)] - q).powi(2))
                    .sum();
                (d2, i)
            })
            .collect();
        let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < n {
            dist.select_nth_unstable_by(k - 1, order);
        }
        Ok(dist[..k].iter().map(|&(_, i)| i).collect())
    }

    fn average(&self, rows: &[usize]) -> DVector<f64> {
        let mut out = DVector::zeros(self.targets.ncols());
        for &i in rows {
            out += self.targets.row(i).transpose();
        }
        out / rows.len() as f64
    }

    /// Fitted value at a raw-scale query point.
    pub fn predict(&self, query: &DVector<f64>, k: usize) -> Result<DVector<f64>> {
        if query.len() != self.inputs.ncols() {
            return Err(VoiError::DimensionMismatch {
                expected: self.inputs.ncols(),
                found: query.len(),
            });
        }
        let q: Vec<f64> = (0..query.len())
            .map(|j| (query[j] - self.center[j]) / self.scale[j])
            .collect();
        Ok(self.average(&self.neighbours(&q, k)?))
    }

    /// Fitted value at training row `i` (the row counts as its own neighbour).
    pub fn predict_row(&self, i: usize, k: usize) -> Result<DVector<f64>> {
        let q: Vec<f64> = self.inputs.row(i).iter().copied().collect();
        Ok(self.average(&self.neighbours(&q, k)?))
    }
}

/// kNN regression on raw inputs: the mean target of the `k` inputs nearest to `query`.
pub fn knn_regress(
    inputs: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    query: &DVector<f64>,
    k: usize,
) -> Result<DVector<f64>> {
    if k > inputs.nrows() {
        return Err(VoiError::InvalidArgument(format!(
            "k ({k}) exceeds the number of training points ({})",
            inputs.nrows()
        )));
    }
    let n = inputs.nrows();
    if targets.nrows() != n {
        return Err(VoiError::DimensionMismatch {
            expected: n,
            found: targets.nrows(),
        });
    }
    let model = KnnRegressor {
        inputs: inputs.clone(),
        targets: targets.clone(),
        center: DVector::zeros(inputs.ncols()),
        scale: DVector::from_element(inputs.ncols(), 1.0),
    };
    model.predict(query, k)
}
