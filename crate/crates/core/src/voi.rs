//! Quadratic-loss decision machinery and the three influence measures.
//!
//! Under a loss `L(a, θ) = (a − θ)ᵀQ(a − θ)` with `Q = AᵀA` the Bayes action
//! is the posterior mean, the retrospective EVSI of a data block is the
//! `Q`-distance between the actions computed with and without it, and the
//! prospective EVSI is `tr var(A a | rest of data)`. Their ratio (EVOIR) has
//! conditional mean one.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, VoiError};
use crate::stats;

/// Number of batches used for the MCSE of [`prospective_evsi_mc`].
pub const PROSPECTIVE_BATCHES: usize = 20;

/// Rejects factors with a column that is numerically dependent on the earlier ones.
fn check_full_column_rank(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() < a.ncols() {
        return Err(VoiError::NotPositiveDefinite);
    }
    let r = a.clone().qr().r();
    for j in 0..a.ncols() {
        let norm = a.column(j).norm();
        if !(r[(j, j)].abs() > 1e-10 * norm) {
            return Err(VoiError::NotPositiveDefinite);
        }
    }
    Ok(())
}

/// Quadratic loss given by a factor matrix `A` (`p_out × p`), `Q = AᵀA`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSpec {
    factor: DMatrix<f64>,
}

impl LossSpec {
    /// Builds the loss from its factor, checking that `AᵀA` is positive definite.
    pub fn new(factor: DMatrix<f64>) -> Result<Self> {
        if factor.ncols() == 0 || factor.nrows() == 0 {
            return Err(VoiError::InvalidArgument("loss factor is empty".into()));
        }
        if factor.iter().any(|v| !v.is_finite()) {
            return Err(VoiError::NonFinite("loss factor"));
        }
        check_full_column_rank(&factor)?;
        Ok(Self { factor })
    }

    pub fn identity(p: usize) -> Self {
        Self {
            factor: DMatrix::identity(p, p),
        }
    }

    /// Scalar loss `q · (a − θ)²`.
    pub fn scalar(q: f64) -> Result<Self> {
        if !(q > 0.0) || !q.is_finite() {
            return Err(VoiError::NotPositiveDefinite);
        }
        Ok(Self {
            factor: DMatrix::from_element(1, 1, q.sqrt()),
        })
    }

    /// Diagonal metric `Q = diag(weights)`.
    pub fn diagonal(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(VoiError::NotPositiveDefinite);
        }
        let d = DVector::from_iterator(weights.len(), weights.iter().map(|w| w.sqrt()));
        Ok(Self {
            factor: DMatrix::from_diagonal(&d),
        })
    }

    /// Builds the loss from `Q` itself using its Cholesky factor `Q = LLᵀ`, `A = Lᵀ`.
    pub fn from_metric(q: &DMatrix<f64>) -> Result<Self> {
        if !q.is_square() {
            return Err(VoiError::DimensionMismatch {
                expected: q.nrows(),
                found: q.ncols(),
            });
        }
        let chol = q.clone().cholesky().ok_or(VoiError::NotPositiveDefinite)?;
        Self::new(chol.l().transpose())
    }

    pub fn dim(&self) -> usize {
        self.factor.ncols()
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn metric(&self) -> DMatrix<f64> {
        self.factor.transpose() * &self.factor
    }

    /// Applies `A` to a parameter-space vector.
    pub fn transform(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.factor * v
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim() {
            return Err(VoiError::DimensionMismatch {
                expected: self.dim(),
                found,
            });
        }
        Ok(())
    }
}

/// A point in the action (= parameter) space.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionVector(DVector<f64>);

impl ActionVector {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(VoiError::NonFinite("action vector"));
        }
        Ok(Self(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

/// `N × p` matrix of sampled parameter or target vectors, one draw per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    draws: DMatrix<f64>,
}

impl PosteriorDraws {
    pub fn new(draws: DMatrix<f64>) -> Result<Self> {
        if draws.nrows() == 0 {
            return Err(VoiError::TooFewDraws {
                what: "posterior draws",
                required: 1,
                found: 0,
            });
        }
        if draws.iter().any(|v| !v.is_finite()) {
            return Err(VoiError::NonFinite("posterior draws"));
        }
        Ok(Self { draws })
    }

    pub fn from_rows(rows: &[DVector<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, |r| r.len());
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(VoiError::DimensionMismatch {
                expected: p,
                found: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]))
    }

    pub fn n_draws(&self) -> usize {
        self.draws.nrows()
    }

    pub fn dim(&self) -> usize {
        self.draws.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.draws
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.draws.row(i).transpose()
    }

    pub fn column_means(&self) -> DVector<f64> {
        self.draws.row_mean().transpose()
    }

    /// Stacks draws of equal dimension.
    pub fn concat(parts: &[&PosteriorDraws]) -> Result<Self> {
        let p = parts.first().map_or(0, |d| d.dim());
        if let Some(bad) = parts.iter().find(|d| d.dim() != p) {
            return Err(VoiError::DimensionMismatch {
                expected: p,
                found: bad.dim(),
            });
        }
        let n: usize = parts.iter().map(|d| d.n_draws()).sum();
        let mut out = DMatrix::zeros(n, p);
        let mut at = 0;
        for d in parts {
            out.rows_mut(at, d.n_draws()).copy_from(&d.draws);
            at += d.n_draws();
        }
        Self::new(out)
    }
}

/// Per-unit influence summary.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceRecord {
    pub unit_id: String,
    pub retrospective: f64,
    pub prospective: f64,
    /// Absent when the prospective EVSI is zero.
    pub evoir: Option<f64>,
    pub calib_p: Option<f64>,
    pub retro_mcse: Option<f64>,
    pub pro_mcse: Option<f64>,
}

impl InfluenceRecord {
    /// Assembles a record, deriving EVOIR from the two EVSI values.
    ///
    /// `calibration_dim` selects the chi-square reference for `calib_p`;
    /// `None` leaves it absent.
    pub fn new(
        unit_id: impl Into<String>,
        retrospective: f64,
        prospective: f64,
        calibration_dim: Option<usize>,
    ) -> Result<Self> {
        if !retrospective.is_finite() || !prospective.is_finite() {
            return Err(VoiError::NonFinite("influence record"));
        }
        if retrospective < 0.0 || prospective < 0.0 {
            return Err(VoiError::InvalidArgument(format!(
                "EVSI values must be non-negative (retrospective {retrospective}, prospective {prospective})"
            )));
        }
        let evoir = if prospective > 0.0 {
            Some(evoir(retrospective, prospective)?)
        } else {
            None
        };
        let calib_p = match (evoir, calibration_dim) {
            (Some(r), Some(p)) => Some(evoir_calibration_p(r, p)?),
            _ => None,
        };
        Ok(Self {
            unit_id: unit_id.into(),
            retrospective,
            prospective,
            evoir,
            calib_p,
            retro_mcse: None,
            pro_mcse: None,
        })
    }

    pub fn with_mcse(mut self, retro_mcse: f64, pro_mcse: f64) -> Self {
        self.retro_mcse = Some(retro_mcse);
        self.pro_mcse = Some(pro_mcse);
        self
    }

    /// Records whose prospective EVSI vanished carry no ratio.
    pub fn is_degenerate(&self) -> bool {
        self.evoir.is_none()
    }

    /// `|retro − pro · evoir| ≤ tol · max(1, retro)`; degenerate records pass trivially.
    pub fn satisfies_product_identity(&self, tol: f64) -> bool {
        match self.evoir {
            Some(r) => {
                (self.retrospective - self.prospective * r).abs()
                    <= tol * self.retrospective.max(1.0)
            }
            None => true,
        }
    }
}

/// `(a − θ)ᵀQ(a − θ)` evaluated as `‖A(a − θ)‖²`.
pub fn quadratic_loss(a: &ActionVector, theta: &ActionVector, loss: &LossSpec) -> Result<f64> {
    loss.check_dim(a.dim())?;
    loss.check_dim(theta.dim())?;
    Ok(loss.transform(&(a.values() - theta.values())).norm_squared())
}

/// Bayes action under quadratic loss: the componentwise mean of the draws.
pub fn bayes_action(draws: &PosteriorDraws) -> Result<ActionVector> {
    ActionVector::new(draws.column_means())
}

/// Retrospective EVSI: the `Q`-distance between the actions without and with the block.
pub fn retrospective_evsi(
    a_without: &ActionVector,
    a_with: &ActionVector,
    loss: &LossSpec,
) -> Result<f64> {
    quadratic_loss(a_without, a_with, loss)
}

/// Monte Carlo estimate of `E{L(a_without, θ) − L(a_with, θ)}` over draws of `θ`
/// from the posterior given all data, with its standard error.
///
/// Under quadratic loss this equals [`retrospective_evsi`] in expectation.
pub fn expected_loss_reduction_mc(
    a_without: &ActionVector,
    a_with: &ActionVector,
    full_posterior: &PosteriorDraws,
    loss: &LossSpec,
) -> Result<(f64, f64)> {
    loss.check_dim(full_posterior.dim())?;
    let n = full_posterior.n_draws();
    if n < 2 {
        return Err(VoiError::TooFewDraws {
            what: "expected loss reduction",
            required: 2,
            found: n,
        });
    }
    let diffs: Vec<f64> = (0..n)
        .map(|i| {
            let theta = full_posterior.row(i);
            loss.transform(&(a_without.values() - &theta)).norm_squared()
                - loss.transform(&(a_with.values() - &theta)).norm_squared()
        })
        .collect();
    let se = (stats::sample_variance(&diffs) / n as f64).sqrt();
    Ok((stats::mean(&diffs), se))
}

/// Prospective EVSI from i.i.d. draws of the completed-data Bayes action.
///
/// Returns `tr cov(A a)` (unbiased divisor) and a batch-means MCSE computed
/// from the per-draw squared distances to the draw mean.
pub fn prospective_evsi_mc(
    conditional_action_draws: &PosteriorDraws,
    loss: &LossSpec,
) -> Result<(f64, f64)> {
    loss.check_dim(conditional_action_draws.dim())?;
    let n = conditional_action_draws.n_draws();
    if n < 2 {
        return Err(VoiError::TooFewDraws {
            what: "prospective EVSI",
            required: 2,
            found: n,
        });
    }
    let center = conditional_action_draws.column_means();
    let scale = n as f64 / (n - 1) as f64;
    let sq: Vec<f64> = (0..n)
        .map(|i| {
            scale
                * loss
                    .transform(&(conditional_action_draws.row(i) - &center))
                    .norm_squared()
        })
        .collect();
    Ok((
        stats::mean(&sq),
        stats::batch_means_mcse(&sq, PROSPECTIVE_BATCHES),
    ))
}

/// Expected value of information ratio, `retro / pro`.
pub fn evoir(retro: f64, pro: f64) -> Result<f64> {
    if !retro.is_finite() || !pro.is_finite() {
        return Err(VoiError::NonFinite("information ratio"));
    }
    if pro <= 0.0 {
        return Err(VoiError::DegenerateProspective);
    }
    Ok(retro / pro)
}

/// `P(χ²_p > p · evoir)`: how surprising an observed ratio is when the
/// completed-data action is Gaussian with covariance proportional to `Q⁻¹`.
pub fn evoir_calibration_p(evoir: f64, p_dim: usize) -> Result<f64> {
    if p_dim == 0 {
        return Err(VoiError::InvalidArgument(
            "calibration dimension must be at least 1".into(),
        ));
    }
    if !evoir.is_finite() || evoir < 0.0 {
        return Err(VoiError::InvalidArgument(format!(
            "information ratio must be finite and non-negative, got {evoir}"
        )));
    }
    stats::chi2_sf(p_dim as f64 * evoir, p_dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    fn av(v: &[f64]) -> ActionVector {
        ActionVector::from_slice(v).unwrap()
    }

    #[test]
    fn loss_of_identical_points_is_zero() {
        let loss = LossSpec::new(dmatrix![2.0, 1.0; 0.0, 3.0]).unwrap();
        assert_eq!(quadratic_loss(&av(&[4.0, -1.0]), &av(&[4.0, -1.0]), &loss).unwrap(), 0.0);
    }

    #[test]
    fn identity_loss_is_squared_norm() {
        let loss = LossSpec::identity(2);
        assert_eq!(quadratic_loss(&av(&[1.0, 2.0]), &av(&[0.0, 0.0]), &loss).unwrap(), 5.0);
    }

    #[test]
    fn factor_and_metric_paths_agree() {
        // Q = AᵀA = [[2, 1], [1, 1]]; (1,1)ᵀQ(1,1) = 5 = ‖(1, 2)‖².
        let loss = LossSpec::new(dmatrix![1.0, 0.0; 1.0, 1.0]).unwrap();
        assert_eq!(loss.metric(), dmatrix![2.0, 1.0; 1.0, 1.0]);
        let d = av(&[1.0, 1.0]);
        let zero = av(&[0.0, 0.0]);
        assert!((quadratic_loss(&d, &zero, &loss).unwrap() - 5.0).abs() < 1e-15);
        let via_q = (d.values().transpose() * loss.metric() * d.values())[(0, 0)];
        assert!((via_q - 5.0).abs() < 1e-15);
    }

    #[test]
    fn loss_rejects_bad_inputs() {
        assert!(matches!(
            LossSpec::new(dmatrix![1.0, 1.0; 1.0, 1.0]),
            Err(VoiError::NotPositiveDefinite)
        ));
        assert!(LossSpec::scalar(0.0).is_err());
        let loss = LossSpec::identity(2);
        assert!(matches!(
            quadratic_loss(&av(&[1.0]), &av(&[1.0, 2.0]), &loss),
            Err(VoiError::DimensionMismatch { .. })
        ));
        assert!(ActionVector::from_slice(&[f64::NAN]).is_err());
    }

    #[test]
    fn from_metric_recovers_q() {
        let q = dmatrix![4.0, 1.0; 1.0, 3.0];
        let loss = LossSpec::from_metric(&q).unwrap();
        assert!((loss.metric() - q).abs().max() < 1e-14);
    }

    #[test]
    fn bayes_action_is_mean() {
        let one = PosteriorDraws::new(dmatrix![3.0, -2.0]).unwrap();
        assert_eq!(bayes_action(&one).unwrap(), av(&[3.0, -2.0]));
        let two = PosteriorDraws::new(dmatrix![0.0, 0.0; 2.0, 4.0]).unwrap();
        assert_eq!(bayes_action(&two).unwrap(), av(&[1.0, 2.0]));
        assert!(PosteriorDraws::new(DMatrix::zeros(0, 2)).is_err());
    }

    #[test]
    fn retrospective_examples() {
        assert_eq!(
            retrospective_evsi(&av(&[1.5]), &av(&[1.5]), &LossSpec::scalar(2.0).unwrap()).unwrap(),
            0.0
        );
        let r = retrospective_evsi(&av(&[1.0]), &av(&[3.0]), &LossSpec::scalar(2.0).unwrap()).unwrap();
        assert!((r - 8.0).abs() < 1e-14);
    }

    #[test]
    fn prospective_examples() {
        let same = PosteriorDraws::new(DMatrix::from_element(30, 2, 1.25)).unwrap();
        let (v, se) = prospective_evsi_mc(&same, &LossSpec::identity(2)).unwrap();
        assert_eq!((v, se), (0.0, 0.0));

        let xs = [1.0, 4.0, 2.0, 8.0, 5.0];
        let draws = PosteriorDraws::new(DMatrix::from_column_slice(5, 1, &xs)).unwrap();
        let (v, _) = prospective_evsi_mc(&draws, &LossSpec::identity(1)).unwrap();
        assert!((v - stats::sample_variance(&xs)).abs() < 1e-12);

        let single = PosteriorDraws::new(dmatrix![1.0]).unwrap();
        assert!(prospective_evsi_mc(&single, &LossSpec::identity(1)).is_err());
    }

    #[test]
    fn evoir_examples() {
        assert_eq!(evoir(0.2, 0.2).unwrap(), 1.0);
        assert!((evoir(0.153, 0.043).unwrap() - 3.558).abs() < 1e-3);
        assert_eq!(evoir(0.0, 0.142).unwrap(), 0.0);
        assert!(matches!(evoir(1.0, 0.0), Err(VoiError::DegenerateProspective)));
        assert!(evoir(f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn calibration_examples() {
        assert_eq!(evoir_calibration_p(0.0, 4).unwrap(), 1.0);
        assert!((evoir_calibration_p(1.0, 1).unwrap() - 0.317_310_507_862_9).abs() < 1e-10);
        assert!((evoir_calibration_p(1.0, 7).unwrap() - 0.428_879_857_553_1).abs() < 1e-10);
        assert!(evoir_calibration_p(1.0, 0).is_err());
    }

    #[test]
    fn degenerate_record_has_no_ratio() {
        let r = InfluenceRecord::new("u", 0.0, 0.0, Some(2)).unwrap();
        assert!(r.is_degenerate());
        assert!(r.calib_p.is_none());
        assert!(InfluenceRecord::new("u", -1.0, 1.0, None).is_err());
    }

    proptest! {
        #[test]
        fn loss_is_symmetric_and_nonnegative(
            a in prop::collection::vec(-10.0f64..10.0, 3),
            t in prop::collection::vec(-10.0f64..10.0, 3),
            f in prop::collection::vec(-2.0f64..2.0, 9),
        ) {
            let factor = DMatrix::from_row_slice(3, 3, &f) + DMatrix::identity(3, 3) * 5.0;
            let loss = LossSpec::new(factor).unwrap();
            let l1 = quadratic_loss(&av(&a), &av(&t), &loss).unwrap();
            let l2 = quadratic_loss(&av(&t), &av(&a), &loss).unwrap();
            prop_assert!(l1 >= 0.0);
            prop_assert!((l1 - l2).abs() <= 1e-12 * l1.max(1.0));
            let d = av(&a).into_inner() - av(&t).into_inner();
            let via_q = (d.transpose() * loss.metric() * &d)[(0, 0)];
            prop_assert!((l1 - via_q).abs() <= 1e-12 * l1.max(1e-300));
            if a != t { prop_assert!(l1 > 0.0); }
        }

        #[test]
        fn record_product_identity(retro in 0.0f64..1e3, pro in 1e-6f64..1e3) {
            let r = InfluenceRecord::new("u", retro, pro, Some(3)).unwrap();
            prop_assert!(r.satisfies_product_identity(1e-12));
            let p = r.calib_p.unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }
}
