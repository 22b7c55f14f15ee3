//! Exact influence analysis for the normal linear model under the
//! noninformative prior `π(β, σ²) ∝ σ⁻²`.
//!
//! The loss is prediction error at the observed design, `Q = XᵀX`. With that
//! loss the retrospective EVSI of row `i` is `p S² D_i` (Cook's distance
//! `D_i`), the prospective EVSI is
//! `(n−p−1)/(n−p−3) · S²₋ᵢ · h_ii/(1−h_ii)`, and their ratio is
//! `(n−p−3)/(n−p−1) · t_i²` with `t_i` the externally studentized residual.

mod longley;
mod sampler;

pub use longley::longley;
pub use sampler::NormalInvChi2Sampler;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Result, VoiError};
use crate::voi::{self, ActionVector, InfluenceRecord, LossSpec};

/// Relative size of an `R` pivot below which a column counts as dependent.
const RANK_TOL: f64 = 1e-10;
/// Below this `1 − h_ii` the rank-one downdate is replaced by a refit.
const DOWNDATE_TOL: f64 = 1e-8;
/// Condition number of `XᵀX` above which a warning is logged.
const CONDITION_WARN: f64 = 1e10;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub row_labels: Vec<String>,
    pub column_names: Vec<String>,
}

impl RegressionData {
    pub fn new(
        x: DMatrix<f64>,
        y: DVector<f64>,
        row_labels: Vec<String>,
        column_names: Vec<String>,
    ) -> Result<Self> {
        let (n, p) = x.shape();
        if y.len() != n {
            return Err(VoiError::DimensionMismatch {
                expected: n,
                found: y.len(),
            });
        }
        if row_labels.len() != n {
            return Err(VoiError::DimensionMismatch {
                expected: n,
                found: row_labels.len(),
            });
        }
        if column_names.len() != p {
            return Err(VoiError::DimensionMismatch {
                expected: p,
                found: column_names.len(),
            });
        }
        if n == 0 || p == 0 {
            return Err(VoiError::Data("regression data is empty".into()));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(VoiError::NonFinite("regression data"));
        }
        Ok(Self {
            x,
            y,
            row_labels,
            column_names,
        })
    }

    /// Builds a design from predictor columns, optionally prepending an intercept.
    pub fn from_predictors(
        predictors: &[Vec<f64>],
        predictor_names: &[String],
        response: Vec<f64>,
        row_labels: Vec<String>,
        intercept: bool,
    ) -> Result<Self> {
        let n = response.len();
        let mut columns: Vec<&[f64]> = Vec::new();
        let ones = vec![1.0; n];
        let mut names = Vec::new();
        if intercept {
            columns.push(&ones);
            names.push("(Intercept)".to_string());
        }
        for (col, name) in predictors.iter().zip(predictor_names) {
            if col.len() != n {
                return Err(VoiError::DimensionMismatch {
                    expected: n,
                    found: col.len(),
                });
            }
            columns.push(col);
            names.push(name.clone());
        }
        let x = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
        Self::new(x, DVector::from_vec(response), row_labels, names)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn without_row(&self, i: usize) -> (DMatrix<f64>, DVector<f64>) {
        (self.x.clone().remove_row(i), self.y.clone().remove_row(i))
    }
}

/// Least-squares summaries from a Householder QR of `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub beta_hat: DVector<f64>,
    /// `S² = RSS / (n − p)`.
    pub s2: f64,
    pub gram_inv: DMatrix<f64>,
    pub hat_diag: DVector<f64>,
    pub residuals: DVector<f64>,
    /// Thin `Q` (`n × p`); `H = QQᵀ`.
    pub q: DMatrix<f64>,
    /// `R⁻¹`, so that `(XᵀX)⁻¹ = R⁻¹R⁻ᵀ`.
    pub r_inv: DMatrix<f64>,
    pub gram_condition: f64,
}

impl RegressionFit {
    pub fn n(&self) -> usize {
        self.residuals.len()
    }

    pub fn p(&self) -> usize {
        self.beta_hat.len()
    }

    pub fn rss(&self) -> f64 {
        self.residuals.norm_squared()
    }

    pub fn hat_entry(&self, i: usize, j: usize) -> f64 {
        self.q.row(i).dot(&self.q.row(j))
    }

    pub fn hat_matrix(&self) -> DMatrix<f64> {
        &self.q * self.q.transpose()
    }
}

struct Qr {
    q: DMatrix<f64>,
    r_inv: DMatrix<f64>,
    singular: (f64, f64),
}

fn factor(x: &DMatrix<f64>, column_names: Option<&[String]>) -> Result<Qr> {
    let (n, p) = x.shape();
    if n < p {
        return Err(VoiError::RankDeficient {
            pivot: n,
            column: column_names
                .and_then(|c| c.get(n).cloned())
                .unwrap_or_else(|| n.to_string()),
        });
    }
    let qr = x.clone().qr();
    let r = qr.r();
    for j in 0..p {
        let col_norm = x.column(j).norm();
        if col_norm == 0.0 || r[(j, j)].abs() <= RANK_TOL * col_norm {
            return Err(VoiError::RankDeficient {
                pivot: j,
                column: column_names
                    .and_then(|c| c.get(j).cloned())
                    .unwrap_or_else(|| j.to_string()),
            });
        }
    }
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or(VoiError::RankDeficient {
            pivot: p - 1,
            column: (p - 1).to_string(),
        })?;
    let sv = r.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    Ok(Qr {
        q: qr.q(),
        r_inv,
        singular: (smax, smin),
    })
}

/// Fits `y` on `x` by least squares.
pub fn fit(data: &RegressionData) -> Result<RegressionFit> {
    fit_matrices(&data.x, &data.y, Some(&data.column_names))
}

fn fit_matrices(x: &DMatrix<f64>, y: &DVector<f64>, names: Option<&[String]>) -> Result<RegressionFit> {
    let (n, p) = x.shape();
    let qr = factor(x, names)?;
    if n == p {
        return Err(VoiError::Data(format!(
            "need more observations than coefficients (n = p = {n})"
        )));
    }
    let beta_hat = &qr.r_inv * (qr.q.transpose() * y);
    let residuals = y - x * &beta_hat;
    let s2 = residuals.norm_squared() / (n - p) as f64;
    let gram_inv = &qr.r_inv * qr.r_inv.transpose();
    let hat_diag = DVector::from_fn(n, |i, _| qr.q.row(i).norm_squared());
    let gram_condition = (qr.singular.0 / qr.singular.1).powi(2);
    if gram_condition > CONDITION_WARN {
        log::warn!("XᵀX is ill-conditioned (condition number {gram_condition:.3e})");
    }
    Ok(RegressionFit {
        beta_hat,
        s2,
        gram_inv,
        hat_diag,
        residuals,
        q: qr.q,
        r_inv: qr.r_inv,
        gram_condition,
    })
}

/// `Xᵢ(Xᵀ₋ᵢX₋ᵢ)⁻¹Xᵢᵀ = h_ii / (1 − h_ii)` by Sherman–Morrison–Woodbury.
pub fn loo_leverage_identity(fit: &RegressionFit, i: usize) -> Result<f64> {
    let h = *fit
        .hat_diag
        .get(i)
        .ok_or_else(|| VoiError::UnknownUnit(i.to_string()))?;
    if !(1.0 - h > 1e-12) {
        return Err(VoiError::ExactFitPoint { index: i });
    }
    Ok(h / (1.0 - h))
}

/// Leave-one-out summaries for one row.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaveOneOut {
    pub beta: DVector<f64>,
    /// `S²₋ᵢ` with divisor `n − 1 − p`.
    pub s2: f64,
    /// `Xᵢ(Xᵀ₋ᵢX₋ᵢ)⁻¹Xᵢᵀ`.
    pub leverage_ratio: f64,
}

/// Data with its fit, the prediction loss `Q = XᵀX`, and the per-row measures.
#[derive(Debug, Clone)]
pub struct LinregAnalysis {
    data: RegressionData,
    fit: RegressionFit,
    loss: LossSpec,
}

impl LinregAnalysis {
    pub fn new(data: &RegressionData) -> Result<Self> {
        let fit = fit(data)?;
        let loss = LossSpec::new(data.x.clone())?;
        Ok(Self {
            data: data.clone(),
            fit,
            loss,
        })
    }

    pub fn data(&self) -> &RegressionData {
        &self.data
    }

    pub fn fit(&self) -> &RegressionFit {
        &self.fit
    }

    pub fn loss(&self) -> &LossSpec {
        &self.loss
    }

    fn check_row(&self, i: usize) -> Result<()> {
        if i >= self.data.n() {
            return Err(VoiError::UnknownUnit(i.to_string()));
        }
        Ok(())
    }

    fn loo_df(&self) -> Result<usize> {
        let (n, p) = (self.data.n(), self.data.p());
        if n < p + 2 {
            return Err(VoiError::Data(format!(
                "leave-one-out fits need n ≥ p + 2 (n = {n}, p = {p})"
            )));
        }
        Ok(n - 1 - p)
    }

    /// Leave-one-out fit by rank-one downdate, or by refitting when `1 − h_ii` is tiny.
    pub fn leave_one_out(&self, i: usize) -> Result<LeaveOneOut> {
        self.check_row(i)?;
        let df = self.loo_df()?;
        let h = self.fit.hat_diag[i];
        let e = self.fit.residuals[i];
        if 1.0 - h >= DOWNDATE_TOL {
            // (XᵀX)⁻¹xᵢ = R⁻¹R⁻ᵀxᵢ = R⁻¹qᵢ, which skips one ill-conditioned solve.
            let qi = self.fit.q.row(i).transpose();
            let beta = &self.fit.beta_hat - &self.fit.r_inv * qi * (e / (1.0 - h));
            let rss = (self.fit.rss() - e * e / (1.0 - h)).max(0.0);
            return Ok(LeaveOneOut {
                beta,
                s2: rss / df as f64,
                leverage_ratio: h / (1.0 - h),
            });
        }
        self.refit_without(i)
    }

    /// Leave-one-out fit by refitting from scratch.
    pub fn refit_without(&self, i: usize) -> Result<LeaveOneOut> {
        self.check_row(i)?;
        let df = self.loo_df()?;
        let (x, y) = self.data.without_row(i);
        let qr = factor(&x, None).map_err(|e| match e {
            VoiError::RankDeficient { .. } => VoiError::RankLossOnDeletion { index: i },
            other => other,
        })?;
        let beta = &qr.r_inv * (qr.q.transpose() * &y);
        let rss = (&y - &x * &beta).norm_squared();
        let xi = self.data.x.row(i).transpose();
        let u = qr.r_inv.transpose() * &xi;
        Ok(LeaveOneOut {
            beta,
            s2: rss / df as f64,
            leverage_ratio: u.norm_squared(),
        })
    }

    fn prospective_factor(&self) -> Result<f64> {
        let (n, p) = (self.data.n() as f64, self.data.p() as f64);
        if !(n - p - 3.0 > 0.0) {
            return Err(VoiError::Data(format!(
                "finite predictive variance needs n > p + 3 (n = {n}, p = {p})"
            )));
        }
        Ok((n - p - 1.0) / (n - p - 3.0))
    }

    /// `(β̂₋ᵢ − β̂)ᵀXᵀX(β̂₋ᵢ − β̂)`.
    pub fn retrospective_evsi(&self, i: usize) -> Result<f64> {
        let loo = self.leave_one_out(i)?;
        voi::retrospective_evsi(
            &ActionVector::new(loo.beta)?,
            &ActionVector::new(self.fit.beta_hat.clone())?,
            &self.loss,
        )
    }

    /// Classical Cook's distance, `e² h / (p S² (1 − h)²)`.
    pub fn cooks_distance(&self, i: usize) -> Result<f64> {
        self.check_row(i)?;
        if self.fit.s2 <= 0.0 {
            return Err(VoiError::ZeroResidualVariance);
        }
        let retro = self.retrospective_evsi(i)?;
        Ok(retro / (self.data.p() as f64 * self.fit.s2))
    }

    /// `(n−p−1)/(n−p−3) · S²₋ᵢ · Xᵢ(Xᵀ₋ᵢX₋ᵢ)⁻¹Xᵢᵀ`.
    pub fn prospective_evsi(&self, i: usize) -> Result<f64> {
        let factor = self.prospective_factor()?;
        let loo = self.leave_one_out(i)?;
        Ok(factor * loo.s2 * loo.leverage_ratio)
    }

    /// `tᵢ = eᵢ / (S₋ᵢ √(1 − h_ii))`, sign preserved.
    pub fn external_studentized_residual(&self, i: usize) -> Result<f64> {
        let loo = self.leave_one_out(i)?;
        let e = self.fit.residuals[i];
        let h = self.fit.hat_diag[i];
        if loo.s2 <= 0.0 {
            return if e == 0.0 {
                Ok(0.0)
            } else {
                Err(VoiError::ZeroResidualVariance)
            };
        }
        Ok(e / (loo.s2.sqrt() * (1.0 - h).sqrt()))
    }

    /// Ratio of the retrospective to the prospective EVSI.
    pub fn evoir(&self, i: usize) -> Result<f64> {
        voi::evoir(self.retrospective_evsi(i)?, self.prospective_evsi(i)?)
    }

    /// `(n−p−3)/(n−p−1) · tᵢ²`, the same ratio through the studentized residual.
    pub fn evoir_from_studentized(&self, i: usize) -> Result<f64> {
        let factor = self.prospective_factor()?;
        Ok(self.external_studentized_residual(i)?.powi(2) / factor)
    }

    pub fn row_influence(&self, i: usize) -> Result<RowInfluence> {
        let retro = self.retrospective_evsi(i)?;
        let pro = self.prospective_evsi(i)?;
        let record = InfluenceRecord::new(
            self.data.row_labels[i].clone(),
            retro,
            pro,
            Some(self.data.p()),
        )?;
        Ok(RowInfluence {
            record,
            cooks_distance: self.cooks_distance(i)?,
            leverage: self.fit.hat_diag[i],
            studentized: self.external_studentized_residual(i)?,
        })
    }

    pub fn influence_table(&self) -> Result<Vec<RowInfluence>> {
        (0..self.data.n())
            .into_par_iter()
            .map(|i| self.row_influence(i))
            .collect()
    }
}

/// One row of the regression influence table.
#[derive(Debug, Clone, PartialEq)]
pub struct RowInfluence {
    pub record: InfluenceRecord,
    pub cooks_distance: f64,
    pub leverage: f64,
    pub studentized: f64,
}

pub fn retrospective_evsi_exact(data: &RegressionData, i: usize) -> Result<f64> {
    LinregAnalysis::new(data)?.retrospective_evsi(i)
}

pub fn cooks_distance(data: &RegressionData, i: usize) -> Result<f64> {
    LinregAnalysis::new(data)?.cooks_distance(i)
}

pub fn prospective_evsi_exact(data: &RegressionData, i: usize) -> Result<f64> {
    LinregAnalysis::new(data)?.prospective_evsi(i)
}

pub fn evoir_exact(data: &RegressionData, i: usize) -> Result<f64> {
    LinregAnalysis::new(data)?.evoir(i)
}

pub fn external_studentized_residual(data: &RegressionData, i: usize) -> Result<f64> {
    LinregAnalysis::new(data)?.external_studentized_residual(i)
}

/// One record per row; calibration uses `p` degrees of freedom.
pub fn influence_table(data: &RegressionData) -> Result<Vec<RowInfluence>> {
    LinregAnalysis::new(data)?.influence_table()
}
