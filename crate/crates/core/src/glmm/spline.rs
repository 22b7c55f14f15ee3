use crate::error::{Result, VoiError};

/// Clamped knot vector of a cubic B-spline with no interior knots on `[0, 1]`.
const KNOTS: [f64; 8] = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
const DEGREE: usize = 3;

/// Trend covariates `X(t) ∈ ℝ³` for each year.
///
/// Years are mapped to `[0, 1]` over the observed range and expanded in the
/// four cubic B-splines on that interval. The first function is dropped so
/// that the trend carries no intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    years: Vec<i32>,
    rows: Vec<[f64; 3]>,
}

impl SplineBasis {
    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn rows(&self) -> &[[f64; 3]] {
        &self.rows
    }

    pub fn row(&self, year_index: usize) -> &[f64; 3] {
        &self.rows[year_index]
    }

    /// `X(t)ᵀβ` for every year.
    pub fn trend(&self, beta: &[f64; 3]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|x| x[0] * beta[0] + x[1] * beta[1] + x[2] * beta[2])
            .collect()
    }
}

/// Cox–de Boor recursion for basis function `i` of degree `k` at `u`.
fn cox_de_boor(knots: &[f64], i: usize, k: usize, u: f64) -> f64 {
    if k == 0 {
        return if knots[i] <= u && u < knots[i + 1] { 1.0 } else { 0.0 };
    }
    let mut out = 0.0;
    let left = knots[i + k] - knots[i];
    if left > 0.0 {
        out += (u - knots[i]) / left * cox_de_boor(knots, i, k - 1, u);
    }
    let right = knots[i + k + 1] - knots[i + 1];
    if right > 0.0 {
        out += (knots[i + k + 1] - u) / right * cox_de_boor(knots, i + 1, k - 1, u);
    }
    out
}

/// All four cubic basis functions at `u ∈ [0, 1]`.
pub fn cubic_basis(u: f64) -> [f64; 4] {
    let mut b = [0.0; 4];
    if u >= 1.0 {
        // The half-open recursion is zero at the right end; the limit from the left is e₄.
        b[3] = 1.0;
        return b;
    }
    for (i, v) in b.iter_mut().enumerate() {
        *v = cox_de_boor(&KNOTS, i, DEGREE, u);
    }
    b
}

/// Builds the trend basis for sorted distinct `years`.
pub fn spline_design(years: &[i32]) -> Result<SplineBasis> {
    if years.windows(2).any(|w| w[0] >= w[1]) {
        return Err(VoiError::InvalidArgument("years must be sorted and distinct".into()));
    }
    if years.len() < 2 {
        return Err(VoiError::Data(format!(
            "the trend needs at least 2 distinct years, got {}",
            years.len()
        )));
    }
    let (lo, hi) = (years[0] as f64, years[years.len() - 1] as f64);
    let rows = years
        .iter()
        .map(|&t| {
            let b = cubic_basis((t as f64 - lo) / (hi - lo));
            [b[1], b[2], b[3]]
        })
        .collect();
    Ok(SplineBasis {
        years: years.to_vec(),
        rows,
    })
}
