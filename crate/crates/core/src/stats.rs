//! Small statistical helpers shared by the estimators and the calibration checks.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Result, VoiError};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the `n - 1` divisor. Zero for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Standard error of the mean of `xs` from `batches` contiguous batch means.
///
/// Trailing values that do not fill a batch are dropped from the MCSE (not
/// from the mean the caller reports). Falls back to fewer batches when there
/// are not enough values.
pub fn batch_means_mcse(xs: &[f64], batches: usize) -> f64 {
    let b = batches.min(xs.len());
    if b < 2 {
        return 0.0;
    }
    let size = xs.len() / b;
    let means: Vec<f64> = xs.chunks_exact(size).take(b).map(mean).collect();
    (sample_variance(&means) / b as f64).sqrt()
}

/// Jackknife standard error of `estimator` over `groups` replicate blocks.
pub fn jackknife_se<T, F>(groups: &[T], estimator: F) -> f64
where
    F: Fn(&[&T]) -> f64,
{
    let g = groups.len();
    if g < 2 {
        return 0.0;
    }
    let leave_out: Vec<f64> = (0..g)
        .map(|skip| {
            let kept: Vec<&T> = groups
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != skip)
                .map(|(_, x)| x)
                .collect();
            estimator(&kept)
        })
        .collect();
    let m = mean(&leave_out);
    let ss: f64 = leave_out.iter().map(|x| (x - m).powi(2)).sum();
    ((g - 1) as f64 / g as f64 * ss).sqrt()
}

/// Upper tail `P(X > x)` of a chi-square variable with `dof` degrees of freedom.
pub fn chi2_sf(x: f64, dof: usize) -> Result<f64> {
    if dof == 0 {
        return Err(VoiError::InvalidArgument(
            "chi-square degrees of freedom must be at least 1".into(),
        ));
    }
    if x <= 0.0 {
        return Ok(1.0);
    }
    let dist = ChiSquared::new(dof as f64)
        .map_err(|e| VoiError::InvalidArgument(format!("chi-square: {e}")))?;
    Ok(dist.sf(x))
}

pub fn chi2_cdf(x: f64, dof: usize) -> Result<f64> {
    Ok(1.0 - chi2_sf(x, dof)?)
}

/// Two-sided Kolmogorov–Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let lo = f - i as f64 / n;
            let hi = (i + 1) as f64 / n - f;
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of the KS statistic `d` for `n` samples (Stephens' correction).
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let en = (n as f64).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64).powi(2) * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Split-chain potential scale reduction factor.
///
/// Each chain is cut in half; the statistic compares between- and
/// within-half variances. Returns 1.0 when the within variance vanishes.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let halves: Vec<&[f64]> = chains
        .iter()
        .filter(|c| c.len() >= 4)
        .flat_map(|c| {
            let h = c.len() / 2;
            [&c[..h], &c[c.len() - h..]]
        })
        .collect();
    if halves.len() < 2 {
        return 1.0;
    }
    let n = halves.iter().map(|h| h.len()).min().unwrap_or(0) as f64;
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let w = mean(&halves.iter().map(|h| sample_variance(h)).collect::<Vec<_>>());
    let b_over_n = sample_variance(&means);
    if w <= 0.0 {
        return 1.0;
    }
    let var_plus = (n - 1.0) / n * w + b_over_n;
    (var_plus / w).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    // P(chi2_1 > x) = erfc(sqrt(x / 2)); independent of the gamma-function path.
    fn chi2_1_sf_by_erfc(x: f64) -> f64 {
        statrs::function::erf::erfc((x / 2.0).sqrt())
    }

    // Composite Simpson quadrature of the chi-square density on [0, x].
    fn chi2_cdf_by_quadrature(x: f64, k: usize) -> f64 {
        let half = k as f64 / 2.0;
        let norm = 2f64.powf(half) * statrs::function::gamma::gamma(half);
        let pdf = |t: f64| {
            if t <= 0.0 {
                0.0
            } else {
                t.powf(half - 1.0) * (-t / 2.0).exp() / norm
            }
        };
        let m = 20_000;
        let h = x / m as f64;
        let mut s = pdf(0.0) + pdf(x);
        for i in 1..m {
            s += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn chi2_tail_matches_oracles() {
        // Frozen from the oracles above (scipy agrees): 0.3173105078629, 0.4288798575531.
        // statrs' erfc is good to about 3e-11.
        assert!((chi2_sf(1.0, 1).unwrap() - chi2_1_sf_by_erfc(1.0)).abs() < 1e-10);
        assert!((chi2_sf(1.0, 1).unwrap() - 0.317_310_507_862_9).abs() < 1e-10);
        let q7 = 1.0 - chi2_cdf_by_quadrature(7.0, 7);
        assert!((chi2_sf(7.0, 7).unwrap() - q7).abs() < 1e-9);
        assert!((chi2_sf(7.0, 7).unwrap() - 0.428_879_857_553_1).abs() < 1e-10);
        // Even degrees: P(chi2_2 > x) = exp(-x/2).
        assert!((chi2_sf(4.0, 2).unwrap() - (-2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn chi2_edge_cases() {
        assert_eq!(chi2_sf(0.0, 3).unwrap(), 1.0);
        assert!(chi2_sf(1.0, 0).is_err());
    }

    #[test]
    fn ks_detects_a_shift() {
        let n = 1000;
        let uniform: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&uniform, |x| x.clamp(0.0, 1.0));
        assert!(d <= 0.5 / n as f64 + 1e-12);
        assert!(ks_p_value(d, n) > 0.99);
        let shifted: Vec<f64> = uniform.iter().map(|x| x * 0.8).collect();
        let d = ks_statistic(&shifted, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.2).abs() < 1e-3);
        assert!(ks_p_value(d, n) < 1e-10);
    }

    #[test]
    fn ks_p_value_reference_point() {
        // Kolmogorov distribution: P(K > 1.36) ≈ 0.0494 (large-n critical value at 5%).
        let n = 1_000_000;
        let d = 1.358 / (n as f64).sqrt();
        assert!((ks_p_value(d, n) - 0.05).abs() < 1e-3);
    }

    #[test]
    fn batch_means_of_iid_constants() {
        assert_eq!(batch_means_mcse(&[2.0; 100], 20), 0.0);
        let alternating: Vec<f64> = (0..40).map(|i| (i % 2) as f64).collect();
        assert_eq!(batch_means_mcse(&alternating, 20), 0.0);
    }

    #[test]
    fn rhat_is_one_for_identical_halves() {
        let chain: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64).collect();
        let mut doubled = chain.clone();
        doubled.extend(&chain);
        let r = split_rhat(&[doubled.clone(), doubled]);
        assert!((r - 1.0).abs() < 0.01);
        let stuck = vec![vec![0.0, 0.1, 0.0, 0.1], vec![5.0, 5.1, 5.0, 5.1]];
        assert!(split_rhat(&stuck) > 10.0);
    }

    #[test]
    fn jackknife_of_mean_is_standard_error() {
        let xs = [1.0, 2.0, 4.0, 7.0, 11.0];
        let se = jackknife_se(&xs, |kept| kept.iter().copied().sum::<f64>() / kept.len() as f64);
        let expected = (sample_variance(&xs) / xs.len() as f64).sqrt();
        assert!((se - expected).abs() < 1e-12);
    }
}
