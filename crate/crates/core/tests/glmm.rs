use evoir_core::glmm::{
    mcmc_sample, site_influence, ClinicData, ClinicObservation, GlmmInfluenceConfig, GlmmModel, GlmmParams,
    GlmmSampler, McmcConfig, Priors, SyntheticSpec,
};
use evoir_core::mc::{prospective_evsi_knn, prospective_evsi_naive, MetaModelConfig, PosteriorSampler, SeedPlan};
use evoir_core::{quadratic_loss, stats, ActionVector, LossSpec};

fn obs(region: &str, site: &str, year: i32, tested: u64, positive: u64) -> ClinicObservation {
    ClinicObservation {
        region: region.into(),
        site: site.into(),
        year,
        tested,
        positive,
    }
}

fn short(chains: usize, burn: usize, draws_per_chain: usize, thin: usize) -> McmcConfig {
    McmcConfig {
        chains,
        iterations: burn + draws_per_chain * thin,
        burn_in: burn,
        thin,
        ..McmcConfig::default()
    }
}

fn quantile(xs: &mut [f64], q: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let pos = q * (xs.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    xs[lo] + (pos - lo as f64) * (xs[hi] - xs[lo])
}

#[test]
fn intervals_cover_generating_parameters() {
    let spec = SyntheticSpec {
        outlier: None,
        ..SyntheticSpec::default()
    };
    let config = short(2, 1500, 500, 3);
    let (mut covered, mut total) = (0usize, 0usize);
    for run in 0..20u64 {
        let synth = spec.generate(1000 + run).unwrap();
        let model = GlmmModel::new(synth.clinic_data().unwrap(), Priors::default(), None).unwrap();
        let out = mcmc_sample(&model, &config, run).unwrap();
        let truth = &synth.truth;
        let mut check = |f: &dyn Fn(&GlmmParams) -> f64| {
            let mut xs: Vec<f64> = out.draws().map(f).collect();
            let (lo, hi) = (quantile(&mut xs, 0.025), quantile(&mut xs, 0.975));
            let t = f(truth);
            covered += usize::from(lo <= t && t <= hi);
            total += 1;
        };
        check(&|p| p.mu);
        for r in 1..4 {
            check(&|p| p.alpha[r]);
        }
        for j in 0..3 {
            check(&|p| p.beta[j]);
        }
        for s in 0..17 {
            check(&|p| p.gamma[s]);
        }
        check(&|p| p.tau2);
    }
    let rate = covered as f64 / total as f64;
    assert!(rate >= 0.9, "coverage {rate}");
}

#[test]
fn empty_site_years_change_nothing() {
    let synth = SyntheticSpec::default().generate(3).unwrap();
    let with = ClinicData::new(&synth.observations).unwrap();
    let kept: Vec<_> = synth.observations.iter().filter(|o| o.tested > 0).cloned().collect();
    assert_eq!(kept.len() + 1, synth.observations.len());
    let without = ClinicData::new(&kept).unwrap();
    let config = short(2, 200, 50, 2);
    for exclude in [None, Some(2)] {
        let a = mcmc_sample(&GlmmModel::new(with.clone(), Priors::default(), exclude).unwrap(), &config, 9).unwrap();
        let b = mcmc_sample(&GlmmModel::new(without.clone(), Priors::default(), exclude).unwrap(), &config, 9).unwrap();
        assert_eq!(a.first_draws(100), b.first_draws(100));
    }
}

#[test]
fn predictive_positives_follow_the_tower_property() {
    let synth = SyntheticSpec::default().generate(5).unwrap();
    let data = synth.clinic_data().unwrap();
    let sampler = GlmmSampler::new(data.clone(), Priors::default(), short(2, 1000, 1000, 2)).unwrap();
    let unit = 6;
    let comps = sampler.predictive_draws(unit, 21, 2000).unwrap();
    let rows: Vec<_> = data.site_rows(unit).copied().collect();
    let region = data.site_region(unit);
    let years = data.n_years();
    for (j, row) in rows.iter().enumerate() {
        let ys: Vec<f64> = comps.iter().map(|c| c.block[j]).collect();
        if row.tested == 0 {
            assert!(ys.iter().all(|y| *y == 0.0));
            continue;
        }
        let rate: Vec<f64> = ys.iter().map(|y| y / row.tested as f64).collect();
        let m = stats::mean(&rate);
        assert!(m > 0.0 && m < 1.0);
        // Site effects add spread on the logit scale, so the target prevalence is only a
        // first-order check; the exact check integrates the same γ draws below.
        let target: Vec<f64> = comps.iter().map(|c| c.target[region * years + row.year]).collect();
        assert!((m - stats::mean(&target)).abs() < 0.03);
    }
    // Exact version: E(Y/N) equals the average of the conditional success probabilities.
    let run = sampler.run(Some(unit), 21, 2000).unwrap();
    let model = GlmmModel::new(data.clone(), Priors::default(), Some(unit)).unwrap();
    let j = rows.iter().position(|r| r.tested > 0).unwrap();
    let row = rows[j];
    let ys: Vec<f64> = comps.iter().map(|c| c.block[j] / row.tested as f64).collect();
    // Rao–Blackwellise over the γ draw with a fine quadrature.
    let probs: Vec<f64> = run
        .first_draws(2000)
        .iter()
        .map(|p| {
            let eta = p.mu + p.alpha[region] + model.basis().trend(&p.beta)[row.year];
            let sd = p.tau2.sqrt();
            let k = 200;
            (0..k)
                .map(|i| {
                    let z = -6.0 + 12.0 * (i as f64 + 0.5) / k as f64;
                    let w = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt() * 12.0 / k as f64;
                    w * evoir_core::glmm::logistic(eta + sd * z)
                })
                .sum::<f64>()
        })
        .collect();
    let mcse = stats::batch_means_mcse(&ys, 20);
    assert!((stats::mean(&ys) - stats::mean(&probs)).abs() < 3.0 * mcse + 1e-4);
}

#[test]
fn vanishing_site_variance_collapses_predictive_spread() {
    let data = ClinicData::new(&[
        obs("A", "known", 2002, 40, 12),
        obs("A", "known", 2004, 40, 15),
        obs("A", "known", 2006, 40, 13),
        obs("A", "new", 2002, 100_000, 30_000),
        obs("A", "new", 2004, 100_000, 30_000),
        obs("A", "new", 2006, 100_000, 30_000),
    ])
    .unwrap();
    let tight = Priors {
        tau2_shape: 1000.0,
        tau2_scale: 1e-6,
        ..Priors::default()
    };
    let config = short(2, 2000, 2000, 5);
    // Returns Var(Y/N) / Var(π) net of binomial noise, and Var(Y/N − π) over that noise.
    let spread = |priors: Priors| {
        let sampler = GlmmSampler::new(data.clone(), priors, config).unwrap();
        let comps = sampler.predictive_draws(1, 4, 4000).unwrap();
        let rate: Vec<f64> = comps.iter().map(|c| c.block[1] / 100_000.0).collect();
        let target: Vec<f64> = comps.iter().map(|c| c.target[1]).collect();
        let binom: f64 = stats::mean(&target.iter().map(|p| p * (1.0 - p)).collect::<Vec<_>>()) / 100_000.0;
        let diff: Vec<f64> = rate.iter().zip(&target).map(|(r, t)| r - t).collect();
        (
            (stats::sample_variance(&rate) - binom) / stats::sample_variance(&target),
            stats::sample_variance(&diff) / binom,
        )
    };
    let (ratio, excess) = spread(tight);
    assert!((ratio - 1.0).abs() < 0.1, "ratio {ratio}");
    // Only binomial noise separates the prediction from the target.
    assert!((excess - 1.0).abs() < 0.15, "excess {excess}");
    let (_, loose) = spread(Priors {
        tau2_shape: 10.0,
        tau2_scale: 10.0 * 0.25,
        ..Priors::default()
    });
    assert!(loose > 100.0, "excess {loose}");
}

#[test]
fn loss_is_the_sum_of_squared_prevalence_errors() {
    let a = [0.31, 0.35, 0.4, 0.22];
    let b = [0.3, 0.37, 0.38, 0.25];
    let direct: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
    let via = quadratic_loss(
        &ActionVector::from_slice(&a).unwrap(),
        &ActionVector::from_slice(&b).unwrap(),
        &LossSpec::identity(4),
    )
    .unwrap();
    assert_eq!(direct, via);
}

#[test]
fn single_site_is_rejected() {
    let data = ClinicData::new(&[obs("A", "s", 2002, 10, 3), obs("A", "s", 2004, 10, 4)]).unwrap();
    assert!(site_influence(&data, &GlmmInfluenceConfig::default()).is_err());
}

#[test]
fn identical_sites_get_matching_records() {
    let mut rows = Vec::new();
    for site in ["twin 1", "twin 2", "other"] {
        for (t, year) in [2002, 2005, 2008].into_iter().enumerate() {
            let y = if site == "other" { 70 + 5 * t as u64 } else { 90 + 4 * t as u64 };
            rows.push(obs("A", site, year, 300, y));
        }
    }
    rows.push(obs("B", "b", 2002, 300, 60));
    rows.push(obs("B", "b", 2008, 300, 75));
    let data = ClinicData::new(&rows).unwrap();
    let mcmc = short(2, 1000, 500, 4);
    let config = GlmmInfluenceConfig {
        mcmc,
        draws: mcmc.total_draws(),
        seeds: SeedPlan::new(8, 10),
        ..GlmmInfluenceConfig::default()
    };
    let out = site_influence(&data, &config).unwrap();
    let (a, b) = (&out.sites[0].record, &out.sites[1].record);
    let close = |x: f64, y: f64, sx: f64, sy: f64| (x - y).abs() <= 3.0 * (sx * sx + sy * sy).sqrt();
    assert!(close(a.retrospective, b.retrospective, a.retro_mcse.unwrap(), b.retro_mcse.unwrap()));
    assert!(close(a.prospective, b.prospective, a.pro_mcse.unwrap(), b.pro_mcse.unwrap()));
    assert_eq!(out.diagnostics.len(), 10);
    assert!(out.sites.iter().all(|s| s.record.satisfies_product_identity(1e-12)));
}

#[test]
fn knn_agrees_with_nested_estimate_on_a_toy_model() {
    let data = ClinicData::new(&[
        obs("A", "a", 2002, 60, 20),
        obs("A", "a", 2005, 60, 26),
        obs("A", "a", 2008, 60, 30),
        obs("A", "b", 2002, 40, 10),
        obs("A", "b", 2005, 40, 15),
        obs("A", "b", 2008, 40, 14),
    ])
    .unwrap();
    let sampler = GlmmSampler::new(data, Priors::default(), short(2, 1000, 250, 8)).unwrap();
    let loss = LossSpec::identity(sampler.target_dim());
    let seeds = SeedPlan::new(2, 10);
    let naive = prospective_evsi_naive(
        &sampler,
        1,
        &loss,
        &MetaModelConfig {
            n_outer: 2000,
            n_inner: 500,
            ..MetaModelConfig::default()
        },
        &seeds,
    )
    .unwrap();
    let knn = prospective_evsi_knn(
        &sampler,
        1,
        &loss,
        &MetaModelConfig {
            n_outer: 16_000,
            replicates: 4,
            ..MetaModelConfig::default()
        },
        &seeds,
    )
    .unwrap();
    let rel = (knn.value - naive.value).abs() / naive.value;
    assert!(rel < 0.1, "knn {knn:?} naive {naive:?}");
}
