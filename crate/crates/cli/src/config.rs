//! Command-line flags, the optional TOML settings file, and their merge.
//!
//! Every setting can come from either source. A flag given on the command
//! line overrides the file, which overrides the built-in default. The file
//! has a `[run]` section for the shared settings and one section per command:
//!
//! ```toml
//! [run]
//! seed = 7
//! out_dir = "results"
//! format = ["csv", "text", "svg"]
//!
//! [glmm]
//! chains = 4
//! iterations = 20000
//! ```

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use evoir_core::glmm::{GlmmInfluenceConfig, McmcConfig, Priors, ProspectiveMethod};
use evoir_core::oracle::{ConjugateModel, Variance};
use evoir_core::{MetaModelConfig, SeedPlan};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "evoir", version, about = "Influence diagnostics from the expected value of sample information")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact per-row influence table for a linear regression.
    LinregInfluence {
        #[command(flatten)]
        common: RunSection,
        #[command(flatten)]
        linreg: LinregSection,
    },
    /// Monte Carlo per-site influence for the hierarchical clinic model.
    GlmmInfluence {
        #[command(flatten)]
        common: RunSection,
        #[command(flatten)]
        glmm: GlmmSection,
    },
    /// Simulation check of the ratio's calibration on the conjugate normal model.
    Calibrate {
        #[command(flatten)]
        common: RunSection,
        #[command(flatten)]
        calibrate: CalibrateSection,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Naive,
    Knn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Text,
    Svg,
}

macro_rules! overlay {
    ($flags:expr, $file:expr; $($field:ident),+ $(,)?) => {
        $( if $flags.$field.is_none() { $flags.$field = $file.$field.clone(); } )+
    };
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Input CSV; the bundled example data set is used when omitted.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// TOML settings file.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Prospective estimator for Monte Carlo models.
    #[arg(long, value_enum)]
    pub estimator: Option<Estimator>,
    /// Comma-separated output formats.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub format: Option<Vec<Format>>,
    /// Decimals for EVSI and Cook's distance in text tables.
    #[arg(long)]
    pub evsi_decimals: Option<usize>,
    /// Decimals for the ratio in text tables.
    #[arg(long)]
    pub evoir_decimals: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinregSection {
    /// Prepend an intercept column to the predictors.
    #[arg(long)]
    pub intercept: Option<bool>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlmmSection {
    #[arg(long)]
    pub chains: Option<usize>,
    /// Iterations per chain, burn-in included.
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// Independent replications of every estimate, used for the MCSE.
    #[arg(long)]
    pub seed_groups: Option<usize>,
    /// Neighbours of the kNN meta-model; defaults to the square root of the draw count.
    #[arg(long)]
    pub k_neighbors: Option<usize>,
    #[arg(long)]
    pub standardize: Option<bool>,
    /// Independent kNN estimates behind its MCSE.
    #[arg(long)]
    pub knn_replicates: Option<usize>,
    /// Inner posterior draws per outer draw on the nested path.
    #[arg(long)]
    pub n_inner: Option<usize>,
    #[arg(long)]
    pub common_random_numbers: Option<bool>,
    #[arg(long)]
    pub joint_fixed_block: Option<bool>,
    #[arg(long)]
    pub adapt_covariance: Option<bool>,
    #[arg(long)]
    pub translation_moves: Option<bool>,
    #[arg(long)]
    pub mu_var: Option<f64>,
    #[arg(long)]
    pub alpha_var: Option<f64>,
    #[arg(long)]
    pub beta_var: Option<f64>,
    #[arg(long)]
    pub tau2_shape: Option<f64>,
    #[arg(long)]
    pub tau2_scale: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateSection {
    #[arg(long)]
    pub replications: Option<usize>,
    /// Number of independent components of the decision target.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub prior_mean: Option<f64>,
    #[arg(long)]
    pub prior_var: Option<f64>,
    #[arg(long)]
    pub obs_var: Option<f64>,
    /// Observations in the retained block.
    #[arg(long)]
    pub n1: Option<usize>,
    /// Observations in the deleted block.
    #[arg(long)]
    pub n2: Option<usize>,
    /// Significance level of the Kolmogorov–Smirnov verdict.
    #[arg(long)]
    pub ks_level: Option<f64>,
    /// Standard errors allowed between the mean ratio and 1.
    #[arg(long)]
    pub mean_tolerance_se: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FileConfig {
    run: RunSection,
    linreg: LinregSection,
    glmm: GlmmSection,
    calibrate: CalibrateSection,
}

fn load_file(path: Option<&Path>) -> CliResult<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

/// Settings shared by every command after merging.
#[derive(Debug, Clone, PartialEq)]
pub struct Common {
    pub data: Option<PathBuf>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub estimator: Estimator,
    pub formats: Vec<Format>,
    pub evsi_decimals: usize,
    pub evoir_decimals: usize,
}

impl Common {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinregSettings {
    pub common: Common,
    pub intercept: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmmSettings {
    pub common: Common,
    pub influence: GlmmInfluenceConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrateSettings {
    pub common: Common,
    pub replications: usize,
    pub dim: usize,
    pub model: ConjugateModel,
    pub ks_level: f64,
    pub mean_tolerance_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Settings {
    Linreg(LinregSettings),
    Glmm(GlmmSettings),
    Calibrate(CalibrateSettings),
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn positive(name: &str, v: f64) -> CliResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(usage(format!("{name} must be positive and finite, got {v}")))
    }
}

fn at_least(name: &str, v: usize, min: usize) -> CliResult<usize> {
    if v >= min {
        Ok(v)
    } else {
        Err(usage(format!("{name} must be at least {min}, got {v}")))
    }
}

fn resolve_common(mut flags: RunSection, file: &RunSection, evsi_default: usize) -> CliResult<Common> {
    overlay!(flags, file; data, seed, out_dir, estimator, format, evsi_decimals, evoir_decimals);
    let mut formats = flags.format.unwrap_or_else(|| vec![Format::Csv, Format::Text]);
    formats.sort();
    formats.dedup();
    if formats.is_empty() {
        return Err(usage("at least one output format is needed"));
    }
    let evsi_decimals = flags.evsi_decimals.unwrap_or(evsi_default);
    let evoir_decimals = flags.evoir_decimals.unwrap_or(2);
    if evsi_decimals > 12 || evoir_decimals > 12 {
        return Err(usage("table decimals must be at most 12"));
    }
    Ok(Common {
        data: flags.data,
        seed: flags.seed.unwrap_or(0),
        out_dir: flags.out_dir.unwrap_or_else(|| PathBuf::from("evoir-out")),
        estimator: flags.estimator.unwrap_or(Estimator::Knn),
        formats,
        evsi_decimals,
        evoir_decimals,
    })
}

impl Command {
    /// Merges flags over the settings file over defaults and validates the result.
    pub fn resolve(self) -> CliResult<Settings> {
        match self {
            Command::LinregInfluence { common, mut linreg } => {
                let file = load_file(common.config.as_deref())?;
                overlay!(linreg, file.linreg; intercept);
                Ok(Settings::Linreg(LinregSettings {
                    common: resolve_common(common, &file.run, 3)?,
                    intercept: linreg.intercept.unwrap_or(true),
                }))
            }
            Command::GlmmInfluence { common, mut glmm } => {
                let file = load_file(common.config.as_deref())?;
                overlay!(glmm, file.glmm;
                    chains, iterations, burn_in, thin, seed_groups, k_neighbors, standardize, knn_replicates, n_inner,
                    common_random_numbers, joint_fixed_block, adapt_covariance, translation_moves,
                    mu_var, alpha_var, beta_var, tau2_shape, tau2_scale);
                let common = resolve_common(common, &file.run, 4)?;
                let influence = glmm_config(&glmm, &common)?;
                Ok(Settings::Glmm(GlmmSettings { common, influence }))
            }
            Command::Calibrate { common, mut calibrate } => {
                let file = load_file(common.config.as_deref())?;
                overlay!(calibrate, file.calibrate;
                    replications, dim, prior_mean, prior_var, obs_var, n1, n2, ks_level, mean_tolerance_se);
                let common = resolve_common(common, &file.run, 4)?;
                if common.data.is_some() {
                    return Err(usage("calibrate simulates its own data and takes no --data"));
                }
                calibrate_settings(&calibrate, common).map(Settings::Calibrate)
            }
        }
    }
}

fn glmm_config(s: &GlmmSection, common: &Common) -> CliResult<GlmmInfluenceConfig> {
    let d = McmcConfig::default();
    let mcmc = McmcConfig {
        chains: at_least("chains", s.chains.unwrap_or(d.chains), 1)?,
        iterations: s.iterations.unwrap_or(d.iterations),
        burn_in: s.burn_in.unwrap_or(d.burn_in),
        thin: at_least("thin", s.thin.unwrap_or(d.thin), 1)?,
        joint_fixed_block: s.joint_fixed_block.unwrap_or(d.joint_fixed_block),
        adapt_covariance: s.adapt_covariance.unwrap_or(d.adapt_covariance),
        translation_moves: s.translation_moves.unwrap_or(d.translation_moves),
    };
    mcmc.validate()?;
    let draws = at_least("posterior draws per run", mcmc.total_draws(), 2)?;
    let p = Priors::default();
    let priors = Priors {
        mu_var: positive("mu_var", s.mu_var.unwrap_or(p.mu_var))?,
        alpha_var: positive("alpha_var", s.alpha_var.unwrap_or(p.alpha_var))?,
        beta_var: positive("beta_var", s.beta_var.unwrap_or(p.beta_var))?,
        tau2_shape: positive("tau2_shape", s.tau2_shape.unwrap_or(p.tau2_shape))?,
        tau2_scale: positive("tau2_scale", s.tau2_scale.unwrap_or(p.tau2_scale))?,
    };
    let m = MetaModelConfig::default();
    if let Some(k) = s.k_neighbors {
        at_least("k_neighbors", k, 1)?;
        if k > draws {
            return Err(usage(format!("k_neighbors ({k}) exceeds the {draws} posterior draws per run")));
        }
    }
    let meta = MetaModelConfig {
        k_neighbors: s.k_neighbors,
        standardize: s.standardize.unwrap_or(m.standardize),
        n_outer: draws,
        n_inner: at_least("n_inner", s.n_inner.unwrap_or(m.n_inner), 2)?,
        replicates: at_least("knn_replicates", s.knn_replicates.unwrap_or(m.replicates), 2)?,
        ..m
    };
    let groups = at_least("seed_groups", s.seed_groups.unwrap_or(SeedPlan::default().groups), 2)?;
    let seeds = SeedPlan {
        common_random_numbers: s.common_random_numbers.unwrap_or(true),
        ..SeedPlan::new(common.seed, groups)
    };
    Ok(GlmmInfluenceConfig {
        priors,
        mcmc,
        draws,
        seeds,
        meta,
        method: match common.estimator {
            Estimator::Knn => ProspectiveMethod::Knn,
            Estimator::Naive => ProspectiveMethod::Naive,
        },
    })
}

fn calibrate_settings(s: &CalibrateSection, common: Common) -> CliResult<CalibrateSettings> {
    let replications = s.replications.unwrap_or(5000);
    if replications == 0 {
        return Err(usage("replications must be at least 1"));
    }
    let dim = s.dim.unwrap_or(1);
    if !(1..=1000).contains(&dim) {
        return Err(usage(format!("dim must be between 1 and 1000, got {dim}")));
    }
    let prior_mean = s.prior_mean.unwrap_or(0.0);
    if !prior_mean.is_finite() {
        return Err(usage("prior_mean must be finite"));
    }
    let model = ConjugateModel::new(
        prior_mean,
        Variance::Finite(positive("prior_var", s.prior_var.unwrap_or(1.0))?),
        Variance::Finite(positive("obs_var", s.obs_var.unwrap_or(1.0))?),
        s.n1.unwrap_or(1),
        at_least("n2", s.n2.unwrap_or(1), 1)?,
    )?;
    let ks_level = s.ks_level.unwrap_or(0.01);
    if !(ks_level > 0.0 && ks_level < 1.0) {
        return Err(usage(format!("ks_level must lie in (0, 1), got {ks_level}")));
    }
    Ok(CalibrateSettings {
        common,
        replications,
        dim,
        model,
        ks_level,
        mean_tolerance_se: positive("mean_tolerance_se", s.mean_tolerance_se.unwrap_or(3.0))?,
    })
}
