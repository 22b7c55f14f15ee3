//! The three commands: compute in memory, then render every requested file.

use std::fmt::Write as _;
use std::path::Path;

use evoir_core::glmm::site_influence;
use evoir_core::linreg::LinregAnalysis;
use evoir_core::oracle::DiagonalOracle;
use evoir_core::{stats, InfluenceRecord};

use crate::config::{CalibrateSettings, Common, Format, GlmmSettings, LinregSettings, Settings};
use crate::error::{CliError, CliResult};
use crate::input;
use crate::report::{self, LinregRow, PlotData, SiteRow};

/// Units labelled in the scatter plot.
const FLAGGED: usize = 3;
const RHAT_WARN: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

/// Everything a command produced, before anything touches the disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<OutputFile>,
    pub records: Vec<InfluenceRecord>,
    /// Printed to standard output.
    pub summary: String,
}

impl Outcome {
    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|f| f.name == name).map(|f| f.contents.as_str())
    }

    /// Writes the files in order into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path) -> CliResult<()> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
        for f in &self.files {
            let path = dir.join(&f.name);
            std::fs::write(&path, &f.contents)
                .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
        }
        Ok(())
    }
}

pub fn execute(settings: &Settings) -> CliResult<Outcome> {
    match settings {
        Settings::Linreg(s) => run_linreg_influence(s),
        Settings::Glmm(s) => run_glmm_influence(s),
        Settings::Calibrate(s) => run_calibrate(s),
    }
}

fn push(files: &mut Vec<OutputFile>, name: &str, contents: String) {
    files.push(OutputFile {
        name: name.to_string(),
        contents,
    });
}

fn plot_files(files: &mut Vec<OutputFile>, common: &Common, stem: &str, records: &[InfluenceRecord], title: &str) -> CliResult<()> {
    let plot = PlotData::new(records, FLAGGED);
    if common.wants(Format::Csv) {
        push(files, &format!("{stem}_plot.csv"), plot.points_csv()?);
        push(files, &format!("{stem}_contours.csv"), plot.contours_csv()?);
    }
    if common.wants(Format::Svg) {
        push(files, &format!("{stem}_plot.svg"), plot.svg(title));
    }
    Ok(())
}

pub fn run_linreg_influence(s: &LinregSettings) -> CliResult<Outcome> {
    let (text, source) = input::read_source(s.common.data.as_deref(), input::BUNDLED_LONGLEY)?;
    let data = input::parse_regression(&text, s.intercept).map_err(|e| e.context(&source))?;
    let analysis = LinregAnalysis::new(&data)?;
    let rows: Vec<LinregRow> = analysis
        .influence_table()?
        .into_iter()
        .map(|r| LinregRow {
            record: r.record,
            cooks_distance: r.cooks_distance,
        })
        .collect();
    let records: Vec<InfluenceRecord> = rows.iter().map(|r| r.record.clone()).collect();

    let mut files = Vec::new();
    let table = report::linreg_text(&rows, s.common.evsi_decimals, s.common.evoir_decimals);
    if s.common.wants(Format::Csv) {
        push(&mut files, "linreg_influence.csv", report::linreg_csv(&rows)?);
    }
    if s.common.wants(Format::Text) {
        push(&mut files, "linreg_influence.txt", table.clone());
    }
    plot_files(&mut files, &s.common, "linreg", &records, "Regression influence")?;
    Ok(Outcome {
        files,
        records,
        summary: table,
    })
}

pub fn run_glmm_influence(s: &GlmmSettings) -> CliResult<Outcome> {
    let (text, source) = input::read_source(s.common.data.as_deref(), input::BUNDLED_CLINICS)?;
    let data = input::parse_clinics(&text).map_err(|e| e.context(&source))?;
    let cfg = &s.influence;
    log::info!(
        "{} sites, {} chains x {} iterations, {} seed groups",
        data.n_sites(),
        cfg.mcmc.chains,
        cfg.mcmc.iterations,
        cfg.seeds.groups
    );
    let result = site_influence(&data, cfg)?;
    let rows: Vec<SiteRow> = result
        .sites
        .iter()
        .map(|site| SiteRow {
            record: site.record.clone(),
            region: site.region.clone(),
        })
        .collect();
    let records: Vec<InfluenceRecord> = rows.iter().map(|r| r.record.clone()).collect();

    let mut diag = String::new();
    let _ = writeln!(
        diag,
        "chains {}  iterations {}  burn-in {}  thin {}  draws per run {}",
        cfg.mcmc.chains, cfg.mcmc.iterations, cfg.mcmc.burn_in, cfg.mcmc.thin, cfg.draws
    );
    for run in &result.diagnostics {
        let _ = writeln!(diag, "\nfull-data run, seed group {}", run.seed_group);
        for b in &run.acceptance {
            let _ = writeln!(diag, "  acceptance {:<14} {:.3}", b.block, b.rate);
        }
        if let Some((name, worst)) = run.rhat.iter().max_by(|a, b| a.1.total_cmp(&b.1)) {
            let _ = writeln!(diag, "  max split R-hat {worst:.4} ({name})");
        }
        let high: Vec<&str> = run.rhat.iter().filter(|r| r.1 > RHAT_WARN).map(|r| r.0.as_str()).collect();
        if !high.is_empty() {
            log::warn!("seed group {}: R-hat above {RHAT_WARN} for {}", run.seed_group, high.join(", "));
            let _ = writeln!(diag, "  WARNING R-hat above {RHAT_WARN}: {}", high.join(", "));
        }
    }
    let worst_mcse = records
        .iter()
        .flat_map(|r| [r.retro_mcse, r.pro_mcse])
        .flatten()
        .fold(0.0, f64::max);
    let _ = writeln!(diag, "\nlargest EVSI MCSE {worst_mcse:.2e}");

    let mut files = Vec::new();
    let table = report::glmm_text(&rows, s.common.evsi_decimals, s.common.evoir_decimals);
    if s.common.wants(Format::Csv) {
        push(&mut files, "glmm_influence.csv", report::glmm_csv(&rows)?);
    }
    if s.common.wants(Format::Text) {
        push(&mut files, "glmm_influence.txt", table.clone());
    }
    push(&mut files, "glmm_diagnostics.txt", diag);
    plot_files(&mut files, &s.common, "glmm", &records, "Clinic influence")?;
    Ok(Outcome {
        files,
        records,
        summary: table,
    })
}

/// Summary statistics of a calibration run.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSummary {
    pub mean_evoir: f64,
    pub se: f64,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub mean_ok: bool,
    pub ks_ok: bool,
}

pub fn calibration_summary(s: &CalibrateSettings, records: &[InfluenceRecord]) -> CliResult<CalibrationSummary> {
    let ratios: Vec<f64> = records.iter().filter_map(|r| r.evoir).collect();
    if ratios.len() != records.len() {
        return Err(CliError::Numerical("a replication had zero prospective EVSI".into()));
    }
    let n = ratios.len();
    let mean_evoir = stats::mean(&ratios);
    let se = if n > 1 {
        (stats::sample_variance(&ratios) / n as f64).sqrt()
    } else {
        f64::NAN
    };
    let scaled: Vec<f64> = ratios.iter().map(|r| r * s.dim as f64).collect();
    // chi2_cdf only fails on a zero dimension, which validation rules out.
    let ks_statistic = stats::ks_statistic(&scaled, |x| stats::chi2_cdf(x, s.dim).unwrap_or(f64::NAN));
    let ks_p_value = stats::ks_p_value(ks_statistic, n);
    Ok(CalibrationSummary {
        mean_evoir,
        se,
        ks_statistic,
        ks_p_value,
        mean_ok: (mean_evoir - 1.0).abs() <= s.mean_tolerance_se * se,
        ks_ok: ks_p_value > s.ks_level,
    })
}

pub fn run_calibrate(s: &CalibrateSettings) -> CliResult<Outcome> {
    let reps = if s.dim == 1 {
        s.model.simulate_many(s.common.seed, s.replications)?
    } else {
        DiagonalOracle::new(vec![s.model; s.dim])?.simulate_many(s.common.seed, s.replications)?
    };
    let records = reps
        .iter()
        .enumerate()
        .map(|(i, r)| InfluenceRecord::new((i + 1).to_string(), r.retro, r.pro, Some(s.dim)))
        .collect::<evoir_core::Result<Vec<_>>>()?;
    let sum = calibration_summary(s, &records)?;
    let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };
    let d = s.common.evoir_decimals.max(4);
    let mut text = String::new();
    let _ = writeln!(text, "replications        {}", s.replications);
    let _ = writeln!(text, "dimension           {}", s.dim);
    let _ = writeln!(
        text,
        "model               prior mean {}  prior var {:?}  obs var {:?}  n1 {}  n2 {}",
        s.model.prior_mean, s.model.prior_var, s.model.obs_var, s.model.n1, s.model.n2
    );
    let _ = writeln!(text, "mean EVOIR          {:.d$} (SE {:.d$})", sum.mean_evoir, sum.se);
    let _ = writeln!(text, "KS statistic        {:.d$} (p = {:.d$})", sum.ks_statistic, sum.ks_p_value);
    let _ = writeln!(
        text,
        "mean one            {}  (|mean - 1| <= {} SE)",
        verdict(sum.mean_ok),
        s.mean_tolerance_se
    );
    let _ = writeln!(
        text,
        "chi-square shape    {}  (KS p-value > {})",
        verdict(sum.ks_ok),
        s.ks_level
    );

    let mut files = Vec::new();
    if s.common.wants(Format::Csv) {
        push(&mut files, "calibration.csv", report::calibration_csv(&records)?);
    }
    push(&mut files, "calibration_report.txt", text.clone());
    Ok(Outcome {
        files,
        records,
        summary: text,
    })
}
