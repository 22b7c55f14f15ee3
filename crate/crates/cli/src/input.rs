//! CSV ingestion for the two data layouts.

use std::path::Path;

use evoir_core::glmm::{ClinicData, ClinicObservation, SyntheticSpec};
use evoir_core::linreg::RegressionData;

use crate::error::{CliError, CliResult};

pub const BUNDLED_LONGLEY: &str = include_str!("../data/longley.csv");
pub const BUNDLED_CLINICS: &str = include_str!("../data/clinics.csv");

/// Seed of the synthetic draw stored in the bundled clinics file.
pub const BUNDLED_CLINICS_SEED: u64 = 0;

/// Reads `path`, or returns the bundled text when there is no path.
pub fn read_source(path: Option<&Path>, bundled: &'static str) -> CliResult<(String, String)> {
    match path {
        Some(p) => std::fs::read_to_string(p)
            .map(|t| (t, p.display().to_string()))
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", p.display()))),
        None => Ok((bundled.to_string(), "bundled data".to_string())),
    }
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn csv_error(e: csv::Error) -> CliError {
    match e.position() {
        Some(pos) => CliError::Data(format!("line {}: {e}", pos.line())),
        None => CliError::Data(e.to_string()),
    }
}

fn parse_field<T: std::str::FromStr>(raw: &str, line: u64, column: &str, what: &str) -> CliResult<T> {
    raw.parse()
        .map_err(|_| CliError::Data(format!("line {line}, column `{column}`: cannot parse `{raw}` as {what}")))
}

/// Regression layout: a label column, the predictors, then the response.
pub fn parse_regression(text: &str, intercept: bool) -> CliResult<RegressionData> {
    let mut rdr = reader(text);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if headers.len() < 2 {
        return Err(CliError::Data(
            "line 1: need a label column and a response column".into(),
        ));
    }
    let k = headers.len() - 2;
    let names: Vec<String> = headers.iter().skip(1).take(k).map(str::to_string).collect();
    let mut labels = Vec::new();
    let mut predictors = vec![Vec::new(); k];
    let mut response = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        labels.push(rec[0].to_string());
        for (j, col) in predictors.iter_mut().enumerate() {
            col.push(parse_field::<f64>(&rec[j + 1], line, &headers[j + 1], "a number")?);
        }
        response.push(parse_field::<f64>(&rec[k + 1], line, &headers[k + 1], "a number")?);
    }
    if response.is_empty() {
        return Err(CliError::Data("no data rows after the header".into()));
    }
    Ok(RegressionData::from_predictors(&predictors, &names, response, labels, intercept)?)
}

const CLINIC_COLUMNS: [&str; 5] = ["region", "site", "year", "tested", "positive"];

/// Clinic layout: columns `region,site,year,tested,positive` in any order.
pub fn parse_clinics(text: &str) -> CliResult<ClinicData> {
    let mut rdr = reader(text);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let idx = CLINIC_COLUMNS
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h.eq_ignore_ascii_case(c))
                .ok_or_else(|| CliError::Data(format!("line 1: missing column `{c}`")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let mut obs = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        let tested: u64 = parse_field(&rec[idx[3]], line, "tested", "a non-negative integer")?;
        let positive: u64 = parse_field(&rec[idx[4]], line, "positive", "a non-negative integer")?;
        if positive > tested {
            return Err(CliError::Data(format!(
                "line {line}: {positive} positives exceed {tested} tested"
            )));
        }
        obs.push(ClinicObservation {
            region: rec[idx[0]].to_string(),
            site: rec[idx[1]].to_string(),
            year: parse_field(&rec[idx[2]], line, "year", "an integer year")?,
            tested,
            positive,
        });
    }
    if obs.is_empty() {
        return Err(CliError::Data("no data rows after the header".into()));
    }
    Ok(ClinicData::new(&obs)?)
}

pub fn clinics_to_csv(observations: &[ClinicObservation]) -> String {
    let mut out = String::from("region,site,year,tested,positive\n");
    for o in observations {
        out.push_str(&format!("{},{},{},{},{}\n", o.region, o.site, o.year, o.tested, o.positive));
    }
    out
}

/// The bundled clinics file regenerated from the default synthetic recipe.
pub fn synthetic_clinics_csv(seed: u64) -> CliResult<String> {
    let synth = SyntheticSpec::default().generate(seed)?;
    Ok(clinics_to_csv(&synth.observations))
}
