//! Tables, plot data and figures written by the commands.
//!
//! CSV numbers use Rust's shortest round-trip formatting so that parsing an
//! emitted table gives back the exact in-memory values.

use std::fmt::Write as _;

use evoir_core::InfluenceRecord;

use crate::error::{CliError, CliResult};

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fixed(v: Option<f64>, decimals: usize) -> String {
    match v {
        Some(x) => format!("{x:.decimals$}"),
        None => "NA".into(),
    }
}

/// Right-aligned columns under a header, the first column left-aligned.
pub fn aligned_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &mut dyn Iterator<Item = &str>| {
        let mut s = String::new();
        for (j, cell) in cells.enumerate() {
            let pad = widths[j].saturating_sub(cell.chars().count());
            if j == 0 {
                s.push_str(cell);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str("  ");
                s.push_str(&" ".repeat(pad));
                s.push_str(cell);
            }
        }
        out.push_str(s.trim_end());
        out.push('\n');
    };
    line(&mut header.iter().copied());
    for row in rows {
        line(&mut row.iter().map(String::as_str));
    }
    out
}

/// One regression row: the record plus Cook's distance.
#[derive(Debug, Clone, PartialEq)]
pub struct LinregRow {
    pub record: InfluenceRecord,
    pub cooks_distance: f64,
}

pub const LINREG_HEADER: [&str; 6] = ["Label", "CooksD", "RetrospectiveEVSI", "ProspectiveEVSI", "EVOIR", "CalibP"];

pub fn linreg_csv(rows: &[LinregRow]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    write_row(&mut w, LINREG_HEADER.iter().map(|s| s.to_string()))?;
    for r in rows {
        let rec = &r.record;
        write_row(
            &mut w,
            [
                rec.unit_id.clone(),
                r.cooks_distance.to_string(),
                rec.retrospective.to_string(),
                rec.prospective.to_string(),
                opt(rec.evoir),
                opt(rec.calib_p),
            ],
        )?;
    }
    finish(w)
}

pub fn linreg_text(rows: &[LinregRow], evsi: usize, ratio: usize) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.record.unit_id.clone(),
                format!("{:.evsi$}", r.cooks_distance),
                format!("{:.evsi$}", r.record.retrospective),
                format!("{:.evsi$}", r.record.prospective),
                fixed(r.record.evoir, ratio),
                fixed(r.record.calib_p, 3),
            ]
        })
        .collect();
    aligned_table(&LINREG_HEADER, &body)
}

/// One clinic row: the record plus its region.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteRow {
    pub record: InfluenceRecord,
    pub region: String,
}

pub const GLMM_HEADER: [&str; 7] = [
    "Clinic",
    "Region",
    "ProspectiveEVSI",
    "ProspectiveMCSE",
    "RetrospectiveEVSI",
    "RetrospectiveMCSE",
    "EVOIR",
];

pub fn glmm_csv(rows: &[SiteRow]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    write_row(&mut w, GLMM_HEADER.iter().map(|s| s.to_string()))?;
    for r in rows {
        let rec = &r.record;
        write_row(
            &mut w,
            [
                rec.unit_id.clone(),
                r.region.clone(),
                rec.prospective.to_string(),
                opt(rec.pro_mcse),
                rec.retrospective.to_string(),
                opt(rec.retro_mcse),
                opt(rec.evoir),
            ],
        )?;
    }
    finish(w)
}

fn sci(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.1e}")).unwrap_or_else(|| "NA".into())
}

pub fn glmm_text(rows: &[SiteRow], evsi: usize, ratio: usize) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.record.unit_id.clone(),
                r.region.clone(),
                format!("{:.evsi$}", r.record.prospective),
                sci(r.record.pro_mcse),
                format!("{:.evsi$}", r.record.retrospective),
                sci(r.record.retro_mcse),
                fixed(r.record.evoir, ratio),
            ]
        })
        .collect();
    aligned_table(&GLMM_HEADER, &body)
}

pub const CALIBRATION_HEADER: [&str; 5] = ["Replication", "RetrospectiveEVSI", "ProspectiveEVSI", "EVOIR", "CalibP"];

pub fn calibration_csv(records: &[InfluenceRecord]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    write_row(&mut w, CALIBRATION_HEADER.iter().map(|s| s.to_string()))?;
    for rec in records {
        write_row(
            &mut w,
            [
                rec.unit_id.clone(),
                rec.retrospective.to_string(),
                rec.prospective.to_string(),
                opt(rec.evoir),
                opt(rec.calib_p),
            ],
        )?;
    }
    finish(w)
}

fn write_row<I: IntoIterator<Item = String>>(w: &mut csv::Writer<Vec<u8>>, row: I) -> CliResult<()> {
    w.write_record(row).map_err(|e| CliError::Usage(format!("csv output: {e}")))
}

fn finish(w: csv::Writer<Vec<u8>>) -> CliResult<String> {
    let bytes = w.into_inner().map_err(|e| CliError::Usage(format!("csv output: {e}")))?;
    String::from_utf8(bytes).map_err(|e| CliError::Usage(format!("csv output: {e}")))
}

/// Reads any emitted influence table back into records.
///
/// The unit label is the first column; EVSI, ratio, p-value and MCSE columns
/// are found by name and may be absent.
pub fn parse_records(text: &str) -> CliResult<Vec<InfluenceRecord>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| CliError::Data(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (retro, pro) = match (col("RetrospectiveEVSI"), col("ProspectiveEVSI")) {
        (Some(r), Some(p)) => (r, p),
        _ => return Err(CliError::Data("table lacks EVSI columns".into())),
    };
    let (evoir, calib, rm, pm) = (col("EVOIR"), col("CalibP"), col("RetrospectiveMCSE"), col("ProspectiveMCSE"));
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Data(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |j: usize| -> CliResult<f64> {
            rec[j]
                .parse()
                .map_err(|_| CliError::Data(format!("line {line}: bad number `{}`", &rec[j])))
        };
        let maybe = |j: Option<usize>| -> CliResult<Option<f64>> {
            match j {
                Some(j) if !rec[j].is_empty() => num(j).map(Some),
                _ => Ok(None),
            }
        };
        out.push(InfluenceRecord {
            unit_id: rec[0].to_string(),
            retrospective: num(retro)?,
            prospective: num(pro)?,
            evoir: maybe(evoir)?,
            calib_p: maybe(calib)?,
            retro_mcse: maybe(rm)?,
            pro_mcse: maybe(pm)?,
        });
    }
    Ok(out)
}

/// One point of the influence scatter: prospective EVSI across, ratio up,
/// retrospective EVSI as the contour the point sits on.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotPoint {
    pub label: String,
    pub x: f64,
    pub y: Option<f64>,
    pub level: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub points: Vec<PlotPoint>,
    /// Level sets `x · y = c` as `(c, polyline)`.
    pub contours: Vec<(f64, Vec<(f64, f64)>)>,
}

const CONTOUR_POINTS: usize = 60;

impl PlotData {
    /// Flags the `top` largest ratios and draws contours through the flagged
    /// points and the median retrospective EVSI.
    pub fn new(records: &[InfluenceRecord], top: usize) -> Self {
        let mut order: Vec<usize> = (0..records.len()).filter(|&i| records[i].evoir.is_some()).collect();
        order.sort_by(|&a, &b| records[b].evoir.unwrap().total_cmp(&records[a].evoir.unwrap()).then(a.cmp(&b)));
        let flagged: Vec<usize> = order.iter().copied().take(top).collect();
        let points: Vec<PlotPoint> = records
            .iter()
            .enumerate()
            .map(|(i, r)| PlotPoint {
                label: r.unit_id.clone(),
                x: r.prospective,
                y: r.evoir,
                level: r.retrospective,
                flagged: flagged.contains(&i),
            })
            .collect();

        let mut levels: Vec<f64> = flagged.iter().map(|&i| records[i].retrospective).collect();
        let mut retro: Vec<f64> = records.iter().map(|r| r.retrospective).collect();
        retro.sort_by(f64::total_cmp);
        if let Some(&m) = retro.get(retro.len() / 2) {
            levels.push(m);
        }
        levels.retain(|c| *c > 0.0);
        levels.sort_by(f64::total_cmp);
        levels.dedup();

        let xs: Vec<f64> = points.iter().filter(|p| p.y.is_some()).map(|p| p.x).collect();
        let contours = match (
            xs.iter().copied().reduce(f64::min),
            xs.iter().copied().reduce(f64::max),
        ) {
            (Some(lo), Some(hi)) if lo > 0.0 => {
                let (a, b) = ((lo / 2.0).ln(), (hi * 2.0).ln());
                levels
                    .iter()
                    .map(|&c| {
                        let line = (0..CONTOUR_POINTS)
                            .map(|k| {
                                let x = (a + (b - a) * k as f64 / (CONTOUR_POINTS - 1) as f64).exp();
                                (x, c / x)
                            })
                            .collect();
                        (c, line)
                    })
                    .collect()
            }
            _ => Vec::new(),
        };
        Self { points, contours }
    }

    pub fn points_csv(&self) -> CliResult<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        write_row(&mut w, ["Label", "X", "Y", "Level", "Flagged"].map(String::from))?;
        for p in &self.points {
            write_row(
                &mut w,
                [p.label.clone(), p.x.to_string(), opt(p.y), p.level.to_string(), p.flagged.to_string()],
            )?;
        }
        finish(w)
    }

    pub fn contours_csv(&self) -> CliResult<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        write_row(&mut w, ["Level", "X", "Y"].map(String::from))?;
        for (c, line) in &self.contours {
            for (x, y) in line {
                write_row(&mut w, [c.to_string(), x.to_string(), y.to_string()])?;
            }
        }
        finish(w)
    }

    /// A standalone scatter with the contour lines and the flagged points labelled.
    pub fn svg(&self, title: &str) -> String {
        const W: f64 = 640.0;
        const H: f64 = 480.0;
        const M: f64 = 60.0;
        let shown: Vec<&PlotPoint> = self.points.iter().filter(|p| p.y.is_some()).collect();
        let xmax = shown.iter().map(|p| p.x).fold(0.0, f64::max).max(f64::MIN_POSITIVE) * 1.1;
        let ymax = shown.iter().map(|p| p.y.unwrap()).fold(0.0, f64::max).max(f64::MIN_POSITIVE) * 1.1;
        let sx = |x: f64| M + x / xmax * (W - 2.0 * M);
        let sy = |y: f64| H - M - y / ymax * (H - 2.0 * M);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, xml(title));
        let _ = writeln!(
            s,
            r#"<path d="M{M} {M} V{b} H{r}" fill="none" stroke="black"/>"#,
            b = H - M,
            r = W - M
        );
        for k in 0..=4 {
            let (xv, yv) = (xmax * k as f64 / 4.0, ymax * k as f64 / 4.0);
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                sx(xv),
                H - M + 16.0,
                tick(xv)
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                M - 6.0,
                sy(yv) + 4.0,
                tick(yv)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">prospective EVSI</text>"#,
            W / 2.0,
            H - 18.0
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">EVOIR</text>"#,
            H / 2.0,
            H / 2.0
        );
        for (_, line) in &self.contours {
            let pts: Vec<String> = line
                .iter()
                .filter(|(x, y)| *x <= xmax && *y <= ymax)
                .map(|(x, y)| format!("{:.1},{:.1}", sx(*x), sy(*y)))
                .collect();
            if pts.len() > 1 {
                let _ = writeln!(
                    s,
                    r##"<polyline points="{}" fill="none" stroke="#999" stroke-dasharray="4 3"/>"##,
                    pts.join(" ")
                );
            }
        }
        for p in &shown {
            let (cx, cy) = (sx(p.x), sy(p.y.unwrap()));
            let fill = if p.flagged { "#c0392b" } else { "#2c3e50" };
            let _ = writeln!(s, r#"<circle cx="{cx:.1}" cy="{cy:.1}" r="3.5" fill="{fill}"/>"#);
            if p.flagged {
                let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, cx + 6.0, cy - 6.0, xml(&p.label));
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() < 0.01 {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

fn xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
