use evoir_core::linreg::{influence_table, longley, LinregAnalysis};

// Year, Cook's D, retrospective, prospective, EVOIR as published (3 and 2 decimals).
const TABLE: [(&str, f64, f64, f64, f64); 16] = [
    ("1947", 0.141, 0.092, 0.088, 1.05),
    ("1948", 0.041, 0.026, 0.177, 0.15),
    ("1949", 0.003, 0.002, 0.079, 0.02),
    ("1950", 0.244, 0.159, 0.056, 2.83),
    ("1951", 0.614, 0.399, 0.157, 2.55),
    ("1952", 0.089, 0.058, 0.072, 0.80),
    ("1953", 0.079, 0.051, 0.126, 0.41),
    ("1954", 0.001, 0.000, 0.142, 0.00),
    ("1955", 0.000, 0.000, 0.117, 0.00),
    ("1956", 0.235, 0.153, 0.043, 3.53),
    ("1957", 0.000, 0.000, 0.078, 0.00),
    ("1958", 0.004, 0.002, 0.130, 0.02),
    ("1959", 0.036, 0.023, 0.080, 0.29),
    ("1960", 0.004, 0.003, 0.041, 0.07),
    ("1961", 0.170, 0.111, 0.064, 1.72),
    ("1962", 0.467, 0.304, 0.258, 1.18),
];

#[test]
fn reproduces_published_table() {
    let rows = influence_table(&longley()).unwrap();
    assert_eq!(rows.len(), 16);
    for (row, &(year, cook, retro, pro, ratio)) in rows.iter().zip(TABLE.iter()) {
        assert_eq!(row.record.unit_id, year);
        assert!((row.cooks_distance - cook).abs() <= 0.001, "{year} cook {}", row.cooks_distance);
        assert!((row.record.retrospective - retro).abs() <= 0.001, "{year} retro {}", row.record.retrospective);
        assert!((row.record.prospective - pro).abs() <= 0.001, "{year} pro {}", row.record.prospective);
        let e = row.record.evoir.unwrap();
        assert!((e - ratio).abs() <= 0.02, "{year} evoir {e}");
    }
}

#[test]
fn leverages_sum_to_rank() {
    let a = LinregAnalysis::new(&longley()).unwrap();
    assert!((a.fit().hat_diag.sum() - 7.0).abs() < 1e-9);
}

#[test]
fn studentized_residual_for_1956() {
    let a = LinregAnalysis::new(&longley()).unwrap();
    let t = a.external_studentized_residual(9).unwrap();
    // t² = EVOIR · (n−p−1)/(n−p−3) = 3.53 · 8/6 at table rounding.
    assert!((t * t - 3.53 * 8.0 / 6.0).abs() < 0.03, "t = {t}");
    assert!((t.abs() - 2.17).abs() < 0.01);
    let e = a.evoir(9).unwrap();
    assert!((e * 8.0 / 6.0 - t * t).abs() < 1e-9, "{} vs {}", e * 8.0 / 6.0, t * t);
}

#[test]
fn design_is_flagged_ill_conditioned() {
    let a = LinregAnalysis::new(&longley()).unwrap();
    assert!(a.fit().gram_condition > 1e10);
}

// Exact rational arithmetic on the same data (Cook's D, retrospective,
// prospective, t²), rounded to 15 significant digits.
const EXACT: [(f64, f64, f64, f64); 16] = [
    (0.140840156507822, 0.0916238515767247, 0.087572013584272, 1.39502485366596),
    (0.0405613501956196, 0.0263872692435456, 0.176651111816666, 0.199166737736555),
    (0.00293020313368626, 0.00190624963552644, 0.0788054547851841, 0.0322524143491114),
    (0.244192917875949, 0.158860201652152, 0.0561807411660623, 3.77021729878533),
    (0.613916838192173, 0.399384853423162, 0.156601501728607, 3.4004344276366),
    (0.0888451715064144, 0.0577984078493995, 0.0720894757422324, 1.06901240445632),
    (0.0786481028238458, 0.0511646839835968, 0.126233059436348, 0.540425613935112),
    (0.000549230092684482, 0.000357302758967034, 0.141965210460081, 0.00335577763790708),
    (0.000487859618364594, 0.000317378071507841, 0.117327743255898, 0.00360674082929814),
    (0.235214398525729, 0.153019207544214, 0.0433497025961462, 4.70650541618916),
    (0.000402612842061617, 0.000261920607010176, 0.0783308041159772, 0.00445836704927092),
    (0.00423992719924792, 0.00275829330236816, 0.12984128078622, 0.0283247699105249),
    (0.035560412003905, 0.0231338986851524, 0.0795402173486064, 0.387793738501902),
    (0.00432748168352104, 0.00281525205100085, 0.0407904934799108, 0.0920231426762006),
    (0.170388213068445, 0.110846400143978, 0.0644105904631284, 2.29457918533716),
    (0.466682597016336, 0.30360131700145, 0.257685386784132, 1.57091467643465),
];

#[test]
fn matches_exact_arithmetic() {
    let a = LinregAnalysis::new(&longley()).unwrap();
    let rel = |x: f64, y: f64| (x - y).abs() / y.abs();
    for (i, &(cook, retro, pro, t2)) in EXACT.iter().enumerate() {
        assert!(rel(a.cooks_distance(i).unwrap(), cook) < 1e-7, "row {i}");
        assert!(rel(a.retrospective_evsi(i).unwrap(), retro) < 1e-7, "row {i}");
        assert!(rel(a.prospective_evsi(i).unwrap(), pro) < 1e-9, "row {i}");
        assert!(rel(a.external_studentized_residual(i).unwrap().powi(2), t2) < 1e-9, "row {i}");
    }
}
