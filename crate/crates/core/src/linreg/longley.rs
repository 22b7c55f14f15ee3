use super::RegressionData;

const COLUMNS: [&str; 6] = ["GNP.deflator", "GNP", "Unemployed", "Armed.Forces", "Population", "Year"];

// Year, GNP.deflator, GNP, Unemployed, Armed.Forces, Population, Employed.
const ROWS: [[f64; 7]; 16] = [
    [1947.0, 83.0, 234.289, 235.6, 159.0, 107.608, 60.323],
    [1948.0, 88.5, 259.426, 232.5, 145.6, 108.632, 61.122],
    [1949.0, 88.2, 258.054, 368.2, 161.6, 109.773, 60.171],
    [1950.0, 89.5, 284.599, 335.1, 165.0, 110.929, 61.187],
    [1951.0, 96.2, 328.975, 209.9, 309.9, 112.075, 63.221],
    [1952.0, 98.1, 346.999, 193.2, 359.4, 113.270, 63.639],
    [1953.0, 99.0, 365.385, 187.0, 354.7, 115.094, 64.989],
    [1954.0, 100.0, 363.112, 357.8, 335.0, 116.219, 63.761],
    [1955.0, 101.2, 397.469, 290.4, 304.8, 117.388, 66.019],
    [1956.0, 104.6, 419.180, 282.2, 285.7, 118.734, 67.857],
    [1957.0, 108.4, 442.769, 293.6, 279.8, 120.445, 68.169],
    [1958.0, 110.8, 444.546, 468.1, 263.7, 121.950, 66.513],
    [1959.0, 112.6, 482.704, 381.3, 255.2, 123.366, 68.655],
    [1960.0, 114.2, 502.601, 393.1, 251.4, 125.368, 69.564],
    [1961.0, 115.7, 518.173, 480.6, 257.2, 127.852, 69.331],
    [1962.0, 116.9, 554.894, 400.7, 282.7, 130.081, 70.551],
];

/// Longley's (1967) macroeconomic data: `Employed` (thousands) on an intercept
/// and six predictors, rows labelled by year.
pub fn longley() -> RegressionData {
    let predictors: Vec<Vec<f64>> = (0..6)
        .map(|j| {
            ROWS.iter()
                .map(|r| if j == 5 { r[0] } else { r[j + 1] })
                .collect()
        })
        .collect();
    let names: Vec<String> = COLUMNS.iter().map(|s| s.to_string()).collect();
    let labels = ROWS.iter().map(|r| format!("{}", r[0] as i64)).collect();
    let response = ROWS.iter().map(|r| r[6]).collect();
    RegressionData::from_predictors(&predictors, &names, response, labels, true)
        .expect("bundled Longley data is valid")
}
