use std::collections::HashMap;

use crate::error::{Result, VoiError};

/// One site-year of clinic testing counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClinicObservation {
    pub region: String,
    pub site: String,
    pub year: i32,
    pub tested: u64,
    pub positive: u64,
}

/// A site-year with indices into [`ClinicData`]'s region, site and year lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Row {
    pub site: usize,
    pub region: usize,
    pub year: usize,
    pub tested: u64,
    pub positive: u64,
}

/// Validated clinic data.
///
/// Regions and sites are numbered in order of first appearance; the first
/// region is the reference level. Years are sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct ClinicData {
    regions: Vec<String>,
    sites: Vec<String>,
    site_region: Vec<usize>,
    years: Vec<i32>,
    rows: Vec<Row>,
}

impl ClinicData {
    pub fn new(observations: &[ClinicObservation]) -> Result<Self> {
        if observations.is_empty() {
            return Err(VoiError::Data("no clinic observations".into()));
        }
        let mut regions: Vec<String> = Vec::new();
        let mut sites: Vec<String> = Vec::new();
        let mut site_region: Vec<usize> = Vec::new();
        let mut site_index: HashMap<&str, usize> = HashMap::new();
        let mut years: Vec<i32> = observations.iter().map(|o| o.year).collect();
        years.sort_unstable();
        years.dedup();

        let mut rows = Vec::with_capacity(observations.len());
        let mut seen: HashMap<(usize, i32), usize> = HashMap::new();
        for (line, o) in observations.iter().enumerate() {
            if o.positive > o.tested {
                return Err(VoiError::Data(format!(
                    "record {}: site `{}` year {} has {} positive of {} tested",
                    line + 1,
                    o.site,
                    o.year,
                    o.positive,
                    o.tested
                )));
            }
            let region = match regions.iter().position(|r| *r == o.region) {
                Some(r) => r,
                None => {
                    regions.push(o.region.clone());
                    regions.len() - 1
                }
            };
            let site = match site_index.get(o.site.as_str()) {
                Some(&s) => {
                    if site_region[s] != region {
                        return Err(VoiError::Data(format!(
                            "record {}: site `{}` appears in regions `{}` and `{}`",
                            line + 1,
                            o.site,
                            regions[site_region[s]],
                            o.region
                        )));
                    }
                    s
                }
                None => {
                    sites.push(o.site.clone());
                    site_region.push(region);
                    site_index.insert(&o.site, sites.len() - 1);
                    sites.len() - 1
                }
            };
            if let Some(first) = seen.insert((site, o.year), line) {
                return Err(VoiError::Data(format!(
                    "records {} and {}: duplicate site-year `{}` {}",
                    first + 1,
                    line + 1,
                    o.site,
                    o.year
                )));
            }
            let year = years.binary_search(&o.year).expect("year collected above");
            rows.push(Row {
                site,
                region,
                year,
                tested: o.tested,
                positive: o.positive,
            });
        }
        rows.sort_by_key(|r| (r.site, r.year));
        Ok(Self {
            regions,
            sites,
            site_region,
            years,
            rows,
        })
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    pub fn sites(&self) -> &[String] {
        &self.sites
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn n_years(&self) -> usize {
        self.years.len()
    }

    pub fn site_region(&self, site: usize) -> usize {
        self.site_region[site]
    }

    /// All site-years sorted by site then year, including those with nobody tested.
    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    /// The site-years of one site, in year order.
    pub fn site_rows(&self, site: usize) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(move |r| r.site == site)
    }

    pub fn site_index(&self, name: &str) -> Result<usize> {
        self.sites
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| VoiError::UnknownUnit(name.to_string()))
    }

    /// Copy with the positives of `site`'s rows replaced by `positives` (year order).
    pub fn with_site_positives(&self, site: usize, positives: &[u64]) -> Result<Self> {
        let n = self.site_rows(site).count();
        if positives.len() != n {
            return Err(VoiError::DimensionMismatch {
                expected: n,
                found: positives.len(),
            });
        }
        let mut out = self.clone();
        let mut it = positives.iter();
        for r in out.rows.iter_mut().filter(|r| r.site == site) {
            let y = *it.next().expect("length checked");
            if y > r.tested {
                return Err(VoiError::Data(format!(
                    "{y} positives exceed {} tested for site `{}`",
                    r.tested, self.sites[site]
                )));
            }
            r.positive = y;
        }
        Ok(out)
    }

    pub fn observations(&self) -> Vec<ClinicObservation> {
        self.rows
            .iter()
            .map(|r| ClinicObservation {
                region: self.regions[r.region].clone(),
                site: self.sites[r.site].clone(),
                year: self.years[r.year],
                tested: r.tested,
                positive: r.positive,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(region: &str, site: &str, year: i32, tested: u64, positive: u64) -> ClinicObservation {
        ClinicObservation {
            region: region.into(),
            site: site.into(),
            year,
            tested,
            positive,
        }
    }

    #[test]
    fn indexes_in_order_of_appearance() {
        let d = ClinicData::new(&[
            obs("B", "s2", 2004, 10, 3),
            obs("A", "s1", 2002, 10, 2),
            obs("B", "s2", 2002, 12, 5),
        ])
        .unwrap();
        assert_eq!(d.regions(), ["B", "A"]);
        assert_eq!(d.sites(), ["s2", "s1"]);
        assert_eq!(d.years(), [2002, 2004]);
        let s2: Vec<_> = d.site_rows(0).map(|r| r.year).collect();
        assert_eq!(s2, [0, 1]);
    }

    #[test]
    fn rejects_bad_records() {
        assert!(ClinicData::new(&[]).is_err());
        assert!(ClinicData::new(&[obs("A", "s", 2002, 3, 4)]).is_err());
        assert!(ClinicData::new(&[obs("A", "s", 2002, 3, 1), obs("B", "s", 2004, 3, 1)]).is_err());
        assert!(ClinicData::new(&[obs("A", "s", 2002, 3, 1), obs("A", "s", 2002, 3, 1)]).is_err());
    }

    #[test]
    fn replaces_site_positives() {
        let d = ClinicData::new(&[obs("A", "s", 2002, 10, 1), obs("A", "s", 2004, 10, 2)]).unwrap();
        let e = d.with_site_positives(0, &[7, 8]).unwrap();
        assert_eq!(e.rows()[1].positive, 8);
        assert!(d.with_site_positives(0, &[11, 0]).is_err());
        assert!(d.with_site_positives(0, &[1]).is_err());
    }
}
