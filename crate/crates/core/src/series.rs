//! Price series ingestion, date alignment and log returns.
//!
//! Alignment keeps the intersection of the two date sets and only then takes
//! log returns, so a gap in either input never produces a multi-day return
//! labelled as a daily one. Missing values are not supported: every row must
//! carry a date and a positive value.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::NaiveDate;
use serde::Serialize;

use crate::error::{Error, Result};

/// A labelled price or index level series, sorted by date.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RawSeries {
    label: String,
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl RawSeries {
    /// Builds a series from observations in any order.
    ///
    /// Observations are sorted by date; duplicate dates, non-positive or
    /// non-finite values and series shorter than two points are rejected.
    pub fn new(label: impl Into<String>, mut observations: Vec<(NaiveDate, f64)>) -> Result<Self> {
        if observations.len() < 2 {
            return Err(Error::TooShort {
                needed: 2,
                got: observations.len(),
            });
        }
        for (i, &(_, v)) in observations.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite("price series"));
            }
            if v <= 0.0 {
                return Err(Error::NonPositiveValue { row: i + 1, value: v });
            }
        }
        observations.sort_by_key(|&(d, _)| d);
        if let Some(w) = observations.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateDate(w[0].0));
        }
        let (dates, values) = observations.into_iter().unzip();
        Ok(Self {
            label: label.into(),
            dates,
            values,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Multiplies every level by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let obs = self
            .dates
            .iter()
            .zip(&self.values)
            .map(|(&d, &v)| (d, v * factor))
            .collect();
        Self::new(self.label.clone(), obs)
    }
}

/// Log returns with the later date of each price pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReturnSeries {
    label: String,
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

impl ReturnSeries {
    pub fn new(label: impl Into<String>, dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::invalid(format!(
                "{} dates for {} values",
                dates.len(),
                values.len()
            )));
        }
        if values.is_empty() {
            return Err(Error::TooShort { needed: 1, got: 0 });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("return series"));
        }
        Ok(Self {
            label: label.into(),
            dates,
            values,
        })
    }

    /// Builds a series from bare values, dating them on consecutive days
    /// starting 2000-01-02.
    pub fn from_values(label: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let start = NaiveDate::from_ymd_opt(2000, 1, 2).expect("valid date");
        let dates = start.iter_days().take(values.len()).collect();
        Self::new(label, dates, values)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same dates and label with new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.label.clone(), self.dates.clone(), values)
    }

    /// Zero mean, unit (population) variance.
    pub fn standardized(&self) -> Result<Self> {
        let n = self.values.len() as f64;
        let mean = self.values.iter().sum::<f64>() / n;
        let var = self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        if var <= 0.0 {
            return Err(Error::ZeroVariance("standardization"));
        }
        let sd = var.sqrt();
        self.with_values(self.values.iter().map(|v| (v - mean) / sd).collect())
    }
}

/// Two return series on an identical date index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignedPair {
    pub x: ReturnSeries,
    pub y: ReturnSeries,
}

impl AlignedPair {
    pub fn new(x: ReturnSeries, y: ReturnSeries) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::invalid(format!(
                "pair length mismatch: {} vs {}",
                x.len(),
                y.len()
            )));
        }
        if x.dates != y.dates {
            return Err(Error::invalid("pair dates differ"));
        }
        Ok(Self { x, y })
    }

    /// Pairs two bare value vectors on a synthetic daily index.
    pub fn from_values(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        Self::new(
            ReturnSeries::from_values("x", x)?,
            ReturnSeries::from_values("y", y)?,
        )
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `"<x label>-<y label>"`, used as the output directory name.
    pub fn name(&self) -> String {
        format!("{}-{}", self.x.label, self.y.label)
    }

    pub fn standardized(&self) -> Result<Self> {
        Self::new(self.x.standardized()?, self.y.standardized()?)
    }
}

/// Reads a price series from a UTF-8 CSV file with a header row.
///
/// The label is the file stem. Row numbers in errors are file line numbers.
pub fn load_csv(path: impl AsRef<Path>, date_column: &str, value_column: &str) -> Result<RawSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let date_idx = column(date_column)?;
    let value_idx = column(value_column)?;

    let malformed = |row: usize, reason: String| Error::MalformedRow {
        path: path.to_path_buf(),
        row,
        reason,
    };

    let mut observations = Vec::new();
    let mut seen = BTreeSet::new();
    for record in reader.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        let (Some(date_text), Some(value_text)) = (record.get(date_idx), record.get(value_idx)) else {
            return Err(malformed(row, "missing field".into()));
        };
        let date = NaiveDate::parse_from_str(date_text, "%Y-%m-%d")
            .map_err(|e| malformed(row, format!("date `{date_text}`: {e}")))?;
        let value: f64 = value_text
            .parse()
            .map_err(|e| malformed(row, format!("value `{value_text}`: {e}")))?;
        if !value.is_finite() {
            return Err(malformed(row, format!("value `{value_text}` is not finite")));
        }
        if value <= 0.0 {
            return Err(Error::NonPositiveValue { row, value });
        }
        if !seen.insert(date) {
            return Err(Error::DuplicateDate(date));
        }
        observations.push((date, value));
    }

    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "series".to_string());
    RawSeries::new(label, observations)
}

/// `r(t) = ln P(t+1) − ln P(t)`, dated by the later observation.
pub fn log_returns(series: &RawSeries) -> Result<ReturnSeries> {
    if series.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: series.len(),
        });
    }
    let values = series
        .values
        .windows(2)
        .map(|w| w[1].ln() - w[0].ln())
        .collect();
    ReturnSeries::new(series.label.clone(), series.dates[1..].to_vec(), values)
}

/// Restricts both series to their common dates, then takes log returns.
pub fn align(a: &RawSeries, b: &RawSeries) -> Result<AlignedPair> {
    let b_dates: BTreeSet<_> = b.dates.iter().copied().collect();
    let common: BTreeSet<_> = a.dates.iter().copied().filter(|d| b_dates.contains(d)).collect();
    if common.len() < 3 {
        return Err(Error::InsufficientOverlap {
            common: common.len(),
        });
    }
    let restrict = |s: &RawSeries| {
        let obs = s
            .dates
            .iter()
            .zip(&s.values)
            .filter(|(d, _)| common.contains(d))
            .map(|(&d, &v)| (d, v))
            .collect();
        RawSeries::new(s.label.clone(), obs)
    };
    AlignedPair::new(log_returns(&restrict(a)?)?, log_returns(&restrict(b)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, d).unwrap()
    }

    fn write_csv(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_three_rows() {
        let f = write_csv("date,value\n2020-01-01,100\n2020-01-02,110\n2020-01-03,105\n");
        let s = load_csv(f.path(), "date", "value").unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.values(), &[100.0, 110.0, 105.0]);
        assert_eq!(s.dates()[2], day(3));
    }

    #[test]
    fn sorts_unordered_rows() {
        let f = write_csv("date,value\n2020-01-03,3\n2020-01-01,1\n2020-01-02,2\n");
        let s = load_csv(f.path(), "date", "value").unwrap();
        assert_eq!(s.values(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn custom_columns() {
        let f = write_csv("Day,Close,Volume\n2020-01-01,5,9\n2020-01-02,6,9\n");
        let s = load_csv(f.path(), "Day", "Close").unwrap();
        assert_eq!(s.values(), &[5.0, 6.0]);
        assert!(matches!(
            load_csv(f.path(), "date", "Close"),
            Err(Error::MissingColumn { .. })
        ));
    }

    #[test]
    fn rejects_duplicate_date() {
        let f = write_csv("date,value\n2020-01-01,100\n2020-01-02,110\n2020-01-02,111\n");
        let err = load_csv(f.path(), "date", "value").unwrap_err();
        assert!(matches!(err, Error::DuplicateDate(d) if d == day(2)));
        assert!(err.to_string().contains("2020-01-02"));
    }

    #[test]
    fn rejects_negative_value() {
        let f = write_csv("date,value\n2020-01-01,100\n2020-01-02,-5\n");
        let err = load_csv(f.path(), "date", "value").unwrap_err();
        assert!(matches!(err, Error::NonPositiveValue { row: 3, value } if value == -5.0));
    }

    #[test]
    fn reports_malformed_row_number() {
        let f = write_csv("date,value\n2020-01-01,100\n2020-13-02,110\n");
        match load_csv(f.path(), "date", "value").unwrap_err() {
            Error::MalformedRow { row, .. } => assert_eq!(row, 3),
            e => panic!("unexpected {e}"),
        }
        let f = write_csv("date,value\n2020-01-01,1e\n");
        assert!(matches!(
            load_csv(f.path(), "date", "value"),
            Err(Error::MalformedRow { row: 2, .. })
        ));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_csv("/nonexistent/prices.csv", "date", "value"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn returns_of_constant_and_exponential() {
        let s = RawSeries::new("c", (1..=3).map(|d| (day(d), 100.0)).collect()).unwrap();
        assert_eq!(log_returns(&s).unwrap().values(), &[0.0, 0.0]);

        let e = std::f64::consts::E;
        let s = RawSeries::new("e", vec![(day(1), 1.0), (day(2), e), (day(3), e * e)]).unwrap();
        let r = log_returns(&s).unwrap();
        assert!((r.values()[0] - 1.0).abs() < 1e-15);
        assert!((r.values()[1] - 1.0).abs() < 1e-15);
        assert_eq!(r.dates(), &[day(2), day(3)]);
    }

    #[test]
    fn returns_by_hand() {
        let s = RawSeries::new("p", vec![(day(1), 100.0), (day(2), 110.0), (day(3), 105.0)]).unwrap();
        let r = log_returns(&s).unwrap();
        assert!((r.values()[0] - 1.1f64.ln()).abs() < 1e-15);
        assert!((r.values()[1] - (105.0f64 / 110.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn single_point_is_too_short() {
        assert!(matches!(
            RawSeries::new("p", vec![(day(1), 1.0)]),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn align_identical_dates() {
        let a = RawSeries::new("a", (1..=5).map(|d| (day(d), d as f64)).collect()).unwrap();
        let b = RawSeries::new("b", (1..=5).map(|d| (day(d), 10.0 + d as f64)).collect()).unwrap();
        let p = align(&a, &b).unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(p.name(), "a-b");
    }

    #[test]
    fn align_drops_extra_date() {
        let a = RawSeries::new("a", (1..=5).map(|d| (day(d), d as f64)).collect()).unwrap();
        let b = RawSeries::new("b", [1, 2, 3, 5].iter().map(|&d| (day(d), 2.0)).collect()).unwrap();
        let p = align(&a, &b).unwrap();
        assert_eq!(p.x.dates(), &[day(2), day(3), day(5)]);
        // the 3 -> 5 return spans the dropped day
        assert!((p.x.values()[2] - (5.0f64 / 3.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn align_disjoint_fails() {
        let a = RawSeries::new("a", (1..=5).map(|d| (day(d), 1.0)).collect()).unwrap();
        let b = RawSeries::new("b", (10..=15).map(|d| (day(d), 1.0)).collect()).unwrap();
        assert!(matches!(
            align(&a, &b),
            Err(Error::InsufficientOverlap { common: 0 })
        ));
    }

    #[test]
    fn standardize() {
        let r = ReturnSeries::from_values("r", vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let z = r.standardized().unwrap();
        let mean: f64 = z.values().iter().sum::<f64>() / 4.0;
        let var: f64 = z.values().iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-15);
        assert!((var - 1.0).abs() < 1e-14);
        let c = ReturnSeries::from_values("c", vec![1.0; 4]).unwrap();
        assert!(c.standardized().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn series(label: &str, days: &BTreeSet<u32>, levels: &[f64]) -> RawSeries {
            let base = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
            let obs = days
                .iter()
                .zip(levels.iter().cycle())
                .map(|(&d, &v)| (base + chrono::Days::new(d as u64), v))
                .collect();
            RawSeries::new(label, obs).unwrap()
        }

        proptest! {
            #[test]
            fn aligned_dates_match(
                da in prop::collection::btree_set(0u32..60, 2..40),
                db in prop::collection::btree_set(0u32..60, 2..40),
                levels in prop::collection::vec(0.5f64..200.0, 1..10),
            ) {
                let a = series("a", &da, &levels);
                let b = series("b", &db, &levels);
                let common = da.intersection(&db).count();
                match align(&a, &b) {
                    Ok(p) => {
                        prop_assert_eq!(p.x.dates(), p.y.dates());
                        prop_assert_eq!(p.len(), common - 1);
                    }
                    Err(Error::InsufficientOverlap { common: c }) => {
                        prop_assert!(c < 3);
                        prop_assert_eq!(c, common);
                    }
                    Err(e) => prop_assert!(false, "unexpected error {}", e),
                }
            }

            #[test]
            fn returns_ignore_price_scale(
                levels in prop::collection::vec(0.01f64..1e4, 2..50),
                c in 1e-3f64..1e3,
            ) {
                let days: BTreeSet<u32> = (0..levels.len() as u32).collect();
                let p = series("p", &days, &levels);
                let r1 = log_returns(&p).unwrap();
                let r2 = log_returns(&p.scaled(c).unwrap()).unwrap();
                for (a, b) in r1.values().iter().zip(r2.values()) {
                    prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
                }
            }
        }
    }
}
