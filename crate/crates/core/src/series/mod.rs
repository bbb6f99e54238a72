//! Contiguous count series with an observed/excluded mask, plus the
//! transforms, calendar features, and splits shared by every model.

mod aggregate;
pub mod probe;
mod supervised;
mod transform;

use std::fmt;

use chrono::{Datelike, Months, NaiveDate};
use serde::{Deserialize, Serialize};

pub use aggregate::aggregate;
pub use supervised::{make_supervised, CalendarFlags, FeatureLayout, SupervisedMatrix, SupervisedRow};
pub use transform::{anchors, difference, integrate, inverse_log_transform, log_transform};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Daily,
    Monthly,
}

impl Granularity {
    /// First day of the period containing `date`.
    pub fn period_start(self, date: NaiveDate) -> NaiveDate {
        match self {
            Granularity::Daily => date,
            Granularity::Monthly => date.with_day(1).expect("day 1 exists"),
        }
    }

    /// Start of the period `n` periods after the one starting at `start`.
    pub fn advance(self, start: NaiveDate, n: usize) -> NaiveDate {
        match self {
            Granularity::Daily => start + chrono::Duration::days(n as i64),
            Granularity::Monthly => start + Months::new(n as u32),
        }
    }

    /// Last day of the period starting at `start`.
    pub fn period_end(self, start: NaiveDate) -> NaiveDate {
        self.advance(start, 1).pred_opt().expect("date in range")
    }

    /// Number of whole periods from the period containing `from` to the one
    /// containing `to` (negative when `to` is earlier).
    pub fn periods_between(self, from: NaiveDate, to: NaiveDate) -> i64 {
        match self {
            Granularity::Daily => (to - from).num_days(),
            Granularity::Monthly => {
                (to.year() as i64 - from.year() as i64) * 12 + to.month() as i64
                    - from.month() as i64
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::Daily => "daily",
            Granularity::Monthly => "monthly",
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "daily" | "day" => Ok(Granularity::Daily),
            "monthly" | "month" => Ok(Granularity::Monthly),
            other => Err(Error::invalid(format!("unknown granularity `{other}`"))),
        }
    }
}

/// An inclusive date span excluded from training and scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl ExclusionWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if start > end {
            return Err(Error::DateRange { start, end });
        }
        Ok(ExclusionWindow { start, end })
    }

    pub fn overlaps(&self, start: NaiveDate, end: NaiveDate) -> bool {
        self.start <= end && start <= self.end
    }
}

impl std::str::FromStr for ExclusionWindow {
    type Err = Error;

    /// Parses `START:END` with ISO dates.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("exclusion `{s}` is not START:END")))?;
        let parse = |t: &str| {
            NaiveDate::parse_from_str(t.trim(), "%Y-%m-%d")
                .map_err(|_| Error::invalid(format!("bad date `{t}` in exclusion `{s}`")))
        };
        ExclusionWindow::new(parse(a)?, parse(b)?)
    }
}

/// Contiguous per-period values; entry `i` covers `start + i` periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountSeries {
    granularity: Granularity,
    start: NaiveDate,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl CountSeries {
    pub fn new(
        granularity: Granularity,
        start: NaiveDate,
        values: Vec<f64>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        if values.len() != mask.len() {
            return Err(Error::invalid(format!(
                "values ({}) and mask ({}) differ in length",
                values.len(),
                mask.len()
            )));
        }
        if granularity.period_start(start) != start {
            return Err(Error::invalid(format!(
                "{start} is not the first day of a {granularity} period"
            )));
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::NegativeValue { index, value });
        }
        Ok(CountSeries {
            granularity,
            start,
            values,
            mask,
        })
    }

    /// Fully observed series.
    pub fn observed(granularity: Granularity, start: NaiveDate, values: Vec<f64>) -> Result<Self> {
        let mask = vec![true; values.len()];
        CountSeries::new(granularity, start, values, mask)
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Start date of period `i`.
    pub fn date(&self, i: usize) -> NaiveDate {
        self.granularity.advance(self.start, i)
    }

    /// Start date of the last period.
    pub fn last_date(&self) -> Option<NaiveDate> {
        (!self.is_empty()).then(|| self.date(self.len() - 1))
    }

    /// Index of the period containing `date`, if inside the series.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let k = self.granularity.periods_between(self.start, date);
        (k >= 0 && (k as usize) < self.len()).then_some(k as usize)
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_observed(&self, i: usize) -> bool {
        self.mask[i]
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Value of period `i` when observed; masked periods yield `None`.
    pub fn get(&self, i: usize) -> Option<f64> {
        if !self.mask[i] {
            return None;
        }
        probe::record(self.date(i), true);
        Some(self.values[i])
    }

    /// All values, masked ones included. Every period counts as read.
    pub fn raw_values(&self) -> &[f64] {
        for i in 0..self.len() {
            probe::record(self.date(i), self.mask[i]);
        }
        &self.values
    }

    /// `(index, value)` for every observed period.
    pub fn observed_points(&self) -> Vec<(usize, f64)> {
        (0..self.len())
            .filter_map(|i| self.get(i).map(|v| (i, v)))
            .collect()
    }

    /// Index of the last observed period.
    pub fn last_observed(&self) -> Option<usize> {
        self.mask.iter().rposition(|m| *m)
    }

    /// Periods `range`, with the start date moved accordingly.
    pub fn slice(&self, range: std::ops::Range<usize>) -> CountSeries {
        CountSeries {
            granularity: self.granularity,
            start: self.date(range.start),
            values: self.values[range.clone()].to_vec(),
            mask: self.mask[range].to_vec(),
        }
    }

    /// Appends `other`, which must start right after this series ends.
    pub fn concat(&self, other: &CountSeries) -> Result<CountSeries> {
        if other.granularity != self.granularity || other.start != self.date(self.len()) {
            return Err(Error::invalid("series are not adjacent"));
        }
        let mut out = self.clone();
        out.values.extend_from_slice(&other.values);
        out.mask.extend_from_slice(&other.mask);
        Ok(out)
    }

    pub(crate) fn map_values(&self, f: impl Fn(f64) -> f64) -> CountSeries {
        CountSeries {
            values: self.values.iter().map(|v| f(*v)).collect(),
            ..self.clone()
        }
    }

    pub(crate) fn values_internal(&self) -> &[f64] {
        &self.values
    }

    /// Masks every period that overlaps one of `windows`. Values are kept.
    pub fn apply_exclusions(&self, windows: &[ExclusionWindow]) -> CountSeries {
        let mut out = self.clone();
        for i in 0..out.len() {
            let start = self.date(i);
            let end = self.granularity.period_end(start);
            if windows.iter().any(|w| w.overlaps(start, end)) {
                out.mask[i] = false;
            }
        }
        out
    }

    /// Splits into periods lying wholly before `cutoff` and the rest.
    pub fn split(&self, cutoff: NaiveDate) -> Result<(CountSeries, CountSeries)> {
        let k = (0..self.len())
            .take_while(|&i| self.granularity.period_end(self.date(i)) < cutoff)
            .count();
        if k == 0 || k == self.len() {
            return Err(Error::invalid(format!(
                "cutoff {cutoff} leaves one side of the split empty"
            )));
        }
        Ok((self.slice(0..k), self.slice(k..self.len())))
    }

    /// CSV with columns `period_start,value,observed`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("period_start,value,observed\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                self.date(i).format("%Y-%m-%d"),
                self.values[i],
                u8::from(self.mask[i])
            ));
        }
        out
    }

    pub fn from_csv(text: &str, granularity: Granularity) -> Result<CountSeries> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut values = Vec::new();
        let mut mask = Vec::new();
        let mut start = None;
        for (i, row) in reader.records().enumerate() {
            let row = row?;
            let field = |k: usize| row.get(k).unwrap_or("").trim();
            let date = NaiveDate::parse_from_str(field(0), "%Y-%m-%d")
                .map_err(|_| Error::invalid(format!("row {}: bad period_start", i + 1)))?;
            let start = *start.get_or_insert(date);
            if granularity.advance(start, i) != date {
                return Err(Error::invalid(format!("row {}: series is not contiguous", i + 1)));
            }
            values.push(
                field(1)
                    .parse::<f64>()
                    .map_err(|_| Error::invalid(format!("row {}: bad value", i + 1)))?,
            );
            mask.push(match field(2) {
                "1" => true,
                "0" => false,
                other => return Err(Error::invalid(format!("row {}: bad observed flag `{other}`", i + 1))),
            });
        }
        let start = start.ok_or_else(|| Error::invalid("empty series file"))?;
        CountSeries::new(granularity, start, values, mask)
    }
}
