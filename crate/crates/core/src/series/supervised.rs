use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{CountSeries, Granularity};
use crate::error::{Error, Result};

const WEEKDAYS: [&str; 7] = ["mon", "tue", "wed", "thu", "fri", "sat", "sun"];
const MONTHS: [&str; 12] = [
    "jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec",
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarFlags {
    pub weekday: bool,
    pub month: bool,
    pub linear_index: bool,
}

impl CalendarFlags {
    pub const NONE: CalendarFlags = CalendarFlags {
        weekday: false,
        month: false,
        linear_index: false,
    };
    pub const ALL: CalendarFlags = CalendarFlags {
        weekday: true,
        month: true,
        linear_index: true,
    };
}

/// Which features a supervised row carries, and in what order:
/// lags ascending, trailing means ascending, weekday one-hot (Monday first),
/// month one-hot, then the linear day index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub lags: Vec<usize>,
    pub ma_windows: Vec<usize>,
    pub calendar: CalendarFlags,
}

impl FeatureLayout {
    pub fn new(lags: &[usize], ma_windows: &[usize], calendar: CalendarFlags) -> Result<Self> {
        let mut lags = lags.to_vec();
        lags.sort_unstable();
        lags.dedup();
        let mut ma_windows = ma_windows.to_vec();
        ma_windows.sort_unstable();
        ma_windows.dedup();
        if lags.first() == Some(&0) {
            return Err(Error::invalid("lag 0 would leak the target"));
        }
        if ma_windows.first() == Some(&0) {
            return Err(Error::invalid("moving-average width must be at least 1"));
        }
        let layout = FeatureLayout {
            lags,
            ma_windows,
            calendar,
        };
        if layout.width() == 0 {
            return Err(Error::invalid("no features requested"));
        }
        Ok(layout)
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.width());
        names.extend(self.lags.iter().map(|k| format!("lag_{k}")));
        names.extend(self.ma_windows.iter().map(|w| format!("ma_{w}")));
        if self.calendar.weekday {
            names.extend(WEEKDAYS.iter().map(|d| format!("weekday_{d}")));
        }
        if self.calendar.month {
            names.extend(MONTHS.iter().map(|m| format!("month_{m}")));
        }
        if self.calendar.linear_index {
            names.push("linear_index".into());
        }
        names
    }

    pub fn width(&self) -> usize {
        self.lags.len()
            + self.ma_windows.len()
            + if self.calendar.weekday { 7 } else { 0 }
            + if self.calendar.month { 12 } else { 0 }
            + usize::from(self.calendar.linear_index)
    }

    /// Longest look-back any feature needs.
    pub fn max_history(&self) -> usize {
        self.lags
            .iter()
            .chain(&self.ma_windows)
            .copied()
            .max()
            .unwrap_or(0)
    }

    /// Feature vector for the period at index `t` dated `date`, reading past
    /// values through `history`. `None` when any needed value is missing.
    pub fn build(
        &self,
        t: usize,
        date: NaiveDate,
        series_start: NaiveDate,
        history: impl Fn(usize) -> Option<f64>,
    ) -> Option<Vec<f64>> {
        if t < self.max_history() {
            return None;
        }
        let mut row = Vec::with_capacity(self.width());
        for k in &self.lags {
            row.push(history(t - k)?);
        }
        for w in &self.ma_windows {
            let mut sum = 0.0;
            for j in t - w..t {
                sum += history(j)?;
            }
            row.push(sum / *w as f64);
        }
        if self.calendar.weekday {
            let wd = date.weekday().num_days_from_monday() as usize;
            row.extend((0..7).map(|i| if i == wd { 1.0 } else { 0.0 }));
        }
        if self.calendar.month {
            let m = date.month0() as usize;
            row.extend((0..12).map(|i| if i == m { 1.0 } else { 0.0 }));
        }
        if self.calendar.linear_index {
            row.push((date - series_start).num_days() as f64);
        }
        Some(row)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedRow {
    pub features: Vec<f64>,
    pub target: f64,
    pub target_date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedMatrix {
    pub feature_names: Vec<String>,
    /// Column positions in the originally built layout; tree fitting breaks
    /// split ties on these, so reordering columns cannot change a model.
    pub feature_ids: Vec<usize>,
    pub rows: Vec<SupervisedRow>,
}

impl SupervisedMatrix {
    pub fn new(feature_names: Vec<String>, rows: Vec<SupervisedRow>) -> Result<Self> {
        if let Some(i) = rows
            .iter()
            .position(|r| r.features.len() != feature_names.len())
        {
            return Err(Error::invalid(format!(
                "row {i} has {} features, expected {}",
                rows[i].features.len(),
                feature_names.len()
            )));
        }
        let feature_ids = (0..feature_names.len()).collect();
        Ok(SupervisedMatrix {
            feature_names,
            feature_ids,
            rows,
        })
    }

    pub fn width(&self) -> usize {
        self.feature_names.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Reorders columns so that new column `j` is old column `perm[j]`.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<SupervisedMatrix> {
        let mut check = perm.to_vec();
        check.sort_unstable();
        if check != (0..self.width()).collect::<Vec<_>>() {
            return Err(Error::invalid("not a permutation of the feature columns"));
        }
        Ok(SupervisedMatrix {
            feature_names: perm.iter().map(|&j| self.feature_names[j].clone()).collect(),
            feature_ids: perm.iter().map(|&j| self.feature_ids[j]).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| SupervisedRow {
                    features: perm.iter().map(|&j| r.features[j]).collect(),
                    ..r.clone()
                })
                .collect(),
        })
    }

    /// CSV with the feature names, then `target,target_date`.
    pub fn to_csv(&self) -> String {
        let mut out = self.feature_names.join(",");
        out.push_str(",target,target_date\n");
        for r in &self.rows {
            for v in &r.features {
                out.push_str(&format!("{v},"));
            }
            out.push_str(&format!("{},{}\n", r.target, r.target_date.format("%Y-%m-%d")));
        }
        out
    }
}

/// One row per period whose target and every referenced past value are
/// observed.
pub fn make_supervised(
    series: &CountSeries,
    lags: &[usize],
    ma_windows: &[usize],
    calendar: CalendarFlags,
) -> Result<SupervisedMatrix> {
    let layout = FeatureLayout::new(lags, ma_windows, calendar)?;
    make_supervised_with(series, &layout)
}

pub(crate) fn make_supervised_with(
    series: &CountSeries,
    layout: &FeatureLayout,
) -> Result<SupervisedMatrix> {
    if layout.calendar.weekday && series.granularity() != Granularity::Daily {
        return Err(Error::invalid("weekday features need a daily series"));
    }
    let observed = series.observed_count();
    if layout.max_history() >= observed {
        return Err(Error::TooShort {
            needed: layout.max_history() + 1,
            available: observed,
        });
    }
    let history = |j: usize| series.get(j);
    let mut rows = Vec::new();
    for t in layout.max_history()..series.len() {
        if !series.is_observed(t) || !history_observed(series, layout, t) {
            continue;
        }
        let date = series.date(t);
        let features = layout
            .build(t, date, series.start(), history)
            .expect("history checked above");
        let target = series.get(t).expect("target checked above");
        rows.push(SupervisedRow {
            features,
            target,
            target_date: date,
        });
    }
    SupervisedMatrix::new(layout.names(), rows)
}

fn history_observed(series: &CountSeries, layout: &FeatureLayout, t: usize) -> bool {
    layout.lags.iter().all(|k| series.is_observed(t - k))
        && layout
            .ma_windows
            .iter()
            .all(|w| (t - w..t).all(|j| series.is_observed(j)))
}
