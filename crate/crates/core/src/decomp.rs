//! Additive decomposition: piecewise-linear trend with changepoints plus
//! Fourier weekly and yearly terms, fit by ridge least squares.
//!
//! Time is measured in days from the series start (monthly periods use their
//! first day). Fitting happens on a rescaled problem, time divided by the
//! observed span and values by their standard deviation, and the stored
//! coefficients are converted back to count units per day.

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{check_level, Forecast, IntervalKind};
use crate::series::{CountSeries, Granularity};
use crate::stats::{std_dev, z_for_level};

const WEEK: f64 = 7.0;
const YEAR: f64 = 365.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecompSpec {
    pub n_changepoints: usize,
    /// Leading fraction of the observed history where changepoints may sit.
    pub changepoint_range: f64,
    pub weekly_order: usize,
    pub yearly_order: usize,
    /// Ridge weight on the changepoint slope adjustments.
    pub trend_penalty: f64,
    pub level: f64,
}

impl Default for DecompSpec {
    fn default() -> Self {
        DecompSpec {
            n_changepoints: 25,
            changepoint_range: 0.8,
            weekly_order: 3,
            yearly_order: 10,
            trend_penalty: 10.0,
            level: 0.95,
        }
    }
}

impl DecompSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.changepoint_range > 0.0 && self.changepoint_range <= 1.0) {
            return Err(Error::invalid("changepoint range must lie in (0, 1]"));
        }
        if !(self.trend_penalty >= 0.0 && self.trend_penalty.is_finite()) {
            return Err(Error::invalid("trend penalty must be finite and >= 0"));
        }
        // higher weekly harmonics alias onto lower ones at integer days
        if self.weekly_order > 3 {
            return Err(Error::invalid("weekly Fourier order above 3 aliases at daily sampling"));
        }
        check_level(self.level)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompFit {
    /// Base slope, counts per day.
    pub k: f64,
    /// Offset at the series start.
    pub m: f64,
    /// Slope adjustments, counts per day, one per changepoint.
    pub delta: Vec<f64>,
    /// Changepoint times as fractions of the observed span.
    pub s: Vec<f64>,
    /// Weekly sin/cos pairs by harmonic, then yearly pairs.
    pub beta: Vec<f64>,
    /// Residual standard deviation over observed periods.
    pub sigma: f64,
    pub weekly_order: usize,
    pub yearly_order: usize,
    pub granularity: Granularity,
    pub start: NaiveDate,
    /// Days from `start` to the last observed period.
    pub span_days: f64,
    /// Start of the final period of the history (masked or not).
    pub history_end: NaiveDate,
    pub history_len: usize,
}

/// Per-date additive parts of a prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Components {
    pub dates: Vec<NaiveDate>,
    pub trend: Vec<f64>,
    pub weekly: Vec<f64>,
    pub yearly: Vec<f64>,
}

impl Components {
    pub fn point(&self) -> Vec<f64> {
        (0..self.dates.len())
            .map(|i| self.trend[i] + self.weekly[i] + self.yearly[i])
            .collect()
    }

    /// CSV with columns `date,trend,weekly,yearly,point`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,trend,weekly,yearly,point\n");
        for (i, p) in self.point().iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.dates[i], self.trend[i], self.weekly[i], self.yearly[i], p
            ));
        }
        out
    }
}

fn fourier(t: f64, period: f64, order: usize, out: &mut Vec<f64>) {
    for n in 1..=order {
        let x = 2.0 * std::f64::consts::PI * n as f64 * t / period;
        out.push(x.sin());
        out.push(x.cos());
    }
}

/// Changepoints at evenly spaced observed rows within the leading
/// `range` fraction of the history. Fewer are placed when rows run short.
fn changepoints(tau: &[f64], wanted: usize, range: f64) -> Vec<f64> {
    let hist = (tau.len() as f64 * range).floor() as usize;
    if hist < 2 || wanted == 0 {
        return Vec::new();
    }
    let n = wanted.min(hist - 1);
    let last = (hist - 1) as f64;
    (1..=n)
        .map(|i| {
            let idx = (last * i as f64 / n as f64).round_ties_even() as usize;
            tau[idx]
        })
        .collect()
}

pub fn fit(series: &CountSeries, spec: &DecompSpec) -> Result<DecompFit> {
    spec.validate()?;
    if spec.weekly_order > 0 && series.granularity() != Granularity::Daily {
        return Err(Error::invalid("weekly seasonality needs a daily series"));
    }
    let points = series.observed_points();
    if points.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            available: points.len(),
        });
    }
    let start = series.start();
    let days: Vec<f64> = points
        .iter()
        .map(|(i, _)| (series.date(*i) - start).num_days() as f64)
        .collect();
    let y: Vec<f64> = points.iter().map(|(_, v)| *v).collect();
    let span = days[days.len() - 1];
    let tau: Vec<f64> = days.iter().map(|t| t / span).collect();
    let sd = std_dev(&y);
    let scale = if sd > 1e-12 { sd } else { 1.0 };

    let s = changepoints(&tau, spec.n_changepoints, spec.changepoint_range);
    let n_cp = s.len();
    let n_fourier = 2 * (spec.weekly_order + spec.yearly_order);
    let width = 2 + n_cp + n_fourier;
    let rows = y.len();

    let mut x = DMatrix::<f64>::zeros(rows, width);
    let mut row = Vec::with_capacity(width);
    for r in 0..rows {
        row.clear();
        row.push(1.0);
        row.push(tau[r]);
        row.extend(s.iter().map(|sj| (tau[r] - sj).max(0.0)));
        fourier(days[r], WEEK, spec.weekly_order, &mut row);
        fourier(days[r], YEAR, spec.yearly_order, &mut row);
        for (c, v) in row.iter().enumerate() {
            x[(r, c)] = *v;
        }
    }
    let target = DVector::from_iterator(rows, y.iter().map(|v| v / scale));
    let mut gram = x.transpose() * &x;
    for j in 0..n_cp {
        gram[(2 + j, 2 + j)] += spec.trend_penalty;
    }
    let rhs = x.transpose() * &target;
    let chol = gram.cholesky().ok_or_else(|| {
        Error::Singular(
            "decomposition design is singular; use a nonzero trend penalty or fewer Fourier terms"
                .into(),
        )
    })?;
    let b = chol.solve(&rhs);
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("decomposition solve produced non-finite coefficients".into()));
    }

    let fitted = &x * &b;
    let ssr: f64 = fitted
        .iter()
        .zip(&y)
        .map(|(f, v)| (v - f * scale).powi(2))
        .sum();

    Ok(DecompFit {
        k: b[1] * scale / span,
        m: b[0] * scale,
        delta: (0..n_cp).map(|j| b[2 + j] * scale / span).collect(),
        s,
        beta: (0..n_fourier).map(|j| b[2 + n_cp + j] * scale).collect(),
        sigma: (ssr / rows as f64).sqrt(),
        weekly_order: spec.weekly_order,
        yearly_order: spec.yearly_order,
        granularity: series.granularity(),
        start,
        span_days: span,
        history_end: series.last_date().expect("non-empty"),
        history_len: series.len(),
    })
}

impl DecompFit {
    fn day(&self, date: NaiveDate) -> f64 {
        (date - self.start).num_days() as f64
    }

    fn trend_at(&self, t: f64) -> f64 {
        let hinge: f64 = self
            .delta
            .iter()
            .zip(&self.s)
            .map(|(d, sj)| d * (t - sj * self.span_days).max(0.0))
            .sum();
        self.m + self.k * t + hinge
    }

    fn seasonal_at(&self, t: f64) -> (f64, f64) {
        let mut basis = Vec::with_capacity(self.beta.len());
        fourier(t, WEEK, self.weekly_order, &mut basis);
        let split = basis.len();
        fourier(t, YEAR, self.yearly_order, &mut basis);
        let weekly = basis[..split].iter().zip(&self.beta).map(|(a, b)| a * b).sum();
        let yearly = basis[split..]
            .iter()
            .zip(&self.beta[split..])
            .map(|(a, b)| a * b)
            .sum();
        (weekly, yearly)
    }

    /// Slope after the final changepoint, counts per day.
    pub fn final_slope(&self) -> f64 {
        self.k + self.delta.iter().sum::<f64>()
    }

    /// Amplitude of weekly harmonic `n` (1-based).
    pub fn weekly_amplitude(&self, n: usize) -> f64 {
        let i = 2 * (n - 1);
        self.beta[i].hypot(self.beta[i + 1])
    }

    /// Fitted value at every observed period of `series`, paired with the
    /// observation. Used to check the stored residual scale.
    pub fn in_sample(&self, series: &CountSeries) -> Vec<(f64, f64)> {
        series
            .observed_points()
            .into_iter()
            .map(|(i, v)| {
                let t = self.day(series.date(i));
                let (w, yr) = self.seasonal_at(t);
                (self.trend_at(t) + w + yr, v)
            })
            .collect()
    }
}

pub fn components(fit: &DecompFit, dates: &[NaiveDate]) -> Result<Components> {
    if dates.is_empty() {
        return Err(Error::invalid("no dates to predict"));
    }
    let mut c = Components {
        dates: dates.to_vec(),
        trend: Vec::with_capacity(dates.len()),
        weekly: Vec::with_capacity(dates.len()),
        yearly: Vec::with_capacity(dates.len()),
    };
    for d in dates {
        let t = fit.day(*d);
        let (w, yr) = fit.seasonal_at(t);
        c.trend.push(fit.trend_at(t));
        c.weekly.push(w);
        c.yearly.push(yr);
    }
    Ok(c)
}

/// Point predictions at `dates` with intervals that widen past the history
/// end as `sqrt(1 + periods_beyond / history_len)`. Point and bounds are
/// clamped at zero, so the component sum equals the point wherever it is
/// non-negative.
pub fn predict(fit: &DecompFit, dates: &[NaiveDate], level: f64) -> Result<Forecast> {
    check_level(level)?;
    let comp = components(fit, dates)?;
    let point = comp.point();
    let z = z_for_level(level);
    let half: Vec<f64> = dates
        .iter()
        .map(|d| {
            let beyond = fit.granularity.periods_between(fit.history_end, *d).max(0) as f64;
            z * fit.sigma * (1.0 + beyond / fit.history_len as f64).sqrt()
        })
        .collect();
    let lower = point.iter().zip(&half).map(|(p, h)| p - h).collect();
    let upper = point.iter().zip(&half).map(|(p, h)| p + h).collect();
    Ok(Forecast::with_dates(
        fit.granularity,
        fit.history_end,
        dates.to_vec(),
        point,
        lower,
        upper,
        level,
        IntervalKind::Model,
    ))
}

/// The `horizon` periods after the history end.
pub fn future_dates(fit: &DecompFit, horizon: usize) -> Vec<NaiveDate> {
    (1..=horizon)
        .map(|h| fit.granularity.advance(fit.history_end, h))
        .collect()
}
