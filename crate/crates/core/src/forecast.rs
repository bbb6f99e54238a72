use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::Granularity;

/// How a forecast's interval bounds were derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalKind {
    /// From the fitted model's error variance.
    Model,
    /// Training RMSE scaled by the square root of the step; not a calibrated interval.
    Heuristic,
}

/// Point predictions with lower/upper bounds at `level`, for the periods
/// following `origin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub granularity: Granularity,
    /// Start of the last period of the history the forecast continues.
    pub origin: NaiveDate,
    pub dates: Vec<NaiveDate>,
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
    pub interval: IntervalKind,
}

impl Forecast {
    pub fn len(&self) -> usize {
        self.point.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point.is_empty()
    }

    /// Builds a forecast over consecutive periods after `origin`, clamping
    /// every value at zero.
    pub(crate) fn from_parts(
        granularity: Granularity,
        origin: NaiveDate,
        point: Vec<f64>,
        half_width: &[f64],
        level: f64,
        interval: IntervalKind,
    ) -> Forecast {
        let dates = (1..=point.len())
            .map(|h| granularity.advance(origin, h))
            .collect();
        let point: Vec<f64> = point.into_iter().map(|p| p.max(0.0)).collect();
        let lower = point
            .iter()
            .zip(half_width)
            .map(|(p, w)| (p - w).max(0.0))
            .collect();
        let upper = point.iter().zip(half_width).map(|(p, w)| p + w).collect();
        Forecast {
            granularity,
            origin,
            dates,
            point,
            lower,
            upper,
            level,
            interval,
        }
    }

    /// Like [`Forecast::from_parts`] with explicit (possibly asymmetric) bounds.
    pub(crate) fn from_bounds(
        granularity: Granularity,
        origin: NaiveDate,
        point: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        level: f64,
        interval: IntervalKind,
    ) -> Forecast {
        let dates = (1..=point.len())
            .map(|h| granularity.advance(origin, h))
            .collect();
        Self::with_dates(granularity, origin, dates, point, lower, upper, level, interval)
    }

    /// Arbitrary dates; point and bounds are clamped at zero and ordered.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn with_dates(
        granularity: Granularity,
        origin: NaiveDate,
        dates: Vec<NaiveDate>,
        point: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        level: f64,
        interval: IntervalKind,
    ) -> Forecast {
        let point: Vec<f64> = point.into_iter().map(|p| p.max(0.0)).collect();
        let lower = lower
            .into_iter()
            .zip(&point)
            .map(|(l, p)| l.max(0.0).min(*p))
            .collect();
        let upper = upper
            .into_iter()
            .zip(&point)
            .map(|(u, p)| u.max(*p))
            .collect();
        Forecast {
            granularity,
            origin,
            dates,
            point,
            lower,
            upper,
            level,
            interval,
        }
    }

    /// CSV with columns `period_start,point,lower,upper,level`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("period_start,point,lower,upper,level\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.dates[i].format("%Y-%m-%d"),
                self.point[i],
                self.lower[i],
                self.upper[i],
                self.level
            ));
        }
        out
    }
}

pub(crate) fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("interval level {level} outside (0, 1)")))
    }
}

pub(crate) const MAX_HORIZON: usize = 120;

pub(crate) fn check_horizon(horizon: usize) -> Result<()> {
    if (1..=MAX_HORIZON).contains(&horizon) {
        Ok(())
    } else {
        Err(Error::Horizon {
            horizon,
            max: MAX_HORIZON,
        })
    }
}
