//! Rolling-origin backtests and side-by-side model comparison.

mod metrics;

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::series::{CountSeries, Granularity};

pub use metrics::{pool, scores, Scores};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BacktestSpec {
    /// Periods before the first origin.
    pub initial_train: usize,
    /// Periods between consecutive origins.
    pub step: usize,
    /// Periods forecast at each origin.
    pub horizon: usize,
    pub granularity: Granularity,
}

impl BacktestSpec {
    pub fn validate(&self) -> Result<()> {
        if self.initial_train == 0 || self.step == 0 || self.horizon == 0 {
            return Err(Error::invalid(
                "initial_train, step and horizon must all be at least 1",
            ));
        }
        Ok(())
    }

    /// Origins `initial_train + k * step` whose horizon fits inside `n`
    /// periods.
    pub fn origins(&self, n: usize) -> Result<Vec<usize>> {
        self.validate()?;
        if n < self.initial_train + self.horizon {
            return Err(Error::NoFolds(format!(
                "{n} periods < initial_train {} + horizon {}",
                self.initial_train, self.horizon
            )));
        }
        Ok((self.initial_train..=n - self.horizon)
            .step_by(self.step)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    /// Start of the first forecast period.
    pub origin: NaiveDate,
    pub mae: f64,
    pub rmse: f64,
    pub smape: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mae: f64,
    pub rmse: f64,
    pub smape: f64,
    pub n_points: usize,
    pub per_fold: Vec<FoldReport>,
}

impl MetricReport {
    pub fn n_folds(&self) -> usize {
        self.per_fold.len()
    }
}

/// Single-fold report; `per_fold` is left empty.
pub fn metrics(actual: &[f64], predicted: &[f64]) -> Result<MetricReport> {
    let s = scores(actual, predicted)?;
    Ok(MetricReport {
        mae: s.mae,
        rmse: s.rmse,
        smape: s.smape,
        n_points: s.n_points,
        per_fold: Vec::new(),
    })
}

type FitForecast = dyn Fn(&CountSeries, usize) -> Result<Vec<f64>> + Send + Sync;

/// A named procedure that fits on a training series and returns `horizon`
/// point forecasts for the periods right after it.
pub struct ModelFactory {
    name: String,
    run: Box<FitForecast>,
}

impl ModelFactory {
    pub fn new(
        name: impl Into<String>,
        run: impl Fn(&CountSeries, usize) -> Result<Vec<f64>> + Send + Sync + 'static,
    ) -> Self {
        ModelFactory {
            name: name.into(),
            run: Box::new(run),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn run(&self, train: &CountSeries, horizon: usize) -> Result<Vec<f64>> {
        let point = (self.run)(train, horizon)?;
        if point.len() != horizon {
            return Err(Error::invalid(format!(
                "returned {} forecasts for horizon {horizon}",
                point.len()
            )));
        }
        Ok(point)
    }
}

impl std::fmt::Debug for ModelFactory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelFactory").field("name", &self.name).finish()
    }
}

/// Fits on everything before each origin and scores the observed actuals of
/// the following `horizon` periods. Folds whose actuals are all masked are
/// skipped.
pub fn rolling_backtest(
    factory: &ModelFactory,
    series: &CountSeries,
    spec: &BacktestSpec,
) -> Result<MetricReport> {
    if series.granularity() != spec.granularity {
        return Err(Error::invalid(format!(
            "backtest is {} but the series is {}",
            spec.granularity,
            series.granularity()
        )));
    }
    let origins = spec.origins(series.len())?;
    let mut per_fold = Vec::with_capacity(origins.len());
    let mut fold_scores = Vec::with_capacity(origins.len());
    for origin in origins {
        let scored: Vec<usize> = (origin..origin + spec.horizon)
            .filter(|i| series.is_observed(*i))
            .collect();
        if scored.is_empty() {
            continue;
        }
        let train = series.slice(0..origin);
        let point = factory.run(&train, spec.horizon)?;
        let actual: Vec<f64> = scored
            .iter()
            .map(|i| series.get(*i).expect("observed"))
            .collect();
        let predicted: Vec<f64> = scored.iter().map(|i| point[i - origin]).collect();
        let s = scores(&actual, &predicted)?;
        per_fold.push(FoldReport {
            origin: series.date(origin),
            mae: s.mae,
            rmse: s.rmse,
            smape: s.smape,
            n_points: s.n_points,
        });
        fold_scores.push(s);
    }
    let total = pool(&fold_scores)
        .ok_or_else(|| Error::NoFolds("every fold's actuals are masked".into()))?;
    Ok(MetricReport {
        mae: total.mae,
        rmse: total.rmse,
        smape: total.smape,
        n_points: total.n_points,
        per_fold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub reports: BTreeMap<String, MetricReport>,
    pub spec: BacktestSpec,
    /// SHA-256 of the series CSV (dates, values and mask).
    pub fingerprint: String,
    /// Model names by ascending RMSE; ties by name.
    pub ranking: Vec<String>,
}

impl ModelComparison {
    /// Columns `model,mae,rmse,smape,n_points,n_folds`, sorted by model name.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,mae,rmse,smape,n_points,n_folds\n");
        for (name, r) in &self.reports {
            out.push_str(&format!(
                "{name},{},{},{},{},{}\n",
                r.mae,
                r.rmse,
                r.smape,
                r.n_points,
                r.n_folds()
            ));
        }
        out
    }
}

pub fn fingerprint(series: &CountSeries) -> String {
    let digest = Sha256::digest(series.to_csv().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Backtests every factory on the same folds. Factories run on separate
/// threads; the result does not depend on their order.
pub fn compare(
    factories: &[ModelFactory],
    series: &CountSeries,
    spec: &BacktestSpec,
) -> Result<ModelComparison> {
    if factories.is_empty() {
        return Err(Error::invalid("nothing to compare"));
    }
    let mut names: Vec<&str> = factories.iter().map(|f| f.name()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::invalid(format!("model `{}` listed twice", w[0])));
    }
    let results: Vec<Result<MetricReport>> = std::thread::scope(|scope| {
        let handles: Vec<_> = factories
            .iter()
            .map(|f| scope.spawn(move || rolling_backtest(f, series, spec)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("backtest thread panicked"))
            .collect()
    });
    let mut reports = BTreeMap::new();
    for (factory, result) in factories.iter().zip(results) {
        let report = result.map_err(|e| Error::Model {
            name: factory.name().to_string(),
            source: Box::new(e),
        })?;
        reports.insert(factory.name().to_string(), report);
    }
    let mut ranking: Vec<String> = reports.keys().cloned().collect();
    ranking.sort_by(|a, b| reports[a].rmse.total_cmp(&reports[b].rmse).then(a.cmp(b)));
    Ok(ModelComparison {
        reports,
        spec: *spec,
        fingerprint: fingerprint(series),
        ranking,
    })
}
