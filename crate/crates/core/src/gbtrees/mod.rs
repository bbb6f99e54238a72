//! Gradient-boosted regression trees on lag, moving-average and calendar
//! features, forecasting recursively.
//!
//! Boosting uses squared error: every tree is grown greedily on the current
//! residuals with an exhaustive midpoint split search, and its leaf means are
//! added with shrinkage `learning_rate`.

mod tree;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{check_level, Forecast, IntervalKind};
use crate::series::{make_supervised, CalendarFlags, CountSeries, FeatureLayout, Granularity, SupervisedMatrix};
use crate::stats::z_for_level;

pub use tree::{Node, RegressionTree};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtSpec {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    pub lags: Vec<usize>,
    pub ma_windows: Vec<usize>,
    pub calendar: CalendarFlags,
    /// Unused: fitting is exhaustive and draws no random numbers.
    pub seed: u64,
}

impl Default for GbtSpec {
    fn default() -> Self {
        GbtSpec {
            n_trees: 200,
            max_depth: 4,
            learning_rate: 0.1,
            min_samples_leaf: 5,
            lags: (1..=14).collect(),
            ma_windows: vec![7, 28],
            calendar: CalendarFlags::ALL,
            seed: 0,
        }
    }
}

impl GbtSpec {
    /// Short lags, a quarterly mean, month one-hots and the time index.
    pub fn monthly() -> Self {
        GbtSpec {
            lags: vec![1, 2, 3],
            ma_windows: vec![3],
            calendar: CalendarFlags {
                weekday: false,
                month: true,
                linear_index: true,
            },
            ..GbtSpec::default()
        }
    }

    pub fn for_granularity(granularity: Granularity) -> Self {
        match granularity {
            Granularity::Daily => GbtSpec::default(),
            Granularity::Monthly => GbtSpec::monthly(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(Error::invalid(
                "n_trees, max_depth and min_samples_leaf must be at least 1",
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::invalid(format!(
                "learning rate {} outside (0, 1]",
                self.learning_rate
            )));
        }
        Ok(())
    }

    pub fn layout(&self) -> Result<FeatureLayout> {
        FeatureLayout::new(&self.lags, &self.ma_windows, self.calendar)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub base_score: f64,
    pub learning_rate: f64,
    pub feature_names: Vec<String>,
    /// Original feature ids of the columns, as in [`SupervisedMatrix`].
    pub feature_ids: Vec<usize>,
    pub trees: Vec<RegressionTree>,
    /// Root mean squared training error of the full ensemble.
    pub rmse_train: f64,
    /// Squared-error reduction of every tree, summed while fitting.
    pub fit_gain: f64,
}

impl GbtModel {
    /// `base_score + learning_rate * sum of tree outputs`.
    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.feature_names.len() {
            return Err(Error::invalid(format!(
                "feature vector has {} entries, model expects {}",
                features.len(),
                self.feature_names.len()
            )));
        }
        Ok(self.raw_predict(features, self.trees.len()))
    }

    fn raw_predict(&self, x: &[f64], stages: usize) -> f64 {
        let sum: f64 = self.trees[..stages].iter().map(|t| t.predict(x)).sum();
        self.base_score + self.learning_rate * sum
    }

    /// Training RMSE on `matrix` using the first `k` trees, for `k = 0..=n_trees`.
    pub fn staged_rmse(&self, matrix: &SupervisedMatrix) -> Vec<f64> {
        let n = matrix.len() as f64;
        let mut preds = vec![self.base_score; matrix.len()];
        let rmse = |p: &[f64]| {
            let sse: f64 = matrix
                .rows
                .iter()
                .zip(p)
                .map(|(r, p)| (r.target - p).powi(2))
                .sum();
            (sse / n).sqrt()
        };
        let mut out = vec![rmse(&preds)];
        for tree in &self.trees {
            for (p, r) in preds.iter_mut().zip(&matrix.rows) {
                *p += self.learning_rate * tree.predict(&r.features);
            }
            out.push(rmse(&preds));
        }
        out
    }
}

/// Gain per feature, sorted by descending gain (ties keep column order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub gains: Vec<(String, f64)>,
}

impl FeatureImportance {
    pub fn total(&self) -> f64 {
        self.gains.iter().map(|(_, g)| g).sum()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.gains.iter().find(|(n, _)| n == name).map(|(_, g)| *g)
    }

    /// CSV with columns `feature,gain`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,gain\n");
        for (name, gain) in &self.gains {
            out.push_str(&format!("{name},{gain}\n"));
        }
        out
    }
}

pub fn fit(matrix: &SupervisedMatrix, spec: &GbtSpec) -> Result<GbtModel> {
    spec.validate()?;
    if matrix.is_empty() {
        return Err(Error::invalid("empty training matrix"));
    }
    let needed = 2 * spec.min_samples_leaf;
    if matrix.len() < needed {
        return Err(Error::TooShort {
            needed,
            available: matrix.len(),
        });
    }
    if let Some(row) = matrix
        .rows
        .iter()
        .position(|r| !r.target.is_finite() || r.features.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::NonFinite { row });
    }
    let targets: Vec<f64> = matrix.rows.iter().map(|r| r.target).collect();
    let base_score = if targets.iter().all(|t| *t == targets[0]) {
        targets[0]
    } else {
        crate::stats::mean(&targets)
    };
    let columns: Vec<Vec<f64>> = (0..matrix.width())
        .map(|j| matrix.rows.iter().map(|r| r.features[j]).collect())
        .collect();
    let cols = tree::Columns::new(&columns, &matrix.feature_ids);
    let mut preds = vec![base_score; targets.len()];
    let mut trees = Vec::with_capacity(spec.n_trees);
    let mut fit_gain = 0.0;
    for _ in 0..spec.n_trees {
        let residuals: Vec<f64> = targets.iter().zip(&preds).map(|(t, p)| t - p).collect();
        let tree = tree::Grower {
            columns: &cols,
            residuals: &residuals,
            max_depth: spec.max_depth,
            min_leaf: spec.min_samples_leaf,
        }
        .grow();
        // reduction in squared error about the mean residual
        let n = residuals.len() as f64;
        let sum: f64 = residuals.iter().sum();
        let mut before = -sum * sum / n;
        let mut after = 0.0;
        for (i, r) in matrix.rows.iter().enumerate() {
            let out = tree.predict(&r.features);
            before += residuals[i].powi(2);
            after += (residuals[i] - out).powi(2);
            preds[i] += spec.learning_rate * out;
        }
        fit_gain += before - after;
        trees.push(tree);
    }
    let sse: f64 = targets.iter().zip(&preds).map(|(t, p)| (t - p).powi(2)).sum();
    Ok(GbtModel {
        base_score,
        learning_rate: spec.learning_rate,
        feature_names: matrix.feature_names.clone(),
        feature_ids: matrix.feature_ids.clone(),
        trees,
        rmse_train: (sse / targets.len() as f64).sqrt(),
        fit_gain,
    })
}

/// Builds the supervised matrix described by `spec` and fits it.
pub fn fit_series(series: &CountSeries, spec: &GbtSpec) -> Result<GbtModel> {
    spec.validate()?;
    let matrix = make_supervised(series, &spec.lags, &spec.ma_windows, spec.calendar)?;
    fit(&matrix, spec)
}

pub fn feature_importance(model: &GbtModel) -> FeatureImportance {
    let mut gains = vec![0.0; model.feature_names.len()];
    for tree in &model.trees {
        tree.splits(|feature, gain| gains[feature] += gain);
    }
    let mut gains: Vec<(String, f64)> = model.feature_names.iter().cloned().zip(gains).collect();
    gains.sort_by(|a, b| b.1.total_cmp(&a.1));
    FeatureImportance { gains }
}

/// Recursive forecast from the end of `series` with the feature layout of
/// `spec`; returns the forecast and the feature vector used at each step.
pub fn forecast_path(
    model: &GbtModel,
    series: &CountSeries,
    spec: &GbtSpec,
    horizon: usize,
    level: f64,
) -> Result<(Forecast, Vec<Vec<f64>>)> {
    // no upper cap: the recursion stays well defined at any length
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    check_level(level)?;
    let layout = spec.layout()?;
    if layout.calendar.weekday && series.granularity() != Granularity::Daily {
        return Err(Error::invalid("weekday features need a daily series"));
    }
    if layout.width() != model.feature_names.len() {
        return Err(Error::invalid(format!(
            "spec describes {} features, model has {}",
            layout.width(),
            model.feature_names.len()
        )));
    }
    let n = series.len();
    let back = layout.max_history();
    if n < back.max(1) {
        return Err(Error::TooShort {
            needed: back.max(1),
            available: n,
        });
    }
    let mut tail = Vec::with_capacity(back);
    for i in n - back..n {
        tail.push(series.get(i).ok_or(Error::MaskedTail { date: series.date(i) })?);
    }
    let granularity = series.granularity();
    let origin = series.last_date().expect("non-empty");
    let z = z_for_level(level);
    let mut point = Vec::with_capacity(horizon);
    let mut half = Vec::with_capacity(horizon);
    let mut features = Vec::with_capacity(horizon);
    for step in 1..=horizon {
        let t = n - 1 + step;
        let date: NaiveDate = granularity.advance(origin, step);
        let history = |j: usize| {
            if j < n {
                Some(tail[j + back - n])
            } else {
                Some(point[j - n])
            }
        };
        let x = layout
            .build(t, date, series.start(), history)
            .expect("history covers every look-back");
        let value = model.raw_predict(&x, model.trees.len()).max(0.0);
        features.push(x);
        point.push(value);
        half.push(z * model.rmse_train * (step as f64).sqrt());
    }
    let forecast = Forecast::from_parts(granularity, origin, point, &half, level, IntervalKind::Heuristic);
    Ok((forecast, features))
}

pub fn forecast_recursive(
    model: &GbtModel,
    series: &CountSeries,
    spec: &GbtSpec,
    horizon: usize,
    level: f64,
) -> Result<Forecast> {
    forecast_path(model, series, spec, horizon, level).map(|(f, _)| f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::SupervisedRow;

    fn matrix(xs: &[[f64; 2]], ys: &[f64]) -> SupervisedMatrix {
        let d = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        let rows = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| SupervisedRow {
                features: x.to_vec(),
                target: *y,
                target_date: d,
            })
            .collect();
        SupervisedMatrix::new(vec!["a".into(), "b".into()], rows).unwrap()
    }

    fn stump_model() -> GbtModel {
        GbtModel {
            base_score: 10.0,
            learning_rate: 1.0,
            feature_names: vec!["x0".into()],
            feature_ids: vec![0],
            trees: vec![RegressionTree {
                root: Node::Split {
                    feature: 0,
                    threshold: 5.0,
                    gain: 0.0,
                    left: Box::new(Node::Leaf { value: -1.0 }),
                    right: Box::new(Node::Leaf { value: 1.0 }),
                },
            }],
            rmse_train: 0.0,
            fit_gain: 0.0,
        }
    }

    #[test]
    fn hand_built_stump() {
        let m = stump_model();
        assert_eq!(m.predict(&[3.0]).unwrap(), 9.0);
        assert_eq!(m.predict(&[7.0]).unwrap(), 11.0);
        assert_eq!(m.predict(&[5.0]).unwrap(), 9.0);
        assert!(m.predict(&[1.0, 2.0]).is_err());
        let empty = GbtModel {
            trees: vec![],
            ..stump_model()
        };
        assert_eq!(empty.predict(&[3.0]).unwrap(), 10.0);
    }

    #[test]
    fn constant_targets_give_zero_leaves() {
        let xs: Vec<[f64; 2]> = (0..12).map(|i| [i as f64, (i * 7 % 5) as f64]).collect();
        let m = fit(&matrix(&xs, &[0.1; 12]), &GbtSpec { n_trees: 5, ..GbtSpec::default() }).unwrap();
        assert_eq!(m.base_score, 0.1);
        assert!(m.trees.iter().all(|t| *t == RegressionTree::leaf(0.0)));
        for x in &xs {
            assert_eq!(m.predict(x).unwrap(), 0.1);
        }
        assert!(feature_importance(&m).gains.iter().all(|(_, g)| *g == 0.0));
    }

    #[test]
    fn input_errors() {
        let xs = [[1.0, 2.0]; 12];
        let mut ys = [1.0; 12];
        assert!(fit(&matrix(&xs[..0], &ys[..0]), &GbtSpec::default()).is_err());
        assert!(matches!(
            fit(&matrix(&xs[..9], &ys[..9]), &GbtSpec::default()),
            Err(Error::TooShort { needed: 10, .. })
        ));
        ys[4] = f64::NAN;
        assert!(matches!(
            fit(&matrix(&xs, &ys), &GbtSpec::default()),
            Err(Error::NonFinite { row: 4 })
        ));
        let bad = GbtSpec {
            learning_rate: 1.5,
            ..GbtSpec::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn json_nests_nodes() {
        let json = serde_json::to_value(stump_model()).unwrap();
        assert_eq!(json["trees"][0]["root"]["kind"], "split");
        assert_eq!(json["trees"][0]["root"]["left"]["value"], -1.0);
        let back: GbtModel = serde_json::from_value(json).unwrap();
        assert_eq!(back, stump_model());
    }
}
