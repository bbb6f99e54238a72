//! The five model families behind one name-keyed interface, with presets
//! per granularity and `family.key=value` overrides.

use std::fmt;
use std::str::FromStr;

use attrition_core::arima::{self, ArimaSpec};
use attrition_core::decomp::{self, Components, DecompSpec};
use attrition_core::eval::ModelFactory;
use attrition_core::gbtrees::{self, FeatureImportance, GbtSpec};
use attrition_core::neural::{lstm_fit, lstm_forecast, tcn_fit, tcn_forecast, LstmSpec, TcnSpec};
use attrition_core::{CountSeries, Forecast, Granularity};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelKind {
    Arima,
    Decomp,
    Lstm,
    Tcn,
    Gbt,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Arima,
        ModelKind::Decomp,
        ModelKind::Gbt,
        ModelKind::Lstm,
        ModelKind::Tcn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Arima => "arima",
            ModelKind::Decomp => "decomp",
            ModelKind::Lstm => "lstm",
            ModelKind::Tcn => "tcn",
            ModelKind::Gbt => "gbt",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "arima" => Ok(ModelKind::Arima),
            "decomp" | "prophet" => Ok(ModelKind::Decomp),
            "lstm" => Ok(ModelKind::Lstm),
            "tcn" => Ok(ModelKind::Tcn),
            "gbt" | "xgboost" => Ok(ModelKind::Gbt),
            other => Err(CliError::Usage(format!(
                "unknown model `{other}` (expected arima, decomp, lstm, tcn or gbt)"
            ))),
        }
    }
}

/// Settings for every family; only the chosen family's part is used.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub arima: ArimaSpec,
    pub decomp: DecompSpec,
    pub lstm: LstmSpec,
    pub tcn: TcnSpec,
    pub gbt: GbtSpec,
}

impl ModelConfig {
    /// Defaults for `granularity`. Monthly histories hold about 40 periods,
    /// too few to identify a yearly cycle or to train wide networks: the
    /// decomposition keeps only its trend with a penalty scaled down to the
    /// shorter series, and the networks are small with short windows.
    pub fn preset(granularity: Granularity, seed: u64) -> Self {
        let mut cfg = match granularity {
            Granularity::Daily => ModelConfig {
                arima: ArimaSpec::log_111(),
                decomp: DecompSpec::default(),
                lstm: LstmSpec::default(),
                tcn: TcnSpec::default(),
                gbt: GbtSpec::default(),
            },
            Granularity::Monthly => ModelConfig {
                arima: ArimaSpec::log_111(),
                decomp: DecompSpec {
                    weekly_order: 0,
                    yearly_order: 0,
                    n_changepoints: 25,
                    changepoint_range: 0.95,
                    trend_penalty: 0.1,
                    ..DecompSpec::default()
                },
                lstm: LstmSpec {
                    lookback: 6,
                    hidden: 16,
                    epochs: 400,
                    learning_rate: 1e-2,
                    use_weekday: false,
                    ..LstmSpec::default()
                },
                tcn: TcnSpec {
                    kernel: 2,
                    dilations: vec![1, 2, 4],
                    channels: 16,
                    epochs: 100,
                    learning_rate: 3e-3,
                    ..TcnSpec::default()
                },
                gbt: GbtSpec::monthly(),
            },
        };
        cfg.lstm.seed = seed;
        cfg.tcn.seed = seed;
        cfg.gbt.seed = seed;
        cfg
    }

    /// Applies one `family.key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let bad = || CliError::Usage(format!("bad value `{value}` for `{key}`"));
        let (family, field) = key
            .split_once('.')
            .ok_or_else(|| CliError::Usage(format!("parameter `{key}` is not family.key")))?;
        let int = || value.trim().parse::<usize>().map_err(|_| bad());
        let real = || value.trim().parse::<f64>().map_err(|_| bad());
        let flag = || match value.trim() {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            _ => Err(bad()),
        };
        let list = || -> Result<Vec<usize>, CliError> {
            if value.trim().is_empty() {
                return Ok(Vec::new());
            }
            value
                .split(',')
                .map(|v| v.trim().parse::<usize>().map_err(|_| bad()))
                .collect()
        };
        match (family, field) {
            ("arima", "p") => self.arima.p = int()?,
            ("arima", "d") => self.arima.d = int()?,
            ("arima", "q") => self.arima.q = int()?,
            ("arima", "log") => self.arima.use_log = flag()?,
            ("arima", "intercept") => self.arima.intercept = flag()?,
            ("decomp", "n_changepoints") => self.decomp.n_changepoints = int()?,
            ("decomp", "changepoint_range") => self.decomp.changepoint_range = real()?,
            ("decomp", "weekly_order") => self.decomp.weekly_order = int()?,
            ("decomp", "yearly_order") => self.decomp.yearly_order = int()?,
            ("decomp", "trend_penalty") => self.decomp.trend_penalty = real()?,
            ("lstm", "lookback") => self.lstm.lookback = int()?,
            ("lstm", "hidden") => self.lstm.hidden = int()?,
            ("lstm", "epochs") => self.lstm.epochs = int()?,
            ("lstm", "learning_rate") => self.lstm.learning_rate = real()?,
            ("lstm", "use_weekday") => self.lstm.use_weekday = flag()?,
            ("lstm", "use_month") => self.lstm.use_month = flag()?,
            ("tcn", "kernel") => self.tcn.kernel = int()?,
            ("tcn", "dilations") => self.tcn.dilations = list()?,
            ("tcn", "channels") => self.tcn.channels = int()?,
            ("tcn", "epochs") => self.tcn.epochs = int()?,
            ("tcn", "learning_rate") => self.tcn.learning_rate = real()?,
            ("tcn", "window") => self.tcn.window = Some(int()?),
            ("gbt", "n_trees") => self.gbt.n_trees = int()?,
            ("gbt", "max_depth") => self.gbt.max_depth = int()?,
            ("gbt", "learning_rate") => self.gbt.learning_rate = real()?,
            ("gbt", "min_samples_leaf") => self.gbt.min_samples_leaf = int()?,
            ("gbt", "lags") => self.gbt.lags = list()?,
            ("gbt", "ma_windows") => self.gbt.ma_windows = list()?,
            ("gbt", "weekday") => self.gbt.calendar.weekday = flag()?,
            ("gbt", "month") => self.gbt.calendar.month = flag()?,
            ("gbt", "linear_index") => self.gbt.calendar.linear_index = flag()?,
            _ => return Err(CliError::Usage(format!("unknown parameter `{key}`"))),
        }
        Ok(())
    }

    /// Checks the chosen family's settings without fitting.
    pub fn validate(&self, kind: ModelKind, granularity: Granularity) -> Result<(), CliError> {
        let result = match kind {
            ModelKind::Arima => self.arima.validate(),
            ModelKind::Decomp => self.decomp.validate(),
            ModelKind::Lstm => self.lstm.validate(granularity),
            ModelKind::Tcn => self.tcn.validate(),
            ModelKind::Gbt => self.gbt.validate().and_then(|_| self.gbt.layout().map(|_| ())),
        };
        result.map_err(|e| CliError::Usage(e.to_string()))
    }
}

/// A forecast plus whatever side products the family offers.
#[derive(Debug, Clone)]
pub struct ModelRun {
    pub forecast: Forecast,
    pub components: Option<Components>,
    pub importance: Option<FeatureImportance>,
}

/// Fits `kind` on `series` and forecasts `horizon` periods past its end.
pub fn fit_forecast(
    kind: ModelKind,
    cfg: &ModelConfig,
    series: &CountSeries,
    horizon: usize,
    level: f64,
) -> attrition_core::Result<ModelRun> {
    let mut components = None;
    let mut importance = None;
    let forecast = match kind {
        ModelKind::Arima => {
            let fit = arima::fit(series, &cfg.arima)?;
            arima::forecast(&fit, series, &cfg.arima, horizon, level)?
        }
        ModelKind::Decomp => {
            let fit = decomp::fit(series, &cfg.decomp)?;
            let future = decomp::future_dates(&fit, horizon);
            let span: Vec<_> = (0..series.len()).map(|i| series.date(i)).chain(future.iter().copied()).collect();
            components = Some(decomp::components(&fit, &span)?);
            decomp::predict(&fit, &future, level)?
        }
        ModelKind::Lstm => {
            let (model, _) = lstm_fit(series, &cfg.lstm)?;
            lstm_forecast(&model, series, horizon, level)?
        }
        ModelKind::Tcn => {
            let (model, _) = tcn_fit(series, &cfg.tcn)?;
            tcn_forecast(&model, series, horizon, level)?
        }
        ModelKind::Gbt => {
            let model = gbtrees::fit_series(series, &cfg.gbt)?;
            importance = Some(gbtrees::feature_importance(&model));
            gbtrees::forecast_recursive(&model, series, &cfg.gbt, horizon, level)?
        }
    };
    Ok(ModelRun {
        forecast,
        components,
        importance,
    })
}

/// Backtest factory returning point forecasts.
pub fn factory(kind: ModelKind, cfg: &ModelConfig) -> ModelFactory {
    let cfg = cfg.clone();
    ModelFactory::new(kind.as_str(), move |train, horizon| {
        fit_forecast(kind, &cfg, train, horizon, 0.95).map(|run| run.forecast.point)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for kind in ModelKind::ALL {
            assert_eq!(kind.as_str().parse::<ModelKind>().unwrap(), kind);
        }
        assert!("prophet".parse::<ModelKind>().is_ok());
        assert!(matches!("sarima".parse::<ModelKind>(), Err(CliError::Usage(_))));
    }

    #[test]
    fn overrides() {
        let mut cfg = ModelConfig::preset(Granularity::Daily, 4);
        assert_eq!(cfg.lstm.seed, 4);
        cfg.set("tcn.dilations", "1,2").unwrap();
        cfg.set("gbt.weekday", "false").unwrap();
        cfg.set("arima.p", "2").unwrap();
        assert_eq!(cfg.tcn.dilations, vec![1, 2]);
        assert!(!cfg.gbt.calendar.weekday);
        assert_eq!(cfg.arima.p, 2);
        assert!(cfg.set("arima.p", "x").is_err());
        assert!(cfg.set("nope", "1").is_err());
        assert!(cfg.set("lstm.dropout", "1").is_err());
    }

    #[test]
    fn monthly_presets_are_valid() {
        let cfg = ModelConfig::preset(Granularity::Monthly, 0);
        for kind in ModelKind::ALL {
            cfg.validate(kind, Granularity::Monthly).unwrap();
        }
        assert!(ModelConfig::preset(Granularity::Daily, 0)
            .validate(ModelKind::Lstm, Granularity::Monthly)
            .is_err());
    }
}
