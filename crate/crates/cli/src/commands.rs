//! Subcommand bodies. Each returns a short summary for stdout and writes its
//! files into the output directory; none of them writes over an input.

use std::fs;
use std::path::{Path, PathBuf};

use attrition_core::eval::{self, BacktestSpec, MetricReport};
use attrition_core::ingest::{
    generate_synthetic, normalize_geo, parse_records, parse_records_with, write_records,
    CorrectionTable, GeoIndex, ParseOptions, Profile, Schema, UnmatchedPolicy,
};
use attrition_core::series::aggregate;
use attrition_core::{CountSeries, Error};
use chrono::NaiveDate;

use crate::config::RunConfig;
use crate::figure::{emit_svg, FigureData, FigureKind, FigureSpec};
use crate::models::{self, ModelKind};
use crate::CliError;

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Output directory that refuses to overwrite any of the command's inputs.
struct Output {
    dir: PathBuf,
    inputs: Vec<PathBuf>,
}

impl Output {
    fn new(dir: &Path, inputs: &[&Path]) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let dir = dir.canonicalize().map_err(|e| CliError::io(dir, e))?;
        let inputs = inputs.iter().filter_map(|p| p.canonicalize().ok()).collect();
        Ok(Output { dir, inputs })
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        if self.inputs.contains(&path) {
            return Err(CliError::Usage(format!(
                "refusing to overwrite input file {}",
                path.display()
            )));
        }
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

pub fn ingest(
    data: &Path,
    out_dir: &Path,
    geo: Option<&Path>,
    corrections: Option<&Path>,
    strict_geo: bool,
) -> Result<String, CliError> {
    let text = read_text(data)?;
    let mut options = ParseOptions::default();
    if let Some(path) = corrections {
        options.corrections = CorrectionTable::from_csv(&read_text(path)?).map_err(CliError::Input)?;
    }
    let (mut records, report) =
        parse_records_with(&text, &Schema::default(), &options).map_err(CliError::Input)?;
    if let Some(path) = geo {
        let policy = if strict_geo {
            UnmatchedPolicy::Error
        } else {
            UnmatchedPolicy::LeaveBlank
        };
        let index = GeoIndex::from_csv(&read_text(path)?, policy).map_err(CliError::Input)?;
        records = normalize_geo(records, &index).map_err(CliError::Input)?;
    }
    let inputs: Vec<&Path> = [Some(data), geo, corrections].into_iter().flatten().collect();
    let out = Output::new(out_dir, &inputs)?;
    out.write("records.csv", &write_records(&records).map_err(CliError::Input)?)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Input(Error::Json(e)))?;
    out.write("ingest_report.json", &(json + "\n"))?;
    Ok(format!(
        "{} rows read, {} records kept, {} duplicates removed, {} unparsable rows, {} corrections",
        report.rows_read,
        records.len(),
        report.duplicates_removed,
        report.unparsable_rows.len(),
        report.category_corrections
    ))
}

pub fn synth(out_dir: &Path, seed: u64, profile: Option<&Path>) -> Result<String, CliError> {
    let parsed = match profile {
        Some(path) => serde_json::from_str::<Profile>(&read_text(path)?)
            .map_err(|e| CliError::Input(Error::Profile(e.to_string())))?,
        None => Profile::default(),
    };
    parsed.validate().map_err(CliError::Input)?;
    let records = generate_synthetic(seed, &parsed).map_err(CliError::Input)?;
    let inputs: Vec<&Path> = profile.into_iter().collect();
    let out = Output::new(out_dir, &inputs)?;
    let path = out.write("synthetic.csv", &write_records(&records).map_err(CliError::Input)?)?;
    Ok(format!("{} records written to {}", records.len(), path.display()))
}

/// Records from `cfg.data_path` as a count series with exclusions applied
/// and history cut at the forecast origin.
pub fn load_series(cfg: &RunConfig) -> Result<CountSeries, CliError> {
    let text = read_text(&cfg.data_path)?;
    let (mut records, _) = parse_records(&text, &Schema::default()).map_err(CliError::Input)?;
    if let Some(path) = &cfg.geo_index_path {
        let index = GeoIndex::from_csv(&read_text(path)?, UnmatchedPolicy::LeaveBlank)
            .map_err(CliError::Input)?;
        records = normalize_geo(records, &index).map_err(CliError::Input)?;
    }
    let filter = (!cfg.categories.is_empty()).then_some(cfg.categories.as_slice());
    let series = aggregate(&records, cfg.granularity, filter, cfg.range)
        .map_err(CliError::Input)?
        .apply_exclusions(&cfg.exclusions);
    let series = complete_periods(series, cfg.range)?;
    match cfg.origin {
        None => Ok(series),
        Some(origin) => {
            let g = cfg.granularity;
            let keep = g.periods_between(series.start(), g.period_start(origin));
            if keep < 1 || keep as usize > series.len() {
                return Err(CliError::Usage(format!(
                    "origin {origin} is outside the series {} .. {}",
                    series.start(),
                    series.date(series.len() - 1)
                )));
            }
            Ok(series.slice(0..keep as usize))
        }
    }
}

/// Drops a first or last period that the record window only partly covers;
/// its count would read as a collapse in losses.
fn complete_periods(series: CountSeries, (from, to): (NaiveDate, NaiveDate)) -> Result<CountSeries, CliError> {
    let g = series.granularity();
    let mut lo = 0;
    let mut hi = series.len();
    if series.start() < from {
        lo += 1;
    }
    if hi > lo && g.period_end(series.date(hi - 1)) > to {
        hi -= 1;
    }
    if lo >= hi {
        return Err(CliError::Usage(format!(
            "{from} .. {to} does not cover a complete {g} period"
        )));
    }
    Ok(series.slice(lo..hi))
}

fn output_for(cfg: &RunConfig) -> Result<Output, CliError> {
    let mut inputs: Vec<&Path> = vec![cfg.data_path.as_path()];
    inputs.extend(cfg.geo_index_path.as_deref());
    Output::new(&cfg.out_dir, &inputs)
}

fn subject(cfg: &RunConfig) -> String {
    let what = if cfg.categories.is_empty() {
        "equipment".to_string()
    } else {
        cfg.categories
            .iter()
            .map(|c| c.as_str())
            .collect::<Vec<_>>()
            .join(" + ")
    };
    format!("{} {what} losses", cfg.granularity)
}

fn model_title(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Arima => "ARIMA",
        ModelKind::Decomp => "Decomposition",
        ModelKind::Lstm => "LSTM",
        ModelKind::Tcn => "TCN",
        ModelKind::Gbt => "Gradient-boosted trees",
    }
}

pub fn aggregate_cmd(cfg: &RunConfig) -> Result<String, CliError> {
    let series = load_series(cfg)?;
    let out = output_for(cfg)?;
    let path = out.write("series.csv", &series.to_csv())?;
    if cfg.svg {
        let spec = FigureSpec::new(FigureKind::HistoryPlusForecast, format!("Observed {}", subject(cfg)));
        let data = FigureData::History {
            series: &series,
            forecast: None,
            exclusions: &cfg.exclusions,
        };
        out.write("series.svg", &emit_svg(&spec, &data)?)?;
    }
    Ok(format!(
        "{} periods ({} observed) written to {}",
        series.len(),
        series.observed_count(),
        path.display()
    ))
}

pub fn forecast(cfg: &RunConfig) -> Result<String, CliError> {
    let series = load_series(cfg)?;
    let mc = cfg.model_config()?;
    mc.validate(cfg.model, cfg.granularity)?;
    let run = models::fit_forecast(cfg.model, &mc, &series, cfg.horizon, cfg.level)
        .map_err(CliError::Model)?;
    let out = output_for(cfg)?;
    let path = out.write("forecast.csv", &run.forecast.to_csv())?;
    if let Some(c) = &run.components {
        out.write("components.csv", &c.to_csv())?;
    }
    if let Some(imp) = &run.importance {
        out.write("importance.csv", &imp.to_csv())?;
    }
    if cfg.svg {
        let title = format!("{} forecast of {}", model_title(cfg.model), subject(cfg));
        let spec = FigureSpec::new(FigureKind::HistoryPlusForecast, title);
        let data = FigureData::History {
            series: &series,
            forecast: Some(&run.forecast),
            exclusions: &cfg.exclusions,
        };
        out.write("forecast.svg", &emit_svg(&spec, &data)?)?;
        if let Some(c) = &run.components {
            let spec = FigureSpec::new(FigureKind::Components, format!("Components of {}", subject(cfg)));
            out.write("components.svg", &emit_svg(&spec, &FigureData::Components(c))?)?;
        }
    }
    Ok(format!(
        "{}: {} periods from {} written to {}",
        cfg.model,
        run.forecast.len(),
        run.forecast.dates[0],
        path.display()
    ))
}

/// Six folds ending at the last observed period unless `initial` is given.
fn backtest_spec(cfg: &RunConfig, series: &CountSeries) -> BacktestSpec {
    let end = series.last_observed().map_or(0, |i| i + 1);
    let initial_train = cfg
        .initial_train
        .unwrap_or_else(|| end.saturating_sub(cfg.horizon + 5 * cfg.step).max(1));
    BacktestSpec {
        initial_train,
        step: cfg.step,
        horizon: cfg.horizon,
        granularity: cfg.granularity,
    }
}

fn folds_csv<'a>(reports: impl IntoIterator<Item = (&'a str, &'a MetricReport)>) -> String {
    let mut out = String::from("model,origin,mae,rmse,smape,n_points\n");
    for (name, r) in reports {
        for f in &r.per_fold {
            out.push_str(&format!(
                "{name},{},{},{},{},{}\n",
                f.origin, f.mae, f.rmse, f.smape, f.n_points
            ));
        }
    }
    out
}

fn folds_svg<'a>(
    title: String,
    reports: impl IntoIterator<Item = (&'a str, &'a MetricReport)>,
) -> Result<String, CliError> {
    let lines: Vec<(String, Vec<(NaiveDate, f64)>)> = reports
        .into_iter()
        .map(|(name, r)| (name.to_string(), r.per_fold.iter().map(|f| (f.origin, f.rmse)).collect()))
        .collect();
    let spec = FigureSpec::new(FigureKind::BacktestFolds, title);
    Ok(emit_svg(&spec, &FigureData::Folds { metric: "rmse", lines: &lines })?)
}

fn summary(r: &MetricReport) -> String {
    format!("mae {:.4}, rmse {:.4}, smape {:.4}", r.mae, r.rmse, r.smape)
}

pub fn backtest(cfg: &RunConfig) -> Result<String, CliError> {
    let series = load_series(cfg)?;
    let mc = cfg.model_config()?;
    mc.validate(cfg.model, cfg.granularity)?;
    let spec = backtest_spec(cfg, &series);
    let factory = models::factory(cfg.model, &mc);
    let report = eval::rolling_backtest(&factory, &series, &spec).map_err(CliError::Model)?;
    let out = output_for(cfg)?;
    let name = cfg.model.as_str();
    out.write("backtest.csv", &folds_csv([(name, &report)]))?;
    let json = serde_json::json!({
        "model": name,
        "spec": spec,
        "fingerprint": eval::fingerprint(&series),
        "report": report,
    });
    out.write("backtest.json", &(serde_json::to_string_pretty(&json).expect("json value") + "\n"))?;
    if cfg.svg {
        let title = format!("{} backtest on {}", model_title(cfg.model), subject(cfg));
        out.write("backtest_folds.svg", &folds_svg(title, [(name, &report)])?)?;
    }
    Ok(format!("{name}: folds: {}, {}", report.n_folds(), summary(&report)))
}

pub fn compare(cfg: &RunConfig) -> Result<String, CliError> {
    let series = load_series(cfg)?;
    let mc = cfg.model_config()?;
    for kind in &cfg.models {
        mc.validate(*kind, cfg.granularity)?;
    }
    let spec = backtest_spec(cfg, &series);
    let factories: Vec<_> = cfg.models.iter().map(|k| models::factory(*k, &mc)).collect();
    let comparison = eval::compare(&factories, &series, &spec).map_err(CliError::Model)?;
    let out = output_for(cfg)?;
    out.write("comparison.csv", &comparison.to_csv())?;
    let json = serde_json::to_string_pretty(&comparison).map_err(|e| CliError::Model(Error::Json(e)))?;
    out.write("comparison.json", &(json + "\n"))?;
    let reports = || comparison.reports.iter().map(|(k, v)| (k.as_str(), v));
    out.write("folds.csv", &folds_csv(reports()))?;
    if cfg.svg {
        type Metric = fn(&MetricReport) -> f64;
        let metrics: [(&str, Metric); 3] = [("mae", |r| r.mae), ("rmse", |r| r.rmse), ("smape", |r| r.smape)];
        for (metric, value) in metrics {
            let bars: Vec<(String, f64)> = reports().map(|(k, r)| (k.to_string(), value(r))).collect();
            let spec = FigureSpec::new(
                FigureKind::ComparisonBars,
                format!("Backtest {} on {}", metric.to_uppercase(), subject(cfg)),
            );
            out.write(
                &format!("comparison_{metric}.svg"),
                &emit_svg(&spec, &FigureData::Bars { metric, bars: &bars })?,
            )?;
        }
        out.write("backtest_folds.svg", &folds_svg(format!("Backtest folds on {}", subject(cfg)), reports())?)?;
    }
    let folds = comparison.reports.values().next().map_or(0, |r| r.n_folds());
    let mut lines = vec![format!("folds: {folds}")];
    for name in &comparison.ranking {
        lines.push(format!("{name}: {}", summary(&comparison.reports[name])));
    }
    lines.push(format!("ranking: {}", comparison.ranking.join(", ")));
    Ok(lines.join("\n"))
}
