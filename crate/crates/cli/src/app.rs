//! Argument parsing and dispatch.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands;
use crate::config::{RunConfig, Settings};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "attrition", version, about = "Forecast equipment-loss counts from loss records")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse, deduplicate and normalize a raw loss-record CSV
    Ingest(IngestArgs),
    /// Write a seeded synthetic record set
    Synth(SynthArgs),
    /// Count records per period and write the series
    Aggregate(RunArgs),
    /// Fit one model and forecast past the end of the series
    Forecast(RunArgs),
    /// Rolling-origin backtest of one model
    Backtest(BacktestArgs),
    /// Backtest several models on the same folds and rank them
    Compare(BacktestArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Raw records CSV
    #[arg(long)]
    data: PathBuf,
    /// Output directory
    #[arg(long, default_value = "attrition-out")]
    out: PathBuf,
    /// Location index CSV (location,raion,oblast)
    #[arg(long)]
    geo: Option<PathBuf>,
    /// Category correction CSV (model,category)
    #[arg(long)]
    corrections: Option<PathBuf>,
    /// Fail on locations missing from the index instead of leaving them blank
    #[arg(long)]
    strict_geo: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output directory
    #[arg(long, default_value = "attrition-out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Generator profile as JSON; the built-in profile when omitted
    #[arg(long)]
    profile: Option<PathBuf>,
}

/// Flags shared by the series commands. Each one given here overrides the
/// same key in `--config`.
#[derive(Debug, Args)]
struct RunArgs {
    /// Flat key = value settings file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Records CSV (raw or as written by `ingest`)
    #[arg(long)]
    data: Option<String>,
    /// Location index CSV
    #[arg(long)]
    geo: Option<String>,
    /// Output directory [default: attrition-out]
    #[arg(long)]
    out: Option<String>,
    /// daily or monthly [default: daily]
    #[arg(long)]
    granularity: Option<String>,
    /// Category to count; repeat or comma-separate for several [default: all]
    #[arg(long)]
    category: Vec<String>,
    /// Excluded span START:END (inclusive ISO dates); repeatable
    #[arg(long)]
    exclude: Vec<String>,
    /// arima, decomp, lstm, tcn or gbt [default: arima]
    #[arg(long)]
    model: Option<String>,
    /// Periods to forecast [default: 6]
    #[arg(long)]
    horizon: Option<String>,
    /// Interval coverage in (0, 1) [default: 0.95]
    #[arg(long)]
    level: Option<String>,
    /// Seed for model initialization [default: 0]
    #[arg(long)]
    seed: Option<String>,
    /// Also write SVG figures
    #[arg(long)]
    svg: bool,
    /// First forecast period; later history is ignored
    #[arg(long)]
    origin: Option<String>,
    /// First record date counted [default: 2022-02-24]
    #[arg(long)]
    from: Option<String>,
    /// Last record date counted [default: 2025-07-31]
    #[arg(long)]
    to: Option<String>,
    /// Model parameter override as family.key=value, e.g. lstm.epochs=50; repeatable
    #[arg(long = "param")]
    params: Vec<String>,
}

#[derive(Debug, Args)]
struct BacktestArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Periods before the first origin [default: six folds before the last observed period]
    #[arg(long)]
    initial: Option<String>,
    /// Periods between origins [default: 1]
    #[arg(long)]
    step: Option<String>,
    /// Models to compare, comma-separated [default: all five]
    #[arg(long)]
    models: Vec<String>,
}

impl RunArgs {
    fn settings(&self) -> Result<Settings, CliError> {
        let mut s = match &self.config {
            Some(path) => Settings::load(path)?,
            None => Settings::default(),
        };
        let single = [
            ("data", &self.data),
            ("geo", &self.geo),
            ("out", &self.out),
            ("granularity", &self.granularity),
            ("model", &self.model),
            ("horizon", &self.horizon),
            ("level", &self.level),
            ("seed", &self.seed),
            ("origin", &self.origin),
            ("from", &self.from),
            ("to", &self.to),
        ];
        for (key, value) in single {
            if let Some(v) = value {
                s.set(key, vec![v.clone()])?;
            }
        }
        for (key, values) in [("category", &self.category), ("exclude", &self.exclude)] {
            if !values.is_empty() {
                s.set(key, values.clone())?;
            }
        }
        if self.svg {
            s.set("svg", vec!["true".into()])?;
        }
        for p in &self.params {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--param `{p}` is not family.key=value")))?;
            if !k.contains('.') {
                return Err(CliError::Usage(format!("--param `{p}` is not family.key=value")));
            }
            s.set(k.trim(), vec![v.trim().to_string()])?;
        }
        Ok(s)
    }
}

impl BacktestArgs {
    fn config(&self) -> Result<RunConfig, CliError> {
        let mut s = self.run.settings()?;
        if let Some(v) = &self.initial {
            s.set("initial", vec![v.clone()])?;
        }
        if let Some(v) = &self.step {
            s.set("step", vec![v.clone()])?;
        }
        if !self.models.is_empty() {
            s.set("models", self.models.clone())?;
        }
        RunConfig::resolve(&s)
    }
}

fn dispatch(command: Command) -> Result<String, CliError> {
    match command {
        Command::Ingest(a) => commands::ingest(
            &a.data,
            &a.out,
            a.geo.as_deref(),
            a.corrections.as_deref(),
            a.strict_geo,
        ),
        Command::Synth(a) => commands::synth(&a.out, a.seed, a.profile.as_deref()),
        Command::Aggregate(a) => commands::aggregate_cmd(&RunConfig::resolve(&a.settings()?)?),
        Command::Forecast(a) => commands::forecast(&RunConfig::resolve(&a.settings()?)?),
        Command::Backtest(a) => commands::backtest(&a.config()?),
        Command::Compare(a) => commands::compare(&a.config()?),
    }
}

/// Runs the command line `args` (program name first) and returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}
