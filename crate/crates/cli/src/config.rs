//! Run configuration: a flat `key = value` file overlaid by command-line
//! flags, resolved into a validated [`RunConfig`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use attrition_core::ingest::{Category, COVERAGE_END, COVERAGE_START};
use attrition_core::{ExclusionWindow, Granularity};
use chrono::NaiveDate;

use crate::models::{ModelConfig, ModelKind};
use crate::CliError;

const KEYS: [&str; 17] = [
    "data", "geo", "out", "granularity", "category", "exclude", "model", "models", "horizon",
    "level", "seed", "svg", "origin", "from", "to", "initial", "step",
];

/// Raw settings by key. Keys listed several times in a file accumulate;
/// a flag replaces everything the file said about its key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, Vec<String>>,
}

impl Settings {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut s = Settings::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", n + 1)))?;
            let key = key.trim();
            check_key(key).map_err(|e| CliError::Usage(format!("config line {}: {e}", n + 1)))?;
            s.values
                .entry(key.to_string())
                .or_default()
                .push(value.trim().to_string());
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Settings::parse(&text)
    }

    /// Replaces `key` with `values` (a flag given on the command line).
    pub fn set(&mut self, key: &str, values: Vec<String>) -> Result<(), CliError> {
        check_key(key).map_err(CliError::Usage)?;
        self.values.insert(key.to_string(), values);
        Ok(())
    }

    fn last(&self, key: &str) -> Option<&str> {
        self.values.get(key).and_then(|v| v.last()).map(String::as_str)
    }

    /// Every value of a list key, with comma-separated entries split.
    fn list(&self, key: &str) -> Vec<String> {
        self.values
            .get(key)
            .into_iter()
            .flatten()
            .flat_map(|v| v.split(','))
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .collect()
    }
}

fn check_key(key: &str) -> Result<(), String> {
    if KEYS.contains(&key) || key.contains('.') {
        Ok(())
    } else {
        Err(format!("unknown setting `{key}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data_path: PathBuf,
    pub geo_index_path: Option<PathBuf>,
    /// Empty means every category.
    pub categories: Vec<Category>,
    pub granularity: Granularity,
    pub exclusions: Vec<ExclusionWindow>,
    pub model: ModelKind,
    /// Models for `compare`; defaults to all five.
    pub models: Vec<ModelKind>,
    /// `family.key` overrides on top of the granularity preset.
    pub params: Vec<(String, String)>,
    pub horizon: usize,
    pub level: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub svg: bool,
    /// First forecast period; history from here on is dropped.
    pub origin: Option<NaiveDate>,
    /// Aggregation window for the records.
    pub range: (NaiveDate, NaiveDate),
    pub initial_train: Option<usize>,
    pub step: usize,
}

fn parse_date(key: &str, v: &str) -> Result<NaiveDate, CliError> {
    NaiveDate::parse_from_str(v, "%Y-%m-%d")
        .map_err(|_| CliError::Usage(format!("{key}: `{v}` is not a YYYY-MM-DD date")))
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| CliError::Usage(format!("{key}: `{v}` is not a valid number")))
}

fn parse_category(text: &str) -> Result<Category, CliError> {
    Category::ALL
        .into_iter()
        .find(|c| c.as_str() == text.to_ascii_lowercase())
        .ok_or_else(|| {
            let names: Vec<&str> = Category::ALL.iter().map(|c| c.as_str()).collect();
            CliError::Usage(format!("unknown category `{text}` (one of {})", names.join(", ")))
        })
}

impl RunConfig {
    pub fn resolve(s: &Settings) -> Result<Self, CliError> {
        let data_path = s
            .last("data")
            .map(PathBuf::from)
            .ok_or_else(|| CliError::Usage("--data is required".into()))?;
        let granularity = match s.last("granularity") {
            Some(g) => g.parse().map_err(|e: attrition_core::Error| CliError::Usage(e.to_string()))?,
            None => Granularity::Daily,
        };
        let categories = s
            .list("category")
            .iter()
            .map(|c| parse_category(c))
            .collect::<Result<Vec<_>, _>>()?;
        let exclusions = s
            .list("exclude")
            .iter()
            .map(|w| w.parse().map_err(|e: attrition_core::Error| CliError::Usage(e.to_string())))
            .collect::<Result<Vec<ExclusionWindow>, _>>()?;
        let model = s.last("model").unwrap_or("arima").parse()?;
        let mut models = s
            .list("models")
            .iter()
            .map(|m| m.parse())
            .collect::<Result<Vec<ModelKind>, _>>()?;
        if models.is_empty() {
            models = ModelKind::ALL.to_vec();
        }
        models.sort();
        models.dedup();
        let horizon = match s.last("horizon") {
            Some(h) => parse_num("horizon", h)?,
            None => 6,
        };
        if horizon == 0 {
            return Err(CliError::Usage("horizon must be at least 1".into()));
        }
        let level = match s.last("level") {
            Some(l) => parse_num("level", l)?,
            None => 0.95,
        };
        if !(level > 0.0 && level < 1.0) {
            return Err(CliError::Usage(format!("level {level} must lie strictly between 0 and 1")));
        }
        let seed = s.last("seed").map(|v| parse_num("seed", v)).transpose()?.unwrap_or(0);
        let svg = match s.last("svg") {
            None | Some("false") | Some("0") | Some("no") => false,
            Some("true") | Some("1") | Some("yes") | Some("") => true,
            Some(other) => return Err(CliError::Usage(format!("svg: `{other}` is not true or false"))),
        };
        let origin = s.last("origin").map(|v| parse_date("origin", v)).transpose()?;
        let from = s.last("from").map(|v| parse_date("from", v)).transpose()?.unwrap_or(COVERAGE_START);
        let to = s.last("to").map(|v| parse_date("to", v)).transpose()?.unwrap_or(COVERAGE_END);
        if from > to {
            return Err(CliError::Usage(format!("from {from} is after to {to}")));
        }
        let initial_train = s.last("initial").map(|v| parse_num("initial", v)).transpose()?;
        let step = s.last("step").map(|v| parse_num("step", v)).transpose()?.unwrap_or(1);
        if step == 0 || initial_train == Some(0) {
            return Err(CliError::Usage("initial and step must be at least 1".into()));
        }
        let params: Vec<(String, String)> = s
            .values
            .iter()
            .filter(|(k, _)| k.contains('.'))
            .filter_map(|(k, v)| v.last().map(|v| (k.clone(), v.clone())))
            .collect();
        let cfg = RunConfig {
            data_path,
            geo_index_path: s.last("geo").map(PathBuf::from),
            categories,
            granularity,
            exclusions,
            model,
            models,
            params,
            horizon,
            level,
            seed,
            out_dir: PathBuf::from(s.last("out").unwrap_or("attrition-out")),
            svg,
            origin,
            range: (from, to),
            initial_train,
            step,
        };
        cfg.model_config()?;
        Ok(cfg)
    }

    /// Granularity preset, seeded, with the `family.key` overrides applied.
    pub fn model_config(&self) -> Result<ModelConfig, CliError> {
        let mut mc = ModelConfig::preset(self.granularity, self.seed);
        for (k, v) in &self.params {
            mc.set(k, v)?;
        }
        Ok(mc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(text: &str) -> Settings {
        Settings::parse(text).unwrap()
    }

    #[test]
    fn file_values_and_flag_override() {
        let mut s = settings(
            "# run\ndata = losses.csv\nmodel = tcn\nhorizon = 4\nexclude = 2025-06-01:2025-07-31\n\
             exclude = 2024-01-01:2024-01-05\ncategory = tank, ifv\ntcn.epochs = 5\n",
        );
        s.set("horizon", vec!["9".into()]).unwrap();
        let cfg = RunConfig::resolve(&s).unwrap();
        assert_eq!(cfg.horizon, 9);
        assert_eq!(cfg.model, ModelKind::Tcn);
        assert_eq!(cfg.exclusions.len(), 2);
        assert_eq!(cfg.categories, vec![Category::Tank, Category::Ifv]);
        assert_eq!(cfg.model_config().unwrap().tcn.epochs, 5);
        assert_eq!(cfg.models.len(), 5);
    }

    #[test]
    fn invalid_settings_are_usage_errors() {
        let bad = [
            "data = x\nhorizon = 0",
            "data = x\nmodel = sarima",
            "data = x\nexclude = 2025-07-01:2025-06-01",
            "data = x\ncategory = submarine",
            "data = x\nlevel = 1.5",
            "data = x\nlstm.nope = 3",
            "horizon = 3",
        ];
        for text in bad {
            assert!(matches!(RunConfig::resolve(&settings(text)), Err(CliError::Usage(_))), "{text}");
        }
        assert!(Settings::parse("colour = red").is_err());
        assert!(Settings::parse("no equals sign").is_err());
    }
}
