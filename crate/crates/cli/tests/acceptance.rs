//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs as its own test target without the libtest harness.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use attrition_cli::models::{ModelConfig, ModelKind};
use attrition_core::arima::{self, ArimaSpec};
use attrition_core::decomp::{self, DecompSpec};
use attrition_core::eval::{metrics, rolling_backtest, BacktestSpec, ModelFactory};
use attrition_core::gbtrees::{self, GbtSpec, Node};
use attrition_core::ingest::{generate_synthetic, Category, Profile, COVERAGE_END, COVERAGE_START};
use attrition_core::neural::{grad_check, lstm_fit, tcn_fit, train, Batch, DenseArray, LstmModel, LstmSpec, TcnModel, TcnSpec};
use attrition_core::series::{aggregate, probe, SupervisedMatrix, SupervisedRow};
use attrition_core::{CountSeries, ExclusionWindow, Granularity};
use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn d(y: i32, m: u32, day: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, day).unwrap()
}

fn gaussian(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    (0..n).map(|_| normal.sample(&mut rng)).collect()
}

fn daily(values: Vec<f64>) -> CountSeries {
    CountSeries::observed(Granularity::Daily, d(2021, 1, 4), values).unwrap()
}

fn random_walk(seed: u64, n: usize, start: f64) -> Vec<f64> {
    let mut level = start;
    gaussian(seed, n)
        .into_iter()
        .map(|e| {
            level += e;
            level
        })
        .collect()
}

fn arima_recovery() -> Outcome {
    let e = gaussian(2024, 501);
    let (phi, theta) = (0.5, 0.3);
    let mut w = vec![0.0];
    for t in 1..501 {
        w.push(phi * w[t - 1] + e[t] + theta * e[t - 1]);
    }
    let mut y = Vec::with_capacity(500);
    let mut level = 500.0;
    for wt in &w[1..] {
        level += wt;
        y.push(level);
    }
    let clock = Instant::now();
    let fit = arima::fit(&daily(y), &ArimaSpec::new(1, 1, 1).unwrap()).map_err(|e| e.to_string())?;
    let took = clock.elapsed();
    let (dp, dt) = ((fit.phi[0] - phi).abs(), (fit.theta[0] - theta).abs());
    check(
        dp <= 0.15 && dt <= 0.20 && took < Duration::from_secs(5),
        format!("phi {:.4}, theta {:.4}, fit {:.3}s", fit.phi[0], fit.theta[0], took.as_secs_f64()),
    )
}

fn random_walk_identity() -> Outcome {
    let s = daily(random_walk(7, 300, 200.0));
    let spec = ArimaSpec::new(0, 1, 0).unwrap();
    let fit = arima::fit(&s, &spec).map_err(|e| e.to_string())?;
    let f = arima::forecast(&fit, &s, &spec, 30, 0.95).map_err(|e| e.to_string())?;
    let last = s.get(s.len() - 1).unwrap();
    let exact = f.point.iter().all(|p| *p == last);
    check(exact, format!("30 steps, last value {last}, all equal: {exact}"))
}

fn decomposition_recovery() -> Outcome {
    let values: Vec<f64> = (0..365)
        .map(|t| {
            let t = t as f64;
            20.0 + 0.1 * t + 3.0 * (2.0 * std::f64::consts::PI * t / 7.0).sin()
        })
        .collect();
    let s = daily(values);
    let spec = DecompSpec {
        yearly_order: 0,
        ..DecompSpec::default()
    };
    let fit = decomp::fit(&s, &spec).map_err(|e| e.to_string())?;
    let amp = fit.weekly_amplitude(1);
    let slope = fit.final_slope();
    let dates = decomp::future_dates(&fit, 28);
    let comps = decomp::components(&fit, &dates).map_err(|e| e.to_string())?;
    let fc = decomp::predict(&fit, &dates, 0.95).map_err(|e| e.to_string())?;
    let gap = comps
        .point()
        .iter()
        .zip(&fc.point)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    check(
        (amp - 3.0).abs() / 3.0 <= 0.05 && (slope - 0.1).abs() / 0.1 <= 0.02 && gap <= 1e-9,
        format!("amplitude {amp:.4}, slope {slope:.5}, max component gap {gap:.2e}"),
    )
}

fn random_batch(seed: u64, steps: usize, width: usize) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = DenseArray::from_fn(vec![1, steps, width], || rng.random_range(-1.5..1.5));
    let targets = DenseArray::from_fn(vec![1, 1], || rng.random_range(-1.0..1.0));
    Batch::new(inputs, targets).unwrap()
}

fn gradient_correctness() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in [1, 2, 3] {
        let spec = LstmSpec { seed, ..LstmSpec::default() };
        let mut lstm = LstmModel::init(&spec, Granularity::Daily).map_err(|e| e.to_string())?;
        let batch = random_batch(seed, spec.lookback, lstm.input_width());
        worst = worst.max(grad_check(&lstm, &batch));
        train(&mut lstm, &batch, 10, 1e-2).map_err(|e| e.to_string())?;
        worst = worst.max(grad_check(&lstm, &batch));

        let spec = TcnSpec { seed, ..TcnSpec::default() };
        let mut tcn = TcnModel::init(&spec, Granularity::Daily).map_err(|e| e.to_string())?;
        let batch = random_batch(seed + 10, spec.window(), tcn.input_width());
        worst = worst.max(grad_check(&tcn, &batch));
        train(&mut tcn, &batch, 10, 1e-2).map_err(|e| e.to_string())?;
        worst = worst.max(grad_check(&tcn, &batch));
    }
    check(worst <= 1e-4, format!("max relative error {worst:.3e} over 12 checks"))
}

fn tcn_structure() -> Outcome {
    let spec = TcnSpec::default();
    let rf = spec.receptive_field();
    let m = TcnModel::init(&spec, Granularity::Daily).map_err(|e| e.to_string())?;
    let steps = 48;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let base = DenseArray::from_fn(vec![1, steps, m.input_width()], || rng.random_range(-1.0..1.0));
    let before = m.activations(&base);
    let c = spec.channels;
    let width = m.input_width();
    let mut leaks = 0;
    for _ in 0..100 {
        let t = rng.random_range(0..steps);
        let mut x = base.clone();
        x.data_mut()[t * width] += rng.random_range(0.5..2.0);
        let after = m.activations(&x);
        if before.data()[..t * c] != after.data()[..t * c] {
            leaks += 1;
        }
    }
    check(rf == 31 && leaks == 0, format!("receptive field {rf}, {leaks} of 100 perturbations leaked backwards"))
}

fn random_matrix(seed: u64) -> SupervisedMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..20)
        .map(|_| {
            let features: Vec<f64> = (0..4)
                .map(|j| if j == 0 { rng.random_range(0..5) as f64 } else { rng.random_range(-2.0..2.0) })
                .collect();
            let target = 1.5 * features[0] - features[2] + rng.random_range(-0.5..0.5);
            SupervisedRow { features, target, target_date: d(2024, 1, 1) }
        })
        .collect();
    SupervisedMatrix::new((0..4).map(|j| format!("x{j}")).collect(), rows).unwrap()
}

/// Scores every (feature, midpoint) split from scratch; near-ties within
/// 1e-10 of the residual sum of squares go to the lowest feature, then the
/// lowest threshold.
fn brute_force_stump(m: &SupervisedMatrix, min_leaf: usize) -> Option<(usize, f64, f64, f64)> {
    let y: Vec<f64> = m.rows.iter().map(|r| r.target).collect();
    let base = y.iter().sum::<f64>() / y.len() as f64;
    let r: Vec<f64> = y.iter().map(|v| v - base).collect();
    let mean = |idx: &[usize]| idx.iter().map(|&i| r[i]).sum::<f64>() / idx.len() as f64;
    let mut cands = Vec::new();
    for j in 0..m.width() {
        let mut v: Vec<f64> = m.rows.iter().map(|row| row.features[j]).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        for w in v.windows(2) {
            let mut thr = 0.5 * (w[0] + w[1]);
            if thr >= w[1] {
                thr = w[0];
            }
            let left: Vec<usize> = (0..y.len()).filter(|&i| m.rows[i].features[j] <= thr).collect();
            let right: Vec<usize> = (0..y.len()).filter(|&i| m.rows[i].features[j] > thr).collect();
            if left.len() < min_leaf || right.len() < min_leaf {
                continue;
            }
            let (ml, mr) = (mean(&left), mean(&right));
            let gain = left.len() as f64 * right.len() as f64 / y.len() as f64 * (ml - mr).powi(2);
            cands.push((j, thr, gain, ml, mr));
        }
    }
    let best = cands.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-10 * r.iter().map(|v| v * v).sum::<f64>();
    cands
        .into_iter()
        .filter(|c| c.2 >= best - tol)
        .min_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)))
        .map(|c| (c.0, c.1, c.3, c.4))
}

fn boosting_oracle() -> Outcome {
    let stump = GbtSpec { n_trees: 1, max_depth: 1, learning_rate: 1.0, ..GbtSpec::default() };
    let mut matched = 0;
    for seed in 0..5 {
        let m = random_matrix(seed);
        let model = gbtrees::fit(&m, &stump).map_err(|e| e.to_string())?;
        let want = brute_force_stump(&m, stump.min_samples_leaf).ok_or("no admissible split")?;
        if let Node::Split { feature, threshold, left, right, .. } = &model.trees[0].root {
            if let (Node::Leaf { value: l }, Node::Leaf { value: r }) = (left.as_ref(), right.as_ref()) {
                if (*feature, *threshold) == (want.0, want.1) && (l - want.2).abs() <= 1e-12 && (r - want.3).abs() <= 1e-12 {
                    matched += 1;
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let rows = (0..400)
        .map(|_| {
            let features: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let target = features[0] * features[1] + features[2].sin() * 4.0 + rng.random_range(-1.0..1.0);
            SupervisedRow { features, target, target_date: d(2024, 1, 1) }
        })
        .collect();
    let big = SupervisedMatrix::new((0..5).map(|j| format!("x{j}")).collect(), rows).unwrap();
    let model = gbtrees::fit(&big, &GbtSpec { n_trees: 200, ..GbtSpec::default() }).map_err(|e| e.to_string())?;
    let staged = model.staged_rmse(&big);
    let rises = staged.windows(2).filter(|w| w[1] > w[0]).count();
    check(
        matched == 5 && rises == 0 && staged.len() == 201,
        format!(
            "{matched}/5 stumps match, staged rmse {:.4} -> {:.4} with {rises} rises",
            staged[0],
            staged[staged.len() - 1]
        ),
    )
}

fn metrics_arithmetic() -> Outcome {
    let r = metrics(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).map_err(|e| e.to_string())?;
    let exact = (r.mae - 2.0 / 3.0).abs() <= 1e-12 && (r.rmse - (2.0f64 / 3.0).sqrt()).abs() <= 1e-12;
    let naive = ModelFactory::new("naive", |train, h| {
        let last = train.last_observed().and_then(|i| train.get(i)).unwrap_or(0.0);
        Ok(vec![last; h])
    });
    let full = daily((0..500).map(|t| 10.0 + (t % 9) as f64).collect());
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut agree = 0;
    for _ in 0..10 {
        let n = rng.random_range(60..500);
        let initial = rng.random_range(10..n - 20);
        let step = rng.random_range(1..15);
        let horizon = rng.random_range(1..n - initial);
        let spec = BacktestSpec { initial_train: initial, step, horizon, granularity: Granularity::Daily };
        let folds = rolling_backtest(&naive, &full.slice(0..n), &spec).map_err(|e| e.to_string())?.n_folds();
        if folds == (n - initial - horizon) / step + 1 {
            agree += 1;
        }
    }
    check(exact && agree == 10, format!("mae {:.15}, rmse {:.15}, fold counts {agree}/10", r.mae, r.rmse))
}

fn monthly_synthetic(category: Option<Category>) -> CountSeries {
    let records = generate_synthetic(0, &Profile::default()).unwrap();
    let filter = category.map(|c| vec![c]);
    aggregate(&records, Granularity::Monthly, filter.as_deref(), (COVERAGE_START, COVERAGE_END)).unwrap()
}

fn exclusion_semantics() -> Outcome {
    let window = ExclusionWindow::new(d(2025, 6, 1), d(2025, 7, 31)).unwrap();
    let s = monthly_synthetic(None).apply_exclusions(&[window]);
    let cfg = ModelConfig::preset(Granularity::Monthly, 0);
    let mut report = Vec::new();
    let mut clean = true;
    for kind in ModelKind::ALL {
        probe::start();
        let fitted = match kind {
            ModelKind::Arima => arima::fit(&s, &cfg.arima).map(|_| ()),
            ModelKind::Decomp => decomp::fit(&s, &cfg.decomp).map(|_| ()),
            ModelKind::Lstm => lstm_fit(&s, &cfg.lstm).map(|_| ()),
            ModelKind::Tcn => tcn_fit(&s, &cfg.tcn).map(|_| ()),
            ModelKind::Gbt => gbtrees::fit_series(&s, &cfg.gbt).map(|_| ()),
        };
        let seen = probe::finish();
        fitted.map_err(|e| format!("{kind}: {e}"))?;
        clean &= seen.masked.is_empty() && seen.observed.len() == s.observed_count();
        report.push(format!("{kind} {}/{} masked {}", seen.observed.len(), s.observed_count(), seen.masked.len()));
    }
    check(clean, report.join(", "))
}

fn binary() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_attrition"))
}

fn cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(binary()).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(format!(
            "`attrition {}` exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Synthetic records written by `synth` and normalized by `ingest`.
fn prepared_records(root: &Path) -> Result<PathBuf, String> {
    cli(&["synth", "--out", p(&root.join("synth")), "--seed", "0"])?;
    cli(&["ingest", "--data", p(&root.join("synth/synthetic.csv")), "--out", p(&root.join("ingest"))])?;
    Ok(root.join("ingest/records.csv"))
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|f| (f.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&f).unwrap()))
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = prepared_records(root.path())?;
    let common = ["--data", p(&data), "--granularity", "monthly", "--category", "tank", "--exclude", "2024-06-01:2024-07-31", "--svg"];
    let mut compared = 0;
    for kind in ModelKind::ALL {
        let mut outputs = Vec::new();
        for run in ["a", "b"] {
            let out = root.path().join(format!("forecast-{kind}-{run}"));
            let mut args = vec!["forecast", "--model", kind.as_str(), "--horizon", "6", "--out", p(&out)];
            args.extend(common);
            cli(&args)?;
            outputs.push(dir_bytes(&out));
        }
        if outputs[0] != outputs[1] || !outputs[0].iter().any(|(n, _)| n == "forecast.svg") {
            return Err(format!("{kind} forecast outputs differ between runs"));
        }
        compared += outputs[0].len();
    }
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = root.path().join(format!("compare-{run}"));
        let mut args = vec!["compare", "--horizon", "1", "--initial", "38", "--out", p(&out)];
        args.extend(common);
        cli(&args)?;
        outputs.push(dir_bytes(&out));
    }
    compared += outputs[0].len();
    check(outputs[0] == outputs[1], format!("{compared} CSV/JSON/SVG files byte-identical across two runs"))
}

/// Expected tank count for the month starting at `start`, from the
/// generator's regime table.
fn regime_mean(profile: &Profile, start: NaiveDate) -> f64 {
    let mut day = start;
    let mut total = 0.0;
    while day.month() == start.month() {
        total += profile.regime_at(day).map_or(0.0, |r| r.mean(Category::Tank));
        day = day.succ_opt().unwrap();
    }
    total
}

fn read_points(path: &Path) -> Result<Vec<(NaiveDate, f64)>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    text.lines()
        .skip(1)
        .map(|line| {
            let mut cols = line.split(',');
            let date = NaiveDate::parse_from_str(cols.next().unwrap_or(""), "%Y-%m-%d").map_err(|e| e.to_string())?;
            let point = cols.next().unwrap_or("").parse::<f64>().map_err(|e| e.to_string())?;
            Ok((date, point))
        })
        .collect()
}

fn end_to_end() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let clock = Instant::now();
    let data = prepared_records(root.path())?;
    let exclude = "2025-06-01:2025-07-31";
    cli(&[
        "forecast", "--data", p(&data), "--model", "arima", "--granularity", "monthly", "--exclude", exclude,
        "--horizon", "6", "--svg", "--out", p(&root.path().join("arima")),
    ])?;
    let summary = cli(&[
        "compare", "--data", p(&data), "--granularity", "monthly", "--exclude", exclude, "--horizon", "3",
        "--initial", "36", "--svg", "--out", p(&root.path().join("compare")),
    ])?;
    let elapsed = clock.elapsed();
    let rows = std::fs::read_to_string(root.path().join("compare/comparison.csv")).map_err(|e| e.to_string())?;
    let five = rows.lines().count() == 6;

    // plateau check: origin inside the 2023-2024 regime, tank counts
    let profile = Profile::default();
    let mut hits = Vec::new();
    for model in ["arima", "tcn", "decomp"] {
        let out = root.path().join(format!("plateau-{model}"));
        cli(&[
            "forecast", "--data", p(&data), "--model", model, "--granularity", "monthly", "--category", "tank",
            "--exclude", exclude, "--origin", "2024-07-01", "--horizon", "6", "--out", p(&out),
        ])?;
        let inside = read_points(&out.join("forecast.csv"))?
            .iter()
            .filter(|(date, point)| {
                let mean = regime_mean(&profile, *date);
                (point - mean).abs() <= 2.0 * mean.sqrt()
            })
            .count();
        hits.push((model, inside));
    }
    let plateau = hits.iter().all(|(_, n)| *n >= 5);
    let ranking = summary.lines().last().unwrap_or("").to_string();
    check(
        five && plateau && elapsed < Duration::from_secs(300),
        format!(
            "pipeline {:.1}s, 5-row table: {five}, {ranking}, plateau steps inside band: {}",
            elapsed.as_secs_f64(),
            hits.iter().map(|(m, n)| format!("{m} {n}/6")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn interval_sanity() -> Outcome {
    let spec = ArimaSpec::new(1, 1, 1).unwrap();
    let (mut covered, mut total) = (0, 0);
    for seed in 0..20 {
        let path = random_walk(1000 + seed, 300, 200.0);
        for origin in (120..300).step_by(12) {
            let train = daily(path[..origin].to_vec());
            let fit = arima::fit(&train, &spec).map_err(|e| e.to_string())?;
            let f = arima::forecast(&fit, &train, &spec, 1, 0.95).map_err(|e| e.to_string())?;
            total += 1;
            if (f.lower[0]..=f.upper[0]).contains(&path[origin]) {
                covered += 1;
            }
        }
    }
    let rate = covered as f64 / total as f64;
    check((0.85..=0.99).contains(&rate), format!("{covered}/{total} one-step intervals cover ({:.1}%)", 100.0 * rate))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("ARIMA(1,1,1) parameter recovery", arima_recovery),
        ("random-walk forecast identity", random_walk_identity),
        ("decomposition recovery", decomposition_recovery),
        ("LSTM and TCN gradient correctness", gradient_correctness),
        ("TCN receptive field and causality", tcn_structure),
        ("boosting stump oracle and staged RMSE", boosting_oracle),
        ("metrics arithmetic and fold counts", metrics_arithmetic),
        ("exclusion windows never read by any model", exclusion_semantics),
        ("forecast and compare determinism", determinism),
        ("end-to-end synthetic pipeline", end_to_end),
        ("95% interval coverage on random walks", interval_sanity),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let clock = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = clock.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2}: PASS  {name} [{detail}] ({secs:.1}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2}: FAIL  {name} [{detail}] ({secs:.1}s)", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
