use attrition_core::neural::{
    grad_check, lstm_fit, lstm_forecast, predict, tcn_fit, tcn_forecast, train, Batch, DenseArray,
    LstmModel, LstmSpec, Network, TcnModel, TcnSpec,
};
use attrition_core::{CountSeries, Error, Granularity};
use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2023, 3, 1).unwrap()
}

fn sine(n: usize) -> CountSeries {
    let v = (0..n)
        .map(|t| 12.0 + 6.0 * (2.0 * std::f64::consts::PI * t as f64 / 7.0).sin())
        .collect();
    CountSeries::observed(Granularity::Daily, start(), v).unwrap()
}

fn random_batch(seed: u64, rows: usize, steps: usize, width: usize) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = DenseArray::from_fn(vec![rows, steps, width], || rng.random_range(-1.5..1.5));
    let targets = DenseArray::from_fn(vec![rows, 1], || rng.random_range(-1.0..1.0));
    Batch::new(inputs, targets).unwrap()
}

/// Least-squares slope of the tail of a loss curve.
fn slope(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = values.iter().sum::<f64>() / n;
    let sxy: f64 = values.iter().enumerate().map(|(i, v)| (i as f64 - mx) * (v - my)).sum();
    let sxx: f64 = (0..values.len()).map(|i| (i as f64 - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn default_size_gradients_at_init_and_after_training() {
    for seed in [1, 2, 3] {
        let spec = LstmSpec { seed, ..LstmSpec::default() };
        let mut lstm = LstmModel::init(&spec, Granularity::Daily).unwrap();
        let batch = random_batch(seed, 1, spec.lookback, lstm.input_width());
        assert!(grad_check(&lstm, &batch) <= 1e-4);
        train(&mut lstm, &batch, 10, 1e-2).unwrap();
        assert!(grad_check(&lstm, &batch) <= 1e-4);

        let spec = TcnSpec { seed, ..TcnSpec::default() };
        let mut tcn = TcnModel::init(&spec, Granularity::Daily).unwrap();
        let batch = random_batch(seed + 10, 1, spec.window(), tcn.input_width());
        assert!(grad_check(&tcn, &batch) <= 1e-4);
        train(&mut tcn, &batch, 10, 1e-2).unwrap();
        assert!(grad_check(&tcn, &batch) <= 1e-4);
    }
}

#[test]
fn zero_weight_symmetric_gradients() {
    // with all weights zero every hidden unit is interchangeable
    let spec = LstmSpec { hidden: 3, lookback: 4, ..LstmSpec::default() };
    let mut m = LstmModel::init(&spec, Granularity::Daily).unwrap();
    for p in m.params_mut() {
        p.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let batch = random_batch(4, 2, 4, m.input_width());
    let (_, grads) = attrition_core::neural::loss_and_grads(&m, &batch);
    let w = &grads[0];
    let cols = w.cols();
    for row in w.data().chunks(cols) {
        for gate in 0..4 {
            let block = &row[gate * 3..gate * 3 + 3];
            assert!(block.iter().all(|v| *v == block[0]));
        }
    }
    assert!(grad_check(&m, &batch) <= 1e-4);
}

#[test]
fn tcn_is_causal() {
    let spec = TcnSpec::default();
    let m = TcnModel::init(&spec, Granularity::Daily).unwrap();
    let steps = 40;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let base = DenseArray::from_fn(vec![2, steps, 1], || rng.random_range(-1.0..1.0));
    let before = m.activations(&base);
    for _ in 0..100 {
        let t = rng.random_range(0..steps);
        let b = rng.random_range(0..2);
        let mut x = base.clone();
        x.data_mut()[b * steps + t] += rng.random_range(0.5..2.0);
        let after = m.activations(&x);
        let c = spec.channels;
        for s in 0..t {
            let i = (b * steps + s) * c;
            assert_eq!(&before.data()[i..i + c], &after.data()[i..i + c], "step {s} moved for t {t}");
        }
    }
}

#[test]
fn losses_fall_on_learnable_series() {
    let s = sine(160);
    let spec = LstmSpec { lookback: 14, hidden: 8, epochs: 150, learning_rate: 1e-2, ..LstmSpec::default() };
    let (_, report) = lstm_fit(&s, &spec).unwrap();
    assert_eq!(report.epochs_run, report.epoch_losses.len());
    let tail = &report.epoch_losses[report.epochs_run - 50..];
    assert!(slope(tail) < 0.0);
    assert!(tail[49] <= tail[0] * 1.05);

    let spec = TcnSpec { kernel: 2, dilations: vec![1, 2, 4], channels: 8, epochs: 150, learning_rate: 1e-2, ..TcnSpec::default() };
    let (_, report) = tcn_fit(&s, &spec).unwrap();
    assert!(slope(&report.epoch_losses) < 0.0);
    assert!(report.final_loss < report.epoch_losses[0]);
}

#[test]
fn constant_series_forecasts_constant() {
    let c = 9.0;
    let s = CountSeries::observed(Granularity::Daily, start(), vec![c; 90]).unwrap();
    let spec = LstmSpec { lookback: 7, hidden: 6, epochs: 200, learning_rate: 1e-2, ..LstmSpec::default() };
    let (m, _) = lstm_fit(&s, &spec).unwrap();
    let f = lstm_forecast(&m, &s, 30, 0.95).unwrap();
    assert!(f.point.iter().all(|p| (p - c).abs() <= 0.1 * c), "{:?}", f.point);
}

#[test]
fn horizons_and_shape_contract() {
    let s = sine(80);
    let spec = LstmSpec { lookback: 7, hidden: 4, epochs: 5, ..LstmSpec::default() };
    let (m, _) = lstm_fit(&s, &spec).unwrap();
    for h in [7, 30, 70] {
        let f = lstm_forecast(&m, &s, h, 0.95).unwrap();
        assert_eq!(f.point.len(), h);
        for (i, d) in f.dates.iter().enumerate() {
            assert_eq!(*d, s.last_date().unwrap() + Duration::days(i as i64 + 1));
        }
        assert!(f.point.iter().all(|p| *p >= 0.0));
        assert_eq!(f.interval, attrition_core::IntervalKind::Heuristic);
    }
    assert!(matches!(lstm_forecast(&m, &s, 121, 0.95), Err(Error::Horizon { .. })));
    assert!(lstm_forecast(&m, &s, 0, 0.95).is_err());
}

#[test]
fn masked_tail_is_refused() {
    let s = sine(80);
    let mut mask = vec![true; 80];
    mask[78] = false;
    let masked = CountSeries::new(Granularity::Daily, start(), s.raw_values().to_vec(), mask).unwrap();
    let spec = TcnSpec { kernel: 2, dilations: vec![1, 2], channels: 4, epochs: 3, ..TcnSpec::default() };
    let (m, _) = tcn_fit(&masked, &spec).unwrap();
    match tcn_forecast(&m, &masked, 5, 0.9) {
        Err(Error::MaskedTail { date }) => assert_eq!(date, start() + Duration::days(78)),
        other => panic!("{other:?}"),
    }
    assert!(tcn_forecast(&m, &masked.slice(0..78), 5, 0.9).is_ok());
}

#[test]
fn tcn_runs_are_identical() {
    let s = sine(70);
    let spec = TcnSpec { kernel: 2, dilations: vec![1, 2, 4], channels: 6, epochs: 20, seed: 5, ..TcnSpec::default() };
    let a = tcn_fit(&s, &spec).unwrap().0;
    let b = tcn_fit(&s, &spec).unwrap().0;
    assert_eq!(a.params(), b.params());
    let fa = tcn_forecast(&a, &s, 10, 0.95).unwrap().to_csv();
    let fb = tcn_forecast(&b, &s, 10, 0.95).unwrap().to_csv();
    assert_eq!(fa, fb);
}

#[test]
fn weights_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let s = sine(60);
    let (m, _) = lstm_fit(&s, &LstmSpec { lookback: 5, hidden: 3, epochs: 3, ..LstmSpec::default() }).unwrap();
    let path = dir.path().join("lstm.atfn");
    m.save(&path).unwrap();
    let back = LstmModel::load(&path).unwrap();
    assert_eq!(back, m);
    assert!(TcnModel::load(&path).is_err());
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..5], b"ATFN1");

    let (t, _) = tcn_fit(&s, &TcnSpec { kernel: 2, dilations: vec![1], channels: 3, epochs: 2, ..TcnSpec::default() }).unwrap();
    let tpath = dir.path().join("tcn.atfn");
    t.save(&tpath).unwrap();
    let tb = TcnModel::load(&tpath).unwrap();
    let inputs = DenseArray::from_fn(vec![1, 2, 1], || 0.3);
    assert_eq!(predict(&tb, &inputs), predict(&t, &inputs));
}

#[test]
fn destandardization_inverts_targets() {
    let s = sine(60);
    let (m, _) = tcn_fit(&s, &TcnSpec { kernel: 2, dilations: vec![1], channels: 2, epochs: 1, ..TcnSpec::default() }).unwrap();
    let batch = m.batch(&s).unwrap();
    let raw = s.raw_values();
    for (i, t) in batch.targets.data().iter().enumerate() {
        let v = raw[i + 2];
        assert!((m.scaler.invert(*t) - v).abs() <= 1e-12 * v.abs());
    }
}
