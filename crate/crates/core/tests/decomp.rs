use attrition_core::decomp::{self, components, future_dates, predict, DecompSpec};
use attrition_core::{CountSeries, Granularity};
use chrono::{Duration, NaiveDate};
use proptest::prelude::*;

fn day0() -> NaiveDate {
    NaiveDate::from_ymd_opt(2023, 1, 2).unwrap()
}

fn line_plus_week(n: usize, slope: f64, amp: f64) -> Vec<f64> {
    (0..n)
        .map(|t| {
            let t = t as f64;
            20.0 + slope * t + amp * (2.0 * std::f64::consts::PI * t / 7.0).sin()
        })
        .collect()
}

fn daily(values: Vec<f64>) -> CountSeries {
    CountSeries::observed(Granularity::Daily, day0(), values).unwrap()
}

fn weekly_only() -> DecompSpec {
    DecompSpec {
        yearly_order: 0,
        ..DecompSpec::default()
    }
}

#[test]
fn weekly_sine_and_slope_recovered() {
    let s = daily(line_plus_week(365, 0.1, 3.0));
    let fit = decomp::fit(&s, &weekly_only()).unwrap();
    let amp = fit.weekly_amplitude(1);
    assert!((amp - 3.0).abs() / 3.0 <= 0.05, "amplitude {amp}");
    assert!((fit.final_slope() - 0.1).abs() / 0.1 <= 0.02, "slope {}", fit.final_slope());
    assert!(fit.weekly_amplitude(2) < 0.05 && fit.weekly_amplitude(3) < 0.05);
}

#[test]
fn components_add_up_and_weekly_is_periodic() {
    let s = daily(line_plus_week(200, 0.05, 2.0));
    let fit = decomp::fit(&s, &weekly_only()).unwrap();
    let dates: Vec<NaiveDate> = (0..10).map(|i| day0() + Duration::days(i * 23)).collect();
    let c = components(&fit, &dates).unwrap();
    let f = predict(&fit, &dates, 0.95).unwrap();
    for (a, b) in c.point().iter().zip(&f.point) {
        assert!((a - b).abs() <= 1e-9);
    }
    let week: Vec<NaiveDate> = (0..14).map(|i| day0() + Duration::days(40 + i)).collect();
    let w = components(&fit, &week).unwrap().weekly;
    assert!(w[..7].iter().sum::<f64>().abs() <= 1e-9);
    for i in 0..7 {
        assert!((w[i] - w[i + 7]).abs() <= 1e-9);
    }
    let csv = c.to_csv();
    assert!(csv.starts_with("date,trend,weekly,yearly,point\n"));
}

#[test]
fn stored_sigma_matches_reconstruction() {
    let mut y = line_plus_week(150, 0.2, 1.0);
    for (i, v) in y.iter_mut().enumerate() {
        *v += ((i * 37) % 11) as f64 / 5.0;
    }
    let s = daily(y);
    let fit = decomp::fit(&s, &weekly_only()).unwrap();
    let pairs = fit.in_sample(&s);
    let rms = (pairs.iter().map(|(f, v)| (v - f).powi(2)).sum::<f64>() / pairs.len() as f64).sqrt();
    assert!((rms - fit.sigma).abs() < 1e-9);
    assert_eq!(fit.delta.len(), fit.s.len());
    assert_eq!(fit.beta.len(), 6);
}

#[test]
fn masked_rows_are_dropped() {
    let y = line_plus_week(120, 0.1, 2.0);
    let mut mask = vec![true; 120];
    let mut corrupted = y.clone();
    for i in 50..60 {
        mask[i] = false;
        corrupted[i] = 1000.0;
    }
    let s = CountSeries::new(Granularity::Daily, day0(), corrupted, mask).unwrap();
    let fit = decomp::fit(&s, &weekly_only()).unwrap();
    assert!(fit.sigma < 1e-6, "sigma {}", fit.sigma);
}

#[test]
fn equal_distance_gives_equal_width_and_intervals_bracket() {
    let mut y = line_plus_week(100, 0.1, 1.0);
    y[17] += 4.0;
    let fit = decomp::fit(&daily(y), &weekly_only()).unwrap();
    let f = predict(&fit, &future_dates(&fit, 30), 0.95).unwrap();
    for i in 0..30 {
        assert!(f.lower[i] < f.point[i] && f.point[i] < f.upper[i]);
    }
    // widths depend only on distance past the end
    let again = predict(&fit, &[f.dates[9], f.dates[9]], 0.95).unwrap();
    let w = |g: &attrition_core::Forecast, i: usize| g.upper[i] - g.lower[i];
    assert_eq!(w(&again, 0), w(&again, 1));
    assert!((w(&again, 0) - w(&f, 9)).abs() < 1e-12);
    for i in 1..30 {
        assert!(w(&f, i) >= w(&f, i - 1));
    }
}

#[test]
fn fit_is_bit_identical_across_runs() {
    let s = daily(line_plus_week(400, 0.03, 2.5));
    let spec = DecompSpec::default();
    assert_eq!(decomp::fit(&s, &spec).unwrap(), decomp::fit(&s, &spec).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn shift_moves_only_the_offset(c in 0.0f64..1000.0, slope in -0.05f64..0.2, seed in 0usize..50) {
        let base: Vec<f64> = line_plus_week(120, slope, 2.0)
            .iter()
            .enumerate()
            .map(|(i, v)| (v + ((i * 7 + seed) % 13) as f64 * 0.3).max(0.0) + 10.0)
            .collect();
        let shifted: Vec<f64> = base.iter().map(|v| v + c).collect();
        let spec = weekly_only();
        let a = decomp::fit(&daily(base), &spec).unwrap();
        let b = decomp::fit(&daily(shifted), &spec).unwrap();
        prop_assert!((b.m - a.m - c).abs() < 1e-6);
        prop_assert!((b.k - a.k).abs() < 1e-6);
        for (x, y) in a.delta.iter().zip(&b.delta).chain(a.beta.iter().zip(&b.beta)) {
            prop_assert!((x - y).abs() < 1e-6);
        }
        let dates = future_dates(&a, 5);
        let pa = predict(&a, &dates, 0.9).unwrap();
        let pb = predict(&b, &dates, 0.9).unwrap();
        for (x, y) in pa.point.iter().zip(&pb.point) {
            prop_assert!((y - x - c).abs() < 1e-6);
        }
    }
}
