//! ARIMA(p, d, q) with optional intercept, fit by conditional sum of squares.
//!
//! The series is optionally mapped through `ln(1 + v)`, differenced `d`
//! times, and the ARMA recursion is run over each contiguous run of defined
//! differences. Pre-sample deviations and innovations are taken as zero, so
//! every defined difference contributes one squared innovation and a model
//! nested inside a richer one can never fit better than it.
//!
//! AR and MA coefficients are optimized through the partial-autocorrelation
//! map `u -> tanh(u) -> Durbin-Levinson`, which keeps every Nelder–Mead
//! iterate stationary and invertible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{check_horizon, check_level, Forecast, IntervalKind};
use crate::optim::NelderMead;
use crate::series::CountSeries;
use crate::stats::{mean, std_dev, z_for_level};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArimaSpec {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub use_log: bool,
    pub intercept: bool,
}

impl ArimaSpec {
    /// Orders `(p, d, q)` on the raw scale; the intercept is on for `d = 0`
    /// and off otherwise.
    pub fn new(p: usize, d: usize, q: usize) -> Result<Self> {
        let spec = ArimaSpec {
            p,
            d,
            q,
            use_log: false,
            intercept: d == 0,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Log-scale ARIMA(1,1,1).
    pub fn log_111() -> Self {
        ArimaSpec {
            p: 1,
            d: 1,
            q: 1,
            use_log: true,
            intercept: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p > 5 || self.q > 5 || self.d > 2 {
            return Err(Error::invalid(format!(
                "ARIMA orders ({}, {}, {}) outside p,q <= 5, d <= 2",
                self.p, self.d, self.q
            )));
        }
        Ok(())
    }

    /// Free parameters counted by the information criterion, variance included.
    pub fn n_params(&self) -> usize {
        self.p + self.q + usize::from(self.intercept) + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaFit {
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    /// Mean of the differenced (working-scale) series.
    pub mu: f64,
    pub sigma2: f64,
    pub loglik: f64,
    pub aic: f64,
    pub css: f64,
    pub n_used: usize,
}

const SIGMA2_FLOOR: f64 = 1e-12;

/// Working-scale values and their `d`-th differences, `None` where undefined.
struct Working {
    z: Vec<Option<f64>>,
    w: Vec<Option<f64>>,
}

impl Working {
    fn new(series: &CountSeries, spec: &ArimaSpec) -> Working {
        let z: Vec<Option<f64>> = (0..series.len())
            .map(|i| {
                series
                    .get(i)
                    .map(|v| if spec.use_log { v.ln_1p() } else { v })
            })
            .collect();
        let mut w = z.clone();
        for _ in 0..spec.d {
            let mut next = vec![None; w.len()];
            for t in 1..w.len() {
                if let (Some(a), Some(b)) = (w[t], w[t - 1]) {
                    next[t] = Some(a - b);
                }
            }
            w = next;
        }
        Working { z, w }
    }

    /// Contiguous runs of defined differences.
    fn segments(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        let mut cur = Vec::new();
        for v in &self.w {
            match v {
                Some(x) => cur.push(*x),
                None if !cur.is_empty() => out.push(std::mem::take(&mut cur)),
                None => {}
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
        out
    }
}

/// Maps unconstrained values to the coefficients of a stationary AR
/// polynomial via partial autocorrelations in (-1, 1).
pub(crate) fn pacf_to_coefficients(u: &[f64]) -> Vec<f64> {
    let mut a: Vec<f64> = Vec::with_capacity(u.len());
    for (k, uk) in u.iter().enumerate() {
        let r = uk.tanh();
        let prev = a.clone();
        for j in 0..k {
            a[j] = prev[j] - r * prev[k - 1 - j];
        }
        a.push(r);
    }
    a
}

/// Innovations of one segment under the ARMA recursion with zero pre-sample.
fn innovations(seg: &[f64], phi: &[f64], theta: &[f64], mu: f64) -> Vec<f64> {
    let mut e = Vec::with_capacity(seg.len());
    for t in 0..seg.len() {
        let mut pred = 0.0;
        for (i, ph) in phi.iter().enumerate() {
            if t > i {
                pred += ph * (seg[t - 1 - i] - mu);
            }
        }
        for (j, th) in theta.iter().enumerate() {
            if t > j {
                pred += th * e[t - 1 - j];
            }
        }
        e.push(seg[t] - mu - pred);
    }
    e
}

fn css(segments: &[Vec<f64>], phi: &[f64], theta: &[f64], mu: f64) -> f64 {
    segments
        .iter()
        .map(|s| innovations(s, phi, theta, mu).iter().map(|e| e * e).sum::<f64>())
        .sum()
}

struct Params<'a> {
    spec: &'a ArimaSpec,
}

impl Params<'_> {
    fn unpack(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let (p, q) = (self.spec.p, self.spec.q);
        let phi = pacf_to_coefficients(&x[..p]);
        let theta: Vec<f64> = pacf_to_coefficients(&x[p..p + q])
            .into_iter()
            .map(|a| -a)
            .collect();
        let mu = if self.spec.intercept { x[p + q] } else { 0.0 };
        (phi, theta, mu)
    }
}

pub fn fit(series: &CountSeries, spec: &ArimaSpec) -> Result<ArimaFit> {
    fit_with(series, spec, &NelderMead::default())
}

pub fn fit_with(series: &CountSeries, spec: &ArimaSpec, optimizer: &NelderMead) -> Result<ArimaFit> {
    spec.validate()?;
    let needed = spec.p + spec.q + spec.d + 10;
    let available = series.observed_count();
    if available < needed {
        return Err(Error::TooShort { needed, available });
    }
    let work = Working::new(series, spec);
    let segments = work.segments();
    let flat: Vec<f64> = segments.iter().flatten().copied().collect();
    let n_used = flat.len();
    if n_used < spec.p + spec.q + 2 {
        return Err(Error::TooShort {
            needed: spec.p + spec.q + spec.d + 2,
            available: n_used + spec.d,
        });
    }

    let sample_mean = mean(&flat);
    let params = Params { spec };
    let (phi, theta, mu) = if spec.p + spec.q == 0 {
        // closed form: the CSS minimizer is the sample mean
        (Vec::new(), Vec::new(), if spec.intercept { sample_mean } else { 0.0 })
    } else {
        let mut x0 = vec![0.0; spec.p + spec.q];
        let mut steps = vec![0.3; spec.p + spec.q];
        if spec.intercept {
            x0.push(sample_mean);
            steps.push((0.1 * std_dev(&flat)).max(1e-4));
        }
        let min = optimizer.minimize(
            |x| {
                let (phi, theta, mu) = params.unpack(x);
                css(&segments, &phi, &theta, mu)
            },
            &x0,
            &steps,
        )?;
        params.unpack(&min.x)
    };

    let css_value = css(&segments, &phi, &theta, mu);
    let sigma2 = (css_value / n_used as f64).max(SIGMA2_FLOOR);
    let n = n_used as f64;
    let loglik = -0.5 * n * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0);
    let aic = 2.0 * spec.n_params() as f64 - 2.0 * loglik;
    Ok(ArimaFit {
        phi,
        theta,
        mu,
        sigma2,
        loglik,
        aic,
        css: css_value,
        n_used,
    })
}

/// Moduli of the roots of `1 - c_1 z - ... - c_k z^k`; all exceed one for a
/// stationary AR (or, with `c = -theta`, invertible MA) polynomial.
pub fn root_moduli(coefficients: &[f64]) -> Vec<f64> {
    // companion-matrix eigenvalues are the reciprocal roots
    let k = coefficients.len();
    if k == 0 {
        return Vec::new();
    }
    let mut m = nalgebra::DMatrix::<f64>::zeros(k, k);
    for j in 0..k {
        m[(0, j)] = coefficients[j];
    }
    for i in 1..k {
        m[(i, i - 1)] = 1.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|ev| 1.0 / ev.norm())
        .collect()
}

impl ArimaFit {
    pub fn is_stationary(&self) -> bool {
        root_moduli(&self.phi).iter().all(|r| *r > 1.0)
    }

    pub fn is_invertible(&self) -> bool {
        let neg: Vec<f64> = self.theta.iter().map(|t| -t).collect();
        root_moduli(&neg).iter().all(|r| *r > 1.0)
    }

    /// Psi weights of the integrated model, `psi_0 = 1`.
    pub fn psi_weights(&self, d: usize, n: usize) -> Vec<f64> {
        // AR polynomial of the undifferenced series: phi(B) (1 - B)^d
        let mut poly = vec![1.0];
        poly.extend(self.phi.iter().map(|p| -p));
        for _ in 0..d {
            let mut next = vec![0.0; poly.len() + 1];
            for (i, c) in poly.iter().enumerate() {
                next[i] += c;
                next[i + 1] -= c;
            }
            poly = next;
        }
        let ar: Vec<f64> = poly[1..].iter().map(|c| -c).collect();
        let mut psi = vec![0.0; n];
        if n == 0 {
            return psi;
        }
        psi[0] = 1.0;
        for j in 1..n {
            let mut v = if j <= self.theta.len() {
                self.theta[j - 1]
            } else {
                0.0
            };
            for (k, a) in ar.iter().enumerate() {
                if j > k {
                    v += a * psi[j - 1 - k];
                }
            }
            psi[j] = v;
        }
        psi
    }
}

/// Forecasts `horizon` periods past the end of `series`. A masked suffix is
/// bridged by the model, so steps inside it widen the interval but are not
/// reported.
pub fn forecast(
    fit: &ArimaFit,
    series: &CountSeries,
    spec: &ArimaSpec,
    horizon: usize,
    level: f64,
) -> Result<Forecast> {
    check_horizon(horizon)?;
    check_level(level)?;
    spec.validate()?;
    let work = Working::new(series, spec);
    let last = series
        .last_observed()
        .ok_or_else(|| Error::TooShort { needed: 1, available: 0 })?;
    if work.w[last].is_none() {
        return Err(Error::invalid(format!(
            "forecasting needs {} consecutive observed periods at the end of the data",
            spec.d + 1
        )));
    }

    // the final run of defined differences, ending at `last`
    let mut seg_start = last;
    while seg_start > 0 && work.w[seg_start - 1].is_some() {
        seg_start -= 1;
    }
    let seg: Vec<f64> = work.w[seg_start..=last].iter().map(|v| v.unwrap()).collect();
    let resid = innovations(&seg, &fit.phi, &fit.theta, fit.mu);

    let gap = series.len() - 1 - last;
    let steps = gap + horizon;
    let mut dev: Vec<f64> = seg.iter().map(|w| w - fit.mu).collect();
    let mut e = resid;
    let mut z_hist: Vec<f64> = work.z[last - spec.d..=last]
        .iter()
        .map(|v| v.expect("tail observed"))
        .collect();
    let mut z_path = Vec::with_capacity(steps);
    for _ in 0..steps {
        let t = dev.len();
        let mut x = 0.0;
        for (i, ph) in fit.phi.iter().enumerate() {
            if t > i {
                x += ph * dev[t - 1 - i];
            }
        }
        for (j, th) in fit.theta.iter().enumerate() {
            if t > j {
                x += th * e[t - 1 - j];
            }
        }
        dev.push(x);
        e.push(0.0);
        let w = x + fit.mu;
        let z = match spec.d {
            0 => w,
            1 => w + z_hist[z_hist.len() - 1],
            _ => w + 2.0 * z_hist[z_hist.len() - 1] - z_hist[z_hist.len() - 2],
        };
        z_hist.push(z);
        z_path.push(z);
    }

    let psi = fit.psi_weights(spec.d, steps);
    let zq = z_for_level(level);
    let mut acc = 0.0;
    let mut point = Vec::with_capacity(horizon);
    let mut lower = Vec::with_capacity(horizon);
    let mut upper = Vec::with_capacity(horizon);
    for (h, z) in z_path.iter().enumerate() {
        acc += psi[h] * psi[h];
        if h < gap {
            continue;
        }
        let half = zq * (fit.sigma2 * acc).sqrt();
        let back = |v: f64| if spec.use_log { v.exp_m1() } else { v };
        point.push(back(*z));
        lower.push(back(z - half));
        upper.push(back(z + half));
    }
    Ok(Forecast::from_bounds(
        series.granularity(),
        series.last_date().expect("non-empty"),
        point,
        lower,
        upper,
        level,
        IntervalKind::Model,
    ))
}
