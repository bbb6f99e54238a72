//! LSTM and TCN forecasters on a small reverse-mode differentiation core.
//!
//! Both models read fixed-length windows of standardized counts, are trained
//! full-batch with Adam on squared error, and forecast recursively by feeding
//! each prediction back as the newest input.

mod array;
mod io;
mod lstm;
mod precise;
mod tape;
mod tcn;

use chrono::{Datelike, NaiveDate};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{check_horizon, check_level, Forecast, IntervalKind};
use crate::series::{CountSeries, Granularity};
use crate::stats::z_for_level;

pub use array::DenseArray;
pub use io::{read_arrays, write_arrays};
pub use lstm::{lstm_fit, lstm_forecast, LstmModel, LstmSpec};
pub use tape::{Tape, Var};
pub use tcn::{tcn_fit, tcn_forecast, TcnModel, TcnSpec};

/// A differentiable model mapping `[batch, steps, features]` inputs to one
/// prediction per row.
pub trait Network {
    fn params(&self) -> &[DenseArray];
    fn params_mut(&mut self) -> &mut [DenseArray];
    /// Records the forward pass; `params` are leaves holding `self.params()`.
    fn forward(&self, tape: &mut Tape, params: &[Var], inputs: &DenseArray) -> Var;
    /// Squared-error loss in double-double arithmetic, with parameter
    /// `shift = (array, index, delta)` moved by `delta`.
    fn reference_loss(&self, batch: &Batch, shift: Option<(usize, usize, f64)>) -> precise::Dd;
}

/// Training windows: inputs `[B, T, F]` and targets `[B, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: DenseArray,
    pub targets: DenseArray,
}

impl Batch {
    pub fn new(inputs: DenseArray, targets: DenseArray) -> Result<Self> {
        if inputs.shape().len() != 3 || targets.shape() != [inputs.rows(), 1] {
            return Err(Error::invalid(format!(
                "batch shapes {:?} / {:?} are not [B,T,F] / [B,1]",
                inputs.shape(),
                targets.shape()
            )));
        }
        Ok(Batch { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows `range` as a smaller batch.
    pub fn rows(&self, range: std::ops::Range<usize>) -> Batch {
        let per = self.inputs.len() / self.len().max(1);
        let mut shape = self.inputs.shape().to_vec();
        shape[0] = range.len();
        let inputs = DenseArray::new(
            shape,
            self.inputs.data()[range.start * per..range.end * per].to_vec(),
        )
        .expect("row slice");
        let targets = DenseArray::new(vec![range.len(), 1], self.targets.data()[range].to_vec())
            .expect("row slice");
        Batch { inputs, targets }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    /// Training loss after the last update.
    pub final_loss: f64,
    pub epochs_run: usize,
}

/// z-score parameters over the observed training values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub sd: f64,
}

impl Standardizer {
    /// A zero spread falls back to unit scale.
    pub fn fit(values: &[f64]) -> Self {
        let mean = crate::stats::mean(values);
        let sd = crate::stats::std_dev(values);
        Standardizer {
            mean,
            sd: if sd > 1e-12 { sd } else { 1.0 },
        }
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.sd
    }

    pub fn invert(&self, s: f64) -> f64 {
        s * self.sd + self.mean
    }
}

/// Calendar one-hots appended to each input step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub(crate) struct Calendar {
    pub weekday: bool,
    pub month: bool,
}

impl Calendar {
    pub fn width(&self) -> usize {
        1 + if self.weekday { 7 } else { 0 } + if self.month { 12 } else { 0 }
    }

    fn push_row(&self, value: f64, date: NaiveDate, out: &mut Vec<f64>) {
        out.push(value);
        if self.weekday {
            let d = date.weekday().num_days_from_monday() as usize;
            out.extend((0..7).map(|i| if i == d { 1.0 } else { 0.0 }));
        }
        if self.month {
            let m = date.month0() as usize;
            out.extend((0..12).map(|i| if i == m { 1.0 } else { 0.0 }));
        }
    }
}

pub(crate) fn uniform(rng: &mut ChaCha8Rng, shape: Vec<usize>, bound: f64) -> DenseArray {
    DenseArray::from_fn(shape, || rng.random_range(-bound..bound))
}

/// Observed values by period; masked periods are never read.
pub(crate) fn read_observed(series: &CountSeries) -> Vec<Option<f64>> {
    (0..series.len()).map(|i| series.get(i)).collect()
}

/// Every window of `window` inputs plus the following target, all observed.
pub(crate) fn training_batch(
    series: &CountSeries,
    values: &[Option<f64>],
    window: usize,
    calendar: Calendar,
    scaler: &Standardizer,
) -> Result<Batch> {
    let width = calendar.width();
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for t in window..values.len() {
        if values[t - window..=t].iter().any(|v| v.is_none()) {
            continue;
        }
        for i in t - window..t {
            calendar.push_row(scaler.apply(values[i].unwrap()), series.date(i), &mut inputs);
        }
        targets.push(scaler.apply(values[t].unwrap()));
    }
    let rows = targets.len();
    if rows == 0 {
        return Err(Error::TooShort {
            needed: window + 1,
            available: values.iter().filter(|v| v.is_some()).count(),
        });
    }
    Batch::new(
        DenseArray::new(vec![rows, window, width], inputs)?,
        DenseArray::new(vec![rows, 1], targets)?,
    )
}

pub(crate) fn validate_training(epochs: usize, learning_rate: f64) -> Result<()> {
    if epochs == 0 {
        return Err(Error::invalid("epochs must be at least 1"));
    }
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(Error::invalid("learning rate must be positive"));
    }
    Ok(())
}

fn run_forward<N: Network + ?Sized>(net: &N, inputs: &DenseArray) -> (Tape, Vec<Var>, Var) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = net.params().iter().map(|p| tape.leaf(p.clone())).collect();
    let out = net.forward(&mut tape, &vars, inputs);
    (tape, vars, out)
}

/// One prediction per batch row.
pub fn predict<N: Network + ?Sized>(net: &N, inputs: &DenseArray) -> Vec<f64> {
    let (tape, _, out) = run_forward(net, inputs);
    tape.value(out).data().to_vec()
}

pub fn loss<N: Network + ?Sized>(net: &N, batch: &Batch) -> f64 {
    let (mut tape, _, out) = run_forward(net, &batch.inputs);
    let l = tape.mse(out, &batch.targets);
    tape.value(l).data()[0]
}

/// Mean squared error and its gradient for every parameter array.
pub fn loss_and_grads<N: Network + ?Sized>(net: &N, batch: &Batch) -> (f64, Vec<DenseArray>) {
    let (mut tape, vars, out) = run_forward(net, &batch.inputs);
    let l = tape.mse(out, &batch.targets);
    let mut grads = tape.backward(l);
    let value = tape.value(l).data()[0];
    let per_param = vars
        .iter()
        .zip(net.params())
        .map(|(v, p)| {
            grads[v.index()]
                .take()
                .unwrap_or_else(|| DenseArray::zeros(p.shape().to_vec()))
        })
        .collect();
    (value, per_param)
}

/// Largest relative gap between analytic gradients and central differences
/// (step 1e-5) over every parameter, with denominator `max(|a|, |n|, 1e-8)`.
/// The differences are taken on a double-double evaluation of the loss so
/// f64 rounding does not dominate small gradients.
pub fn grad_check<N: Network>(net: &N, batch: &Batch) -> f64 {
    const H: f64 = 1e-5;
    let (_, analytic) = loss_and_grads(net, batch);
    let mut worst: f64 = 0.0;
    for (p, grad) in analytic.iter().enumerate() {
        for (j, a) in grad.data().iter().enumerate() {
            let up = net.reference_loss(batch, Some((p, j, H)));
            let down = net.reference_loss(batch, Some((p, j, -H)));
            let numeric = (up - down).to_f64() / (2.0 * H);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    worst
}

/// Adam with the usual bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, params: &[DenseArray]) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [DenseArray], grads: &[DenseArray]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            for (j, (w, gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                let m = &mut self.m[k][j];
                let v = &mut self.v[k][j];
                *m = self.beta1 * *m + (1.0 - self.beta1) * gj;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gj * gj;
                *w -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Full-batch Adam for `epochs` updates. Each recorded loss is the one the
/// update was computed from.
pub fn train<N: Network + ?Sized>(
    net: &mut N,
    batch: &Batch,
    epochs: usize,
    learning_rate: f64,
) -> Result<TrainReport> {
    let mut adam = Adam::new(learning_rate, net.params());
    let mut epoch_losses = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let (value, grads) = loss_and_grads(&*net, batch);
        if !value.is_finite() || grads.iter().any(|g| g.data().iter().any(|v| !v.is_finite())) {
            return Err(Error::Diverged { epoch });
        }
        epoch_losses.push(value);
        adam.step(net.params_mut(), &grads);
    }
    let final_loss = loss(&*net, batch);
    if !final_loss.is_finite() {
        return Err(Error::Diverged { epoch: epochs });
    }
    Ok(TrainReport {
        epochs_run: epoch_losses.len(),
        epoch_losses,
        final_loss,
    })
}

/// Root mean squared one-step error on the training windows, in counts.
pub(crate) fn training_rmse<N: Network + ?Sized>(net: &N, batch: &Batch, scaler: &Standardizer) -> f64 {
    let pred = predict(net, &batch.inputs);
    let sse: f64 = pred
        .iter()
        .zip(batch.targets.data())
        .map(|(p, t)| (scaler.invert(*p) - scaler.invert(*t)).powi(2))
        .sum();
    (sse / pred.len() as f64).sqrt()
}

/// Shared state a trained model needs to forecast.
pub(crate) struct Recursion<'a, N: Network + ?Sized> {
    pub net: &'a N,
    pub window: usize,
    pub calendar: Calendar,
    pub scaler: Standardizer,
    pub rmse_train: f64,
    pub granularity: Granularity,
}

impl<N: Network + ?Sized> Recursion<'_, N> {
    pub fn forecast(&self, series: &CountSeries, horizon: usize, level: f64) -> Result<Forecast> {
        check_horizon(horizon)?;
        check_level(level)?;
        if series.granularity() != self.granularity {
            return Err(Error::invalid(format!(
                "model was trained on {} data, series is {}",
                self.granularity,
                series.granularity()
            )));
        }
        let n = series.len();
        if n < self.window {
            return Err(Error::TooShort {
                needed: self.window,
                available: n,
            });
        }
        let mut history: Vec<(f64, NaiveDate)> = Vec::with_capacity(self.window + horizon);
        for i in n - self.window..n {
            match series.get(i) {
                Some(v) => history.push((self.scaler.apply(v), series.date(i))),
                None => return Err(Error::MaskedTail { date: series.date(i) }),
            }
        }
        let origin = series.last_date().expect("non-empty");
        let width = self.calendar.width();
        let z = z_for_level(level);
        let mut point = Vec::with_capacity(horizon);
        let mut half = Vec::with_capacity(horizon);
        for step in 1..=horizon {
            let mut row = Vec::with_capacity(self.window * width);
            for (v, d) in &history[history.len() - self.window..] {
                self.calendar.push_row(*v, *d, &mut row);
            }
            let inputs = DenseArray::new(vec![1, self.window, width], row)?;
            let value = self.scaler.invert(predict(self.net, &inputs)[0]).max(0.0);
            if !value.is_finite() {
                return Err(Error::Diverged { epoch: 0 });
            }
            history.push((self.scaler.apply(value), self.granularity.advance(origin, step)));
            point.push(value);
            half.push(z * self.rmse_train * (step as f64).sqrt());
        }
        Ok(Forecast::from_parts(
            self.granularity,
            origin,
            point,
            &half,
            level,
            IntervalKind::Heuristic,
        ))
    }
}
