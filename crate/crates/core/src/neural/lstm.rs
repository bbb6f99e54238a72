use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    io, precise, read_observed, train, training_batch, training_rmse, uniform, validate_training, Batch,
    Calendar, DenseArray, Network, Recursion, Standardizer, Tape, TrainReport, Var,
};
use crate::error::{Error, Result};
use crate::forecast::Forecast;
use crate::series::{CountSeries, Granularity};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmSpec {
    pub lookback: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub use_weekday: bool,
    pub use_month: bool,
}

impl Default for LstmSpec {
    fn default() -> Self {
        LstmSpec {
            lookback: 28,
            hidden: 32,
            epochs: 200,
            learning_rate: 1e-3,
            seed: 0,
            use_weekday: true,
            use_month: false,
        }
    }
}

impl LstmSpec {
    pub fn validate(&self, granularity: Granularity) -> Result<()> {
        if self.lookback == 0 || self.hidden == 0 {
            return Err(Error::invalid("LSTM lookback and hidden size must be at least 1"));
        }
        if self.use_weekday && granularity != Granularity::Daily {
            return Err(Error::invalid("weekday inputs need a daily series"));
        }
        validate_training(self.epochs, self.learning_rate)
    }

    fn calendar(&self) -> Calendar {
        Calendar {
            weekday: self.use_weekday,
            month: self.use_month,
        }
    }
}

/// Single-layer LSTM with a linear head on the last hidden state.
///
/// Parameters, in order: gate weights `[F + H, 4H]` acting on `[x_t, h_{t-1}]`
/// with gate blocks input, forget, output, candidate; gate bias `[4H]`; head
/// weights `[H, 1]`; head bias `[1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub spec: LstmSpec,
    pub granularity: Granularity,
    pub scaler: Standardizer,
    pub rmse_train: f64,
    #[serde(skip)]
    params: Vec<DenseArray>,
}

impl LstmModel {
    /// Freshly initialized weights, uniform in `±1/sqrt(hidden)`, forget bias 1.
    pub fn init(spec: &LstmSpec, granularity: Granularity) -> Result<Self> {
        spec.validate(granularity)?;
        let h = spec.hidden;
        let f = spec.calendar().width();
        let bound = 1.0 / (h as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let w = uniform(&mut rng, vec![f + h, 4 * h], bound);
        let mut b = uniform(&mut rng, vec![4 * h], bound);
        for v in &mut b.data_mut()[h..2 * h] {
            *v = 1.0;
        }
        let head_w = uniform(&mut rng, vec![h, 1], bound);
        let head_b = uniform(&mut rng, vec![1], bound);
        Ok(LstmModel {
            spec: spec.clone(),
            granularity,
            scaler: Standardizer { mean: 0.0, sd: 1.0 },
            rmse_train: 0.0,
            params: vec![w, b, head_w, head_b],
        })
    }

    pub fn input_width(&self) -> usize {
        self.spec.calendar().width()
    }

    /// Every training window of `series` under this model's scaling.
    pub fn batch(&self, series: &CountSeries) -> Result<Batch> {
        let values = read_observed(series);
        training_batch(series, &values, self.spec.lookback, self.spec.calendar(), &self.scaler)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::save(path, "lstm", self, &self.params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (mut model, params): (LstmModel, _) = io::load(path, "lstm")?;
        let fresh = LstmModel::init(&model.spec, model.granularity)?;
        io::check_shapes(&fresh.params, &params)?;
        model.params = params;
        Ok(model)
    }
}

impl Network for LstmModel {
    fn params(&self) -> &[DenseArray] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [DenseArray] {
        &mut self.params
    }

    fn forward(&self, tape: &mut Tape, params: &[Var], inputs: &DenseArray) -> Var {
        let (batch, steps, width) = (inputs.shape()[0], inputs.shape()[1], inputs.shape()[2]);
        let hidden = self.spec.hidden;
        let (w, b, head_w, head_b) = (params[0], params[1], params[2], params[3]);
        let mut h = tape.leaf(DenseArray::zeros(vec![batch, hidden]));
        let mut c = tape.leaf(DenseArray::zeros(vec![batch, hidden]));
        for t in 0..steps {
            let mut xt = Vec::with_capacity(batch * width);
            for bi in 0..batch {
                xt.extend_from_slice(&inputs.data()[(bi * steps + t) * width..][..width]);
            }
            let xt = tape.leaf(DenseArray::new(vec![batch, width], xt).expect("step input"));
            let xh = tape.concat_cols(xt, h);
            let z = tape.matmul(xh, w);
            let z = tape.add_bias(z, b);
            let i_pre = tape.slice_cols(z, 0, hidden);
            let f_pre = tape.slice_cols(z, hidden, 2 * hidden);
            let o_pre = tape.slice_cols(z, 2 * hidden, 3 * hidden);
            let g_pre = tape.slice_cols(z, 3 * hidden, 4 * hidden);
            let i = tape.sigmoid(i_pre);
            let f = tape.sigmoid(f_pre);
            let o = tape.sigmoid(o_pre);
            let g = tape.tanh(g_pre);
            let keep = tape.mul(f, c);
            let write = tape.mul(i, g);
            c = tape.add(keep, write);
            let squashed = tape.tanh(c);
            h = tape.mul(o, squashed);
        }
        let out = tape.matmul(h, head_w);
        tape.add_bias(out, head_b)
    }

    fn reference_loss(&self, batch: &Batch, shift: Option<(usize, usize, f64)>) -> precise::Dd {
        precise::lstm_loss(&precise::lift(&self.params, shift), self.spec.hidden, batch)
    }
}

/// Trains on every fully observed window of `series`.
pub fn lstm_fit(series: &CountSeries, spec: &LstmSpec) -> Result<(LstmModel, TrainReport)> {
    let mut model = LstmModel::init(spec, series.granularity())?;
    let values = read_observed(series);
    let observed: Vec<f64> = values.iter().flatten().copied().collect();
    let needed = spec.lookback + 30;
    if observed.len() < needed {
        return Err(Error::TooShort {
            needed,
            available: observed.len(),
        });
    }
    model.scaler = Standardizer::fit(&observed);
    let batch = training_batch(series, &values, spec.lookback, spec.calendar(), &model.scaler)?;
    let report = train(&mut model, &batch, spec.epochs, spec.learning_rate)?;
    model.rmse_train = training_rmse(&model, &batch, &model.scaler);
    Ok((model, report))
}

/// Recursive forecast from the end of `series`; the final `lookback`
/// periods must all be observed.
pub fn lstm_forecast(
    model: &LstmModel,
    series: &CountSeries,
    horizon: usize,
    level: f64,
) -> Result<Forecast> {
    Recursion {
        net: model,
        window: model.spec.lookback,
        calendar: model.spec.calendar(),
        scaler: model.scaler,
        rmse_train: model.rmse_train,
        granularity: model.granularity,
    }
    .forecast(series, horizon, level)
}
