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
pub struct TcnSpec {
    pub kernel: usize,
    pub dilations: Vec<usize>,
    pub channels: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Input window; defaults to the receptive field.
    pub window: Option<usize>,
}

impl Default for TcnSpec {
    fn default() -> Self {
        TcnSpec {
            kernel: 3,
            dilations: vec![1, 2, 4, 8],
            channels: 16,
            epochs: 200,
            learning_rate: 1e-3,
            seed: 0,
            window: None,
        }
    }
}

impl TcnSpec {
    pub fn receptive_field(&self) -> usize {
        1 + (self.kernel.saturating_sub(1)) * self.dilations.iter().sum::<usize>()
    }

    pub fn window(&self) -> usize {
        self.window.unwrap_or_else(|| self.receptive_field())
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.channels == 0 {
            return Err(Error::invalid("TCN kernel and channels must be at least 1"));
        }
        if self.dilations.is_empty() || self.dilations.contains(&0) {
            return Err(Error::invalid("TCN needs at least one dilation, each >= 1"));
        }
        let (receptive_field, window) = (self.receptive_field(), self.window());
        if receptive_field > window {
            return Err(Error::ReceptiveField {
                receptive_field,
                window,
            });
        }
        validate_training(self.epochs, self.learning_rate)
    }
}

/// Residual stack of dilated causal convolutions with a linear head on the
/// last step.
///
/// Parameters, in order, for each block: kernel `[K, Cin, C]`, bias `[C]`,
/// then for blocks whose input width differs from `C` a `1x1` projection
/// `[1, Cin, C]` and its bias; finally head weights `[C, 1]` and bias `[1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcnModel {
    pub spec: TcnSpec,
    pub granularity: Granularity,
    pub scaler: Standardizer,
    pub rmse_train: f64,
    #[serde(skip)]
    params: Vec<DenseArray>,
}

const INPUTS: usize = 1;

impl TcnModel {
    /// Weights uniform in `±1/sqrt(channels)`.
    pub fn init(spec: &TcnSpec, granularity: Granularity) -> Result<Self> {
        spec.validate()?;
        let c = spec.channels;
        let bound = 1.0 / (c as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut params = Vec::new();
        let mut cin = INPUTS;
        for _ in &spec.dilations {
            params.push(uniform(&mut rng, vec![spec.kernel, cin, c], bound));
            params.push(uniform(&mut rng, vec![c], bound));
            if cin != c {
                params.push(uniform(&mut rng, vec![1, cin, c], bound));
                params.push(uniform(&mut rng, vec![c], bound));
            }
            cin = c;
        }
        params.push(uniform(&mut rng, vec![c, 1], bound));
        params.push(uniform(&mut rng, vec![1], bound));
        Ok(TcnModel {
            spec: spec.clone(),
            granularity,
            scaler: Standardizer { mean: 0.0, sd: 1.0 },
            rmse_train: 0.0,
            params,
        })
    }

    pub fn input_width(&self) -> usize {
        INPUTS
    }

    /// Output of the last residual block, `[B, T, channels]`, before the head.
    pub fn activations(&self, inputs: &DenseArray) -> DenseArray {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.params.iter().map(|p| tape.leaf(p.clone())).collect();
        let x = tape.leaf(inputs.clone());
        let (out, _) = self.blocks(&mut tape, &vars, x);
        tape.value(out).clone()
    }

    fn blocks(&self, tape: &mut Tape, params: &[Var], mut x: Var) -> (Var, usize) {
        let mut k = 0;
        let mut cin = INPUTS;
        for &d in &self.spec.dilations {
            let conv = tape.causal_conv(x, params[k], params[k + 1], d);
            let act = tape.relu(conv);
            k += 2;
            let residual = if cin != self.spec.channels {
                let r = tape.causal_conv(x, params[k], params[k + 1], 1);
                k += 2;
                r
            } else {
                x
            };
            x = tape.add(act, residual);
            cin = self.spec.channels;
        }
        (x, k)
    }

    pub fn batch(&self, series: &CountSeries) -> Result<Batch> {
        let values = read_observed(series);
        training_batch(series, &values, self.spec.window(), Calendar::default(), &self.scaler)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::save(path, "tcn", self, &self.params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (mut model, params): (TcnModel, _) = io::load(path, "tcn")?;
        let fresh = TcnModel::init(&model.spec, model.granularity)?;
        io::check_shapes(&fresh.params, &params)?;
        model.params = params;
        Ok(model)
    }
}

impl Network for TcnModel {
    fn params(&self) -> &[DenseArray] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [DenseArray] {
        &mut self.params
    }

    fn forward(&self, tape: &mut Tape, params: &[Var], inputs: &DenseArray) -> Var {
        let x = tape.leaf(inputs.clone());
        let (top, k) = self.blocks(tape, params, x);
        let last = tape.last_step(top);
        let out = tape.matmul(last, params[k]);
        tape.add_bias(out, params[k + 1])
    }

    fn reference_loss(&self, batch: &Batch, shift: Option<(usize, usize, f64)>) -> precise::Dd {
        let spec = &self.spec;
        precise::tcn_loss(
            &precise::lift(&self.params, shift),
            spec.kernel,
            &spec.dilations,
            spec.channels,
            batch,
        )
    }
}

pub fn tcn_fit(series: &CountSeries, spec: &TcnSpec) -> Result<(TcnModel, TrainReport)> {
    let mut model = TcnModel::init(spec, series.granularity())?;
    let values = read_observed(series);
    let observed: Vec<f64> = values.iter().flatten().copied().collect();
    model.scaler = Standardizer::fit(&observed);
    let batch = training_batch(series, &values, spec.window(), Calendar::default(), &model.scaler)?;
    let report = train(&mut model, &batch, spec.epochs, spec.learning_rate)?;
    model.rmse_train = training_rmse(&model, &batch, &model.scaler);
    Ok((model, report))
}

pub fn tcn_forecast(
    model: &TcnModel,
    series: &CountSeries,
    horizon: usize,
    level: f64,
) -> Result<Forecast> {
    Recursion {
        net: model,
        window: model.spec.window(),
        calendar: Calendar::default(),
        scaler: model.scaler,
        rmse_train: model.rmse_train,
        granularity: model.granularity,
    }
    .forecast(series, horizon, level)
}
