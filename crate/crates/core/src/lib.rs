//! Equipment-loss forecasting toolkit.
//!
//! Raw loss records are parsed and deduplicated ([`ingest`]), aggregated into
//! masked count series ([`series`]), and forecast with one of five model
//! families: [`arima`], [`decomp`], the LSTM and TCN in [`neural`], and
//! [`gbtrees`]. [`eval`] runs rolling-origin backtests over any of them.

pub mod arima;
pub mod decomp;
pub mod error;
pub mod eval;
pub mod forecast;
pub mod gbtrees;
pub mod ingest;
pub mod neural;
pub mod optim;
pub mod series;
pub mod stats;

pub use error::{Error, Result};
pub use forecast::{Forecast, IntervalKind};
pub use series::{CountSeries, ExclusionWindow, Granularity};
