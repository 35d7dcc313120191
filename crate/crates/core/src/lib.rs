//! Hidden Markov model toolkit for next-day closing price forecasting.
//!
//! Two predictors are provided. [`map_predictor`] fits a Gaussian HMM on
//! fractional intraday changes and picks the next observation from a
//! discretized grid by maximizing the joint likelihood with the recent
//! window. [`fluct_predictor`] fits on day-over-day close differences and
//! volume and predicts the expected next difference.

pub mod cli;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod fluct_predictor;
pub mod forecast;
pub mod hmm;
pub mod map_predictor;
pub mod market_data;

pub use error::{Error, Result};
pub use evaluation::{build_report, mae, mape, rmse, BacktestReport};
pub use features::{delta_features, fractional_features, DeltaObservation, ObservationVector};
pub use fluct_predictor::{fit_fluct, FluctModel};
pub use forecast::{Forecast, Method};
pub use hmm::{fit_baum_welch, forward_log_likelihood, FitConfig, FitReport, GaussianHmm};
pub use map_predictor::{build_grid, GridSpec, IncrementalScorer, PredictorConfig};
pub use market_data::{chronological_split, clean, StockBar, SymbolSeries};
