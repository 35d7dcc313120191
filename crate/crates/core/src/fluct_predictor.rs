//! Baseline predictor over successive close-price fluctuations.
//!
//! The HMM is fitted on `(close delta, volume)` pairs. The expected next
//! delta is `posterior' A mu_delta`: the filtered state distribution pushed
//! one step through the transition matrix, weighted by each state's mean
//! delta.

use crate::error::{Error, Result};
use crate::features::{delta_features, DeltaObservation};
use crate::forecast::Forecast;
use crate::hmm::{fit_baum_welch, forward_pass, log_sum_exp, propagate, FitConfig, FitReport, GaussianHmm};
use crate::map_predictor::check_range;
use crate::market_data::{StockBar, SymbolSeries};

#[derive(Debug, Clone, PartialEq)]
pub struct FluctModel {
    pub hmm: GaussianHmm,
    pub last_close: f64,
    /// Filtered state distribution after the most recent observation.
    pub posterior: Vec<f64>,
}

fn normalize_log(log_p: &[f64]) -> Vec<f64> {
    let total = log_sum_exp(log_p);
    log_p.iter().map(|l| (l - total).exp()).collect()
}

impl FluctModel {
    /// Wraps a fitted two-dimensional model, filtering over `bars` to obtain
    /// the posterior at the last bar.
    pub fn from_hmm(hmm: GaussianHmm, bars: &[StockBar]) -> Result<Self> {
        if hmm.dim() != 2 {
            return Err(Error::InvalidArgument(format!(
                "fluctuation model needs dimension 2, got {}",
                hmm.dim()
            )));
        }
        let deltas = delta_features(bars)?;
        let fwd = forward_pass(&hmm, &deltas)?;
        let posterior = normalize_log(fwd.log_alpha.last().unwrap());
        Ok(FluctModel {
            hmm,
            last_close: bars.last().unwrap().close,
            posterior,
        })
    }

    /// Expected close difference for the next day.
    pub fn predict_next_delta(&self) -> f64 {
        let a = self.hmm.transition();
        let n = self.hmm.n_states();
        (0..n)
            .map(|i| {
                let row: f64 = (0..n).map(|j| a[(i, j)] * self.hmm.mean(j)[0]).sum();
                self.posterior[i] * row
            })
            .sum()
    }

    pub fn predict_close(&self, prev_close: f64) -> f64 {
        prev_close + self.predict_next_delta()
    }

    /// One forward-filter step with a newly observed day.
    pub fn advance(&mut self, observation: DeltaObservation, close: f64) {
        let n = self.hmm.n_states();
        let log_post: Vec<f64> = self
            .posterior
            .iter()
            .map(|&p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY })
            .collect();
        let mut next = vec![0.0; n];
        propagate(&self.hmm, &log_post, &mut next);
        for (j, v) in next.iter_mut().enumerate() {
            *v += self.hmm.emission_log_density(j, observation.as_ref());
        }
        self.posterior = normalize_log(&next);
        self.last_close = close;
    }
}

/// Fits the baseline on `series`; needs at least `n_states + 1` bars.
pub fn fit_fluct(series: &SymbolSeries, n_states: usize, config: &FitConfig) -> Result<(FluctModel, FitReport)> {
    if series.len() < n_states + 1 {
        return Err(Error::InsufficientData {
            needed: n_states + 1,
            got: series.len(),
        });
    }
    let deltas = delta_features(&series.bars)?;
    let (hmm, report) = fit_baum_welch(&deltas, n_states, config)?;
    let model = FluctModel::from_hmm(hmm, &series.bars)?;
    Ok((model, report))
}

pub fn predict_next_delta(model: &FluctModel) -> f64 {
    model.predict_next_delta()
}

pub fn predict_close_fluct(model: &FluctModel, prev_close: f64) -> f64 {
    model.predict_close(prev_close)
}

/// Forecasts days `start_index..start_index + horizon`. `model.posterior`
/// must describe day `start_index - 1`; it is advanced with each observed
/// day on a private copy.
pub fn rolling_forecast_fluct(
    model: &FluctModel,
    series: &SymbolSeries,
    start_index: usize,
    horizon: usize,
) -> Result<Vec<Forecast>> {
    check_range(series.len(), start_index, horizon)?;
    let mut state = model.clone();
    let mut out = Vec::with_capacity(horizon);
    for t in start_index..start_index + horizon {
        let (prev, day) = (&series.bars[t - 1], &series.bars[t]);
        out.push(Forecast {
            date: Some(day.date),
            open: day.open,
            predicted_close: state.predict_close(prev.close),
            actual_close: Some(day.close),
            chosen_candidate: None,
            candidate_log_likelihood: None,
        });
        state.advance(
            DeltaObservation::new(day.close - prev.close, day.volume as f64),
            day.close,
        );
    }
    Ok(out)
}
