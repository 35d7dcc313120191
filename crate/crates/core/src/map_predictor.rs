//! Next-day close prediction by maximizing the joint likelihood of the
//! recent window extended with each candidate from a discretized grid.
//!
//! For a window `O_1..O_d` the predicted observation is
//! `argmax_c P(O_1, .., O_d, c | model)`; the closing price follows as
//! `open * (1 + frac_change)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ObservationVector;
use crate::forecast::Forecast;
use crate::hmm::{forward_pass, log_sum_exp, propagate, GaussianHmm};
use crate::market_data::{StockBar, SymbolSeries};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub change_min: f64,
    pub change_max: f64,
    pub change_steps: usize,
    pub high_min: f64,
    pub high_max: f64,
    pub high_steps: usize,
    pub low_min: f64,
    pub low_max: f64,
    pub low_steps: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            change_min: -0.1,
            change_max: 0.1,
            change_steps: 50,
            high_min: 0.0,
            high_max: 0.1,
            high_steps: 10,
            low_min: 0.0,
            low_max: 0.1,
            low_steps: 10,
        }
    }
}

/// `steps` evenly spaced points from `min` to `max`, both included.
fn axis(min: f64, max: f64, steps: usize) -> Vec<f64> {
    if steps == 1 {
        return vec![min];
    }
    let span = max - min;
    let last = (steps - 1) as f64;
    (0..steps)
        .map(|i| if i + 1 == steps { max } else { min + span * (i as f64 / last) })
        .collect()
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let axes = [
            ("change", self.change_min, self.change_max, self.change_steps),
            ("high", self.high_min, self.high_max, self.high_steps),
            ("low", self.low_min, self.low_max, self.low_steps),
        ];
        for (name, min, max, steps) in axes {
            if steps < 1 {
                return Err(Error::InvalidArgument(format!("{name} axis needs at least one step")));
            }
            if !(min.is_finite() && max.is_finite() && min <= max) {
                return Err(Error::InvalidArgument(format!(
                    "{name} axis bounds must be finite with min <= max, got [{min}, {max}]"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.change_steps * self.high_steps * self.low_steps
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn change_axis(&self) -> Vec<f64> {
        axis(self.change_min, self.change_max, self.change_steps)
    }

    pub fn high_axis(&self) -> Vec<f64> {
        axis(self.high_min, self.high_max, self.high_steps)
    }

    pub fn low_axis(&self) -> Vec<f64> {
        axis(self.low_min, self.low_max, self.low_steps)
    }
}

/// Cartesian product of the three axes; change varies slowest, low fastest.
pub fn build_grid(spec: &GridSpec) -> Result<Vec<ObservationVector>> {
    spec.validate()?;
    let (highs, lows) = (spec.high_axis(), spec.low_axis());
    let mut grid = Vec::with_capacity(spec.len());
    for c in spec.change_axis() {
        for &h in &highs {
            for &l in &lows {
                grid.push(ObservationVector::new(c, h, l));
            }
        }
    }
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub latency_days: usize,
    pub grid: GridSpec,
    /// Score grid candidates on the current rayon pool.
    pub parallel: bool,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            latency_days: 30,
            grid: GridSpec::default(),
            parallel: false,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latency_days < 1 {
            return Err(Error::InvalidArgument("latency must be at least one day".into()));
        }
        self.grid.validate()
    }
}

/// Scores `window ++ [candidate]` while reusing the forward pass over the
/// shared window: one `O(n^2)` propagation at construction, then `O(n)`
/// emission evaluations per candidate.
#[derive(Debug, Clone)]
pub struct IncrementalScorer<'m> {
    model: &'m GaussianHmm,
    /// `log P(window, q_next = j)`.
    log_predicted: Vec<f64>,
}

impl<'m> IncrementalScorer<'m> {
    pub fn new<O: AsRef<[f64]>>(model: &'m GaussianHmm, window: &[O]) -> Result<Self> {
        let log_predicted = if window.is_empty() {
            model.log_start().to_vec()
        } else {
            let fwd = forward_pass(model, window)?;
            let mut next = vec![0.0; model.n_states()];
            propagate(model, fwd.log_alpha.last().unwrap(), &mut next);
            next
        };
        Ok(IncrementalScorer {
            model,
            log_predicted,
        })
    }

    /// Joint log-likelihood of the window followed by `candidate`.
    pub fn score(&self, candidate: &[f64]) -> f64 {
        let mut terms = vec![0.0; self.log_predicted.len()];
        self.model.emission_log_densities(candidate, &mut terms);
        for (t, p) in terms.iter_mut().zip(&self.log_predicted) {
            *t += p;
        }
        log_sum_exp(&terms)
    }
}

fn better(a: (usize, f64), b: (usize, f64)) -> (usize, f64) {
    // higher score wins, then the earlier grid index
    let key = |s: f64| if s.is_nan() { f64::NEG_INFINITY } else { s };
    let (sa, sb) = (key(a.1), key(b.1));
    if sa > sb || (sa == sb && a.0 < b.0) {
        a
    } else {
        b
    }
}

fn argmax(scorer: &IncrementalScorer<'_>, grid: &[ObservationVector], parallel: bool) -> (usize, f64) {
    if parallel {
        grid.par_iter()
            .enumerate()
            .map(|(i, c)| (i, scorer.score(c.as_ref())))
            .reduce_with(better)
            .expect("grid is non-empty")
    } else {
        grid.iter()
            .enumerate()
            .map(|(i, c)| (i, scorer.score(c.as_ref())))
            .reduce(better)
            .expect("grid is non-empty")
    }
}

fn check_model(model: &GaussianHmm) -> Result<()> {
    if model.dim() != ObservationVector::DIM {
        return Err(Error::InvalidArgument(format!(
            "MAP prediction needs a {}-dimensional model, got {}",
            ObservationVector::DIM,
            model.dim()
        )));
    }
    Ok(())
}

/// Grid candidate maximizing the joint likelihood with `window`, and its
/// score. Ties go to the earliest candidate in grid order.
pub fn map_next_observation(
    model: &GaussianHmm,
    window: &[ObservationVector],
    grid: &[ObservationVector],
) -> Result<(ObservationVector, f64)> {
    map_next_observation_with(model, window, grid, false)
}

pub fn map_next_observation_with(
    model: &GaussianHmm,
    window: &[ObservationVector],
    grid: &[ObservationVector],
    parallel: bool,
) -> Result<(ObservationVector, f64)> {
    check_model(model)?;
    if grid.is_empty() {
        return Err(Error::InvalidArgument("candidate grid is empty".into()));
    }
    let scorer = IncrementalScorer::new(model, window)?;
    let (i, score) = argmax(&scorer, grid, parallel);
    Ok((grid[i], score))
}

/// The last `latency` finite feature vectors of `history`, oldest first.
pub fn recent_window(history: &[StockBar], latency: usize) -> Vec<ObservationVector> {
    let mut window: Vec<ObservationVector> = history
        .iter()
        .rev()
        .map(ObservationVector::from_bar)
        .filter(ObservationVector::is_finite)
        .take(latency)
        .collect();
    window.reverse();
    window
}

fn predict_on_grid(
    model: &GaussianHmm,
    history: &[StockBar],
    open_price: f64,
    latency: usize,
    grid: &[ObservationVector],
    parallel: bool,
) -> Result<Forecast> {
    if !(open_price.is_finite() && open_price > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "open price must be positive, got {open_price}"
        )));
    }
    let window = recent_window(history, latency);
    if window.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let (best, score) = map_next_observation_with(model, &window, grid, parallel)?;
    Ok(Forecast {
        date: None,
        open: open_price,
        predicted_close: open_price * (1.0 + best.frac_change()),
        actual_close: None,
        chosen_candidate: Some(best),
        candidate_log_likelihood: Some(score),
    })
}

/// Predicts the close of the day following `history`, given its open.
pub fn predict_close(
    model: &GaussianHmm,
    history: &[StockBar],
    open_price: f64,
    config: &PredictorConfig,
) -> Result<Forecast> {
    config.validate()?;
    let grid = build_grid(&config.grid)?;
    predict_on_grid(model, history, open_price, config.latency_days, &grid, config.parallel)
}

/// One forecast per day in `start_index..start_index + horizon`, each
/// conditioned on the true history and the day's true open.
pub fn rolling_forecast(
    model: &GaussianHmm,
    series: &SymbolSeries,
    start_index: usize,
    horizon: usize,
    config: &PredictorConfig,
) -> Result<Vec<Forecast>> {
    config.validate()?;
    check_range(series.len(), start_index, horizon)?;
    let grid = build_grid(&config.grid)?;
    (start_index..start_index + horizon)
        .map(|t| {
            let day = &series.bars[t];
            let mut f = predict_on_grid(
                model,
                &series.bars[..t],
                day.open,
                config.latency_days,
                &grid,
                config.parallel,
            )?;
            f.date = Some(day.date);
            f.actual_close = Some(day.close);
            Ok(f)
        })
        .collect()
}

pub(crate) fn check_range(len: usize, start_index: usize, horizon: usize) -> Result<()> {
    if start_index < 1 || start_index.checked_add(horizon).is_none_or(|end| end > len) {
        return Err(Error::InvalidArgument(format!(
            "forecast range {start_index}..{} is outside 1..={len}",
            start_index.saturating_add(horizon)
        )));
    }
    Ok(())
}
