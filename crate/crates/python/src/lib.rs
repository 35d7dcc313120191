//! Python bindings for `hmm_forecast`.

use std::path::PathBuf;

use chrono::NaiveDate;
use hmm_forecast::fluct_predictor::{self, FluctModel};
use hmm_forecast::hmm::{self, FitConfig, FitReport};
use hmm_forecast::map_predictor::{self, GridSpec, PredictorConfig};
use hmm_forecast::market_data::{self, StockBar};
use hmm_forecast::{evaluation, features, Error, ObservationVector};
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::MissingModel(_) => PyOSError::new_err(e.to_string()),
        Error::NotPositiveDefinite { .. } | Error::CovarianceNotPd | Error::InvalidModel(_) => {
            PyArithmeticError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>, what: &str) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err(format!("{what} rows have unequal lengths")));
    }
    Ok(DMatrix::from_row_iterator(n, m, rows.into_iter().flatten()))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn observation(t: (f64, f64, f64)) -> ObservationVector {
    ObservationVector::new(t.0, t.1, t.2)
}

fn triple(o: &ObservationVector) -> (f64, f64, f64) {
    (o.frac_change(), o.frac_high(), o.frac_low())
}

fn fit_config(max_iterations: usize, tolerance: f64, regularization_floor: f64, seed: u64) -> FitConfig {
    FitConfig {
        max_iterations,
        tolerance,
        regularization_floor,
        seed,
    }
}

/// Gaussian hidden Markov model with one full-covariance Gaussian per state.
#[pyclass(name = "GaussianHmm", module = "hmm_forecast", skip_from_py_object)]
#[derive(Clone)]
struct PyGaussianHmm {
    inner: hmm::GaussianHmm,
}

#[pymethods]
impl PyGaussianHmm {
    #[new]
    fn new(
        start_prob: Vec<f64>,
        transition: Vec<Vec<f64>>,
        means: Vec<Vec<f64>>,
        covariances: Vec<Vec<Vec<f64>>>,
    ) -> PyResult<Self> {
        let covariances = covariances
            .into_iter()
            .map(|c| matrix(c, "covariance"))
            .collect::<PyResult<Vec<_>>>()?;
        let inner = hmm::GaussianHmm::new(
            start_prob,
            matrix(transition, "transition")?,
            means.into_iter().map(DVector::from_vec).collect(),
            covariances,
        )
        .map_err(to_py)?;
        Ok(PyGaussianHmm { inner })
    }

    /// Fits a model to a sequence of observation vectors with Baum-Welch.
    #[staticmethod]
    #[pyo3(signature = (observations, n_states, max_iterations=10_000, tolerance=1e-3, regularization_floor=1e-6, seed=0))]
    fn fit(
        py: Python<'_>,
        observations: Vec<Vec<f64>>,
        n_states: usize,
        max_iterations: usize,
        tolerance: f64,
        regularization_floor: f64,
        seed: u64,
    ) -> PyResult<(Self, PyFitReport)> {
        let cfg = fit_config(max_iterations, tolerance, regularization_floor, seed);
        let (inner, report) = py
            .detach(|| hmm::fit_baum_welch(&observations, n_states, &cfg))
            .map_err(to_py)?;
        Ok((PyGaussianHmm { inner }, PyFitReport { inner: report }))
    }

    fn log_likelihood(&self, observations: Vec<Vec<f64>>) -> PyResult<f64> {
        hmm::forward_log_likelihood(&self.inner, &observations).map_err(to_py)
    }

    /// Draws `length` (states, observations) from the model.
    #[pyo3(signature = (length, seed=0))]
    fn sample(&self, length: usize, seed: u64) -> (Vec<usize>, Vec<Vec<f64>>) {
        self.inner.sample(length, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed))
    }

    fn to_json(&self) -> String {
        hmm::serialize(&self.inner, None)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyGaussianHmm {
            inner: hmm::deserialize(text).map_err(to_py)?.model,
        })
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn start_prob(&self) -> Vec<f64> {
        self.inner.start_prob().to_vec()
    }

    #[getter]
    fn transition(&self) -> Vec<Vec<f64>> {
        rows(self.inner.transition())
    }

    #[getter]
    fn means(&self) -> Vec<Vec<f64>> {
        self.inner.means().iter().map(|m| m.iter().copied().collect()).collect()
    }

    #[getter]
    fn covariances(&self) -> Vec<Vec<Vec<f64>>> {
        self.inner.covariances().iter().map(rows).collect()
    }

    fn __eq__(&self, other: PyRef<'_, Self>) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("GaussianHmm(n_states={}, dim={})", self.inner.n_states(), self.inner.dim())
    }
}

#[pyclass(name = "FitReport", module = "hmm_forecast", frozen, skip_from_py_object)]
struct PyFitReport {
    inner: FitReport,
}

#[pymethods]
impl PyFitReport {
    #[getter]
    fn iterations_run(&self) -> usize {
        self.inner.iterations_run
    }

    #[getter]
    fn log_likelihood_trace(&self) -> Vec<f64> {
        self.inner.log_likelihood_trace.clone()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    #[getter]
    fn final_log_likelihood(&self) -> f64 {
        self.inner.final_log_likelihood()
    }

    fn __repr__(&self) -> String {
        format!(
            "FitReport(iterations_run={}, converged={}, final_log_likelihood={})",
            self.inner.iterations_run,
            if self.inner.converged { "True" } else { "False" },
            self.inner.final_log_likelihood()
        )
    }
}

/// Date-ordered daily bars for one symbol, held column-wise on the Python side.
#[pyclass(name = "SymbolSeries", module = "hmm_forecast", skip_from_py_object)]
#[derive(Clone)]
struct PySymbolSeries {
    inner: market_data::SymbolSeries,
}

#[pymethods]
impl PySymbolSeries {
    #[new]
    #[pyo3(signature = (symbol, dates, open, high, low, close, volume=None))]
    fn new(
        symbol: String,
        dates: Vec<String>,
        open: Vec<f64>,
        high: Vec<f64>,
        low: Vec<f64>,
        close: Vec<f64>,
        volume: Option<Vec<u64>>,
    ) -> PyResult<Self> {
        let n = dates.len();
        let volume = volume.unwrap_or_else(|| vec![0; n]);
        if [open.len(), high.len(), low.len(), close.len(), volume.len()].iter().any(|&l| l != n) {
            return Err(PyValueError::new_err("all columns must have the same length"));
        }
        let mut bars = Vec::with_capacity(n);
        for i in 0..n {
            let date = NaiveDate::parse_from_str(&dates[i], "%Y-%m-%d")
                .map_err(|e| PyValueError::new_err(format!("date `{}`: {e}", dates[i])))?;
            bars.push(StockBar {
                date,
                open: open[i],
                high: high[i],
                low: low[i],
                close: close[i],
                volume: volume[i],
                prev_close: None,
            });
        }
        Ok(PySymbolSeries {
            inner: market_data::SymbolSeries::new(symbol, bars),
        })
    }

    #[getter]
    fn symbol(&self) -> String {
        self.inner.symbol.clone()
    }

    #[getter]
    fn dates(&self) -> Vec<String> {
        self.inner.bars.iter().map(|b| b.date.to_string()).collect()
    }

    #[getter]
    fn open(&self) -> Vec<f64> {
        self.inner.bars.iter().map(|b| b.open).collect()
    }

    #[getter]
    fn high(&self) -> Vec<f64> {
        self.inner.bars.iter().map(|b| b.high).collect()
    }

    #[getter]
    fn low(&self) -> Vec<f64> {
        self.inner.bars.iter().map(|b| b.low).collect()
    }

    #[getter]
    fn close(&self) -> Vec<f64> {
        self.inner.bars.iter().map(|b| b.close).collect()
    }

    #[getter]
    fn volume(&self) -> Vec<u64> {
        self.inner.bars.iter().map(|b| b.volume).collect()
    }

    /// Bars `start..stop` as a new series.
    fn slice(&self, start: usize, stop: usize) -> PyResult<Self> {
        if start > stop || stop > self.inner.len() {
            return Err(PyValueError::new_err(format!(
                "slice {start}..{stop} out of range for {} bars",
                self.inner.len()
            )));
        }
        Ok(PySymbolSeries {
            inner: market_data::SymbolSeries::new(self.inner.symbol.clone(), self.inner.bars[start..stop].to_vec()),
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("SymbolSeries(symbol={:?}, bars={})", self.inner.symbol, self.inner.len())
    }
}

#[pyclass(name = "Forecast", module = "hmm_forecast", frozen, skip_from_py_object)]
struct PyForecast {
    inner: hmm_forecast::Forecast,
}

#[pymethods]
impl PyForecast {
    #[getter]
    fn date(&self) -> Option<String> {
        self.inner.date.map(|d| d.to_string())
    }

    #[getter]
    fn open(&self) -> f64 {
        self.inner.open
    }

    #[getter]
    fn predicted_close(&self) -> f64 {
        self.inner.predicted_close
    }

    #[getter]
    fn actual_close(&self) -> Option<f64> {
        self.inner.actual_close
    }

    #[getter]
    fn frac_change(&self) -> Option<f64> {
        self.inner.chosen_candidate.map(|c| c.frac_change())
    }

    #[getter]
    fn chosen_candidate(&self) -> Option<(f64, f64, f64)> {
        self.inner.chosen_candidate.as_ref().map(triple)
    }

    #[getter]
    fn log_likelihood(&self) -> Option<f64> {
        self.inner.candidate_log_likelihood
    }

    fn __repr__(&self) -> String {
        format!(
            "Forecast(date={:?}, open={}, predicted_close={})",
            self.inner.date.map(|d| d.to_string()),
            self.inner.open,
            self.inner.predicted_close
        )
    }
}

fn forecasts(v: Vec<hmm_forecast::Forecast>) -> Vec<PyForecast> {
    v.into_iter().map(|inner| PyForecast { inner }).collect()
}

/// Successive-fluctuation baseline: an HMM over (close delta, volume) with a
/// filtered state posterior.
#[pyclass(name = "FluctModel", module = "hmm_forecast", skip_from_py_object)]
#[derive(Clone)]
struct PyFluctModel {
    inner: FluctModel,
}

#[pymethods]
impl PyFluctModel {
    #[staticmethod]
    #[pyo3(signature = (series, n_states=4, max_iterations=10_000, tolerance=1e-3, regularization_floor=1e-6, seed=0))]
    fn fit(
        py: Python<'_>,
        series: PyRef<'_, PySymbolSeries>,
        n_states: usize,
        max_iterations: usize,
        tolerance: f64,
        regularization_floor: f64,
        seed: u64,
    ) -> PyResult<(Self, PyFitReport)> {
        let cfg = fit_config(max_iterations, tolerance, regularization_floor, seed);
        let s = series.inner.clone();
        let (inner, report) = py.detach(|| fluct_predictor::fit_fluct(&s, n_states, &cfg)).map_err(to_py)?;
        Ok((PyFluctModel { inner }, PyFitReport { inner: report }))
    }

    /// Wraps a fitted two-dimensional model, filtering over `history`.
    #[staticmethod]
    fn from_hmm(model: PyRef<'_, PyGaussianHmm>, history: PyRef<'_, PySymbolSeries>) -> PyResult<Self> {
        let inner = FluctModel::from_hmm(model.inner.clone(), &history.inner.bars).map_err(to_py)?;
        Ok(PyFluctModel { inner })
    }

    fn predict_next_delta(&self) -> f64 {
        self.inner.predict_next_delta()
    }

    #[pyo3(signature = (prev_close=None))]
    fn predict_close(&self, prev_close: Option<f64>) -> f64 {
        self.inner.predict_close(prev_close.unwrap_or(self.inner.last_close))
    }

    fn rolling_forecast(&self, series: PyRef<'_, PySymbolSeries>, start: usize, horizon: usize) -> PyResult<Vec<PyForecast>> {
        fluct_predictor::rolling_forecast_fluct(&self.inner, &series.inner, start, horizon)
            .map(forecasts)
            .map_err(to_py)
    }

    #[getter]
    fn hmm(&self) -> PyGaussianHmm {
        PyGaussianHmm {
            inner: self.inner.hmm.clone(),
        }
    }

    #[getter]
    fn posterior(&self) -> Vec<f64> {
        self.inner.posterior.clone()
    }

    #[getter]
    fn last_close(&self) -> f64 {
        self.inner.last_close
    }
}

/// Loads a per-symbol CSV; returns the series and the number of skipped rows.
#[pyfunction]
fn load_csv(path: PathBuf, symbol: &str) -> PyResult<(PySymbolSeries, usize)> {
    let load = market_data::load_csv(&path, symbol).map_err(to_py)?;
    Ok((PySymbolSeries { inner: load.series }, load.skipped))
}

/// Loads a JSON archive (file or directory); returns one series per symbol
/// and the number of skipped records.
#[pyfunction]
fn load_json_archive(path: PathBuf) -> PyResult<(Vec<PySymbolSeries>, usize)> {
    let load = market_data::load_json_archive(&path).map_err(to_py)?;
    let series = load.series.into_iter().map(|inner| PySymbolSeries { inner }).collect();
    Ok((series, load.skipped))
}

#[pyfunction]
fn clean(series: PyRef<'_, PySymbolSeries>) -> PySymbolSeries {
    PySymbolSeries {
        inner: market_data::clean(&series.inner),
    }
}

#[pyfunction]
fn chronological_split(series: PyRef<'_, PySymbolSeries>, train_fraction: f64) -> PyResult<(PySymbolSeries, PySymbolSeries)> {
    let split = market_data::chronological_split(&series.inner, train_fraction).map_err(to_py)?;
    Ok((PySymbolSeries { inner: split.train }, PySymbolSeries { inner: split.test }))
}

/// (frac_change, frac_high, frac_low) per bar with a finite feature vector.
#[pyfunction]
fn fractional_features(series: PyRef<'_, PySymbolSeries>) -> Vec<(f64, f64, f64)> {
    features::fractional_features(&series.inner.bars)
        .observations
        .iter()
        .map(triple)
        .collect()
}

/// (close delta, volume) for each consecutive pair of bars.
#[pyfunction]
fn delta_features(series: PyRef<'_, PySymbolSeries>) -> PyResult<Vec<(f64, f64)>> {
    let deltas = features::delta_features(&series.inner.bars).map_err(to_py)?;
    Ok(deltas.iter().map(|d| (d.close_delta(), d.volume())).collect())
}

#[allow(clippy::too_many_arguments)]
fn grid_spec(
    change_min: f64,
    change_max: f64,
    change_steps: usize,
    high_min: f64,
    high_max: f64,
    high_steps: usize,
    low_min: f64,
    low_max: f64,
    low_steps: usize,
) -> GridSpec {
    GridSpec {
        change_min,
        change_max,
        change_steps,
        high_min,
        high_max,
        high_steps,
        low_min,
        low_max,
        low_steps,
    }
}

#[pyfunction]
#[pyo3(signature = (change_min=-0.1, change_max=0.1, change_steps=50, high_min=0.0, high_max=0.1, high_steps=10, low_min=0.0, low_max=0.1, low_steps=10))]
#[allow(clippy::too_many_arguments)]
fn build_grid(
    change_min: f64,
    change_max: f64,
    change_steps: usize,
    high_min: f64,
    high_max: f64,
    high_steps: usize,
    low_min: f64,
    low_max: f64,
    low_steps: usize,
) -> PyResult<Vec<(f64, f64, f64)>> {
    let spec = grid_spec(change_min, change_max, change_steps, high_min, high_max, high_steps, low_min, low_max, low_steps);
    let grid = map_predictor::build_grid(&spec).map_err(to_py)?;
    Ok(grid.iter().map(triple).collect())
}

/// Grid candidate maximizing the joint likelihood with `window`, and its score.
#[pyfunction]
#[pyo3(signature = (model, window, grid=None, parallel=false))]
fn map_next_observation(
    py: Python<'_>,
    model: PyRef<'_, PyGaussianHmm>,
    window: Vec<(f64, f64, f64)>,
    grid: Option<Vec<(f64, f64, f64)>>,
    parallel: bool,
) -> PyResult<((f64, f64, f64), f64)> {
    let grid: Vec<ObservationVector> = match grid {
        Some(g) => g.into_iter().map(observation).collect(),
        None => map_predictor::build_grid(&GridSpec::default()).map_err(to_py)?,
    };
    let window: Vec<ObservationVector> = window.into_iter().map(observation).collect();
    let m = model.inner.clone();
    let (best, score) = py
        .detach(|| map_predictor::map_next_observation_with(&m, &window, &grid, parallel))
        .map_err(to_py)?;
    Ok((triple(&best), score))
}

fn predictor_config(latency: usize, grid_steps: Option<(usize, usize, usize)>, parallel: bool) -> PredictorConfig {
    let mut grid = GridSpec::default();
    if let Some((c, h, l)) = grid_steps {
        grid.change_steps = c;
        grid.high_steps = h;
        grid.low_steps = l;
    }
    PredictorConfig {
        latency_days: latency,
        grid,
        parallel,
    }
}

/// MAP forecast of the close of the day after `history`, given its open.
#[pyfunction]
#[pyo3(signature = (model, history, open_price, latency=30, grid_steps=None, parallel=false))]
fn predict_close(
    py: Python<'_>,
    model: PyRef<'_, PyGaussianHmm>,
    history: PyRef<'_, PySymbolSeries>,
    open_price: f64,
    latency: usize,
    grid_steps: Option<(usize, usize, usize)>,
    parallel: bool,
) -> PyResult<PyForecast> {
    let cfg = predictor_config(latency, grid_steps, parallel);
    let (m, bars) = (model.inner.clone(), history.inner.bars.clone());
    let inner = py
        .detach(|| map_predictor::predict_close(&m, &bars, open_price, &cfg))
        .map_err(to_py)?;
    Ok(PyForecast { inner })
}

/// MAP forecasts for days `start..start + horizon` of `series`.
#[pyfunction]
#[pyo3(signature = (model, series, start, horizon, latency=30, grid_steps=None, parallel=false))]
#[allow(clippy::too_many_arguments)]
fn rolling_forecast(
    py: Python<'_>,
    model: PyRef<'_, PyGaussianHmm>,
    series: PyRef<'_, PySymbolSeries>,
    start: usize,
    horizon: usize,
    latency: usize,
    grid_steps: Option<(usize, usize, usize)>,
    parallel: bool,
) -> PyResult<Vec<PyForecast>> {
    let cfg = predictor_config(latency, grid_steps, parallel);
    let (m, s) = (model.inner.clone(), series.inner.clone());
    py.detach(|| map_predictor::rolling_forecast(&m, &s, start, horizon, &cfg))
        .map(forecasts)
        .map_err(to_py)
}

#[pyfunction]
fn mae(actual: Vec<f64>, predicted: Vec<f64>) -> PyResult<f64> {
    evaluation::mae(&actual, &predicted).map_err(to_py)
}

#[pyfunction]
fn rmse(actual: Vec<f64>, predicted: Vec<f64>) -> PyResult<f64> {
    evaluation::rmse(&actual, &predicted).map_err(to_py)
}

#[pyfunction]
fn mape(actual: Vec<f64>, predicted: Vec<f64>) -> PyResult<f64> {
    evaluation::mape(&actual, &predicted).map_err(to_py)
}

#[pymodule]
#[pyo3(name = "hmm_forecast")]
fn hmm_forecast_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGaussianHmm>()?;
    m.add_class::<PyFitReport>()?;
    m.add_class::<PySymbolSeries>()?;
    m.add_class::<PyForecast>()?;
    m.add_class::<PyFluctModel>()?;
    m.add_function(wrap_pyfunction!(load_csv, m)?)?;
    m.add_function(wrap_pyfunction!(load_json_archive, m)?)?;
    m.add_function(wrap_pyfunction!(clean, m)?)?;
    m.add_function(wrap_pyfunction!(chronological_split, m)?)?;
    m.add_function(wrap_pyfunction!(fractional_features, m)?)?;
    m.add_function(wrap_pyfunction!(delta_features, m)?)?;
    m.add_function(wrap_pyfunction!(build_grid, m)?)?;
    m.add_function(wrap_pyfunction!(map_next_observation, m)?)?;
    m.add_function(wrap_pyfunction!(predict_close, m)?)?;
    m.add_function(wrap_pyfunction!(rolling_forecast, m)?)?;
    m.add_function(wrap_pyfunction!(mae, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(mape, m)?)?;
    Ok(())
}
