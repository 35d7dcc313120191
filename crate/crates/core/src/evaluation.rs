//! Error metrics and backtest reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{Forecast, Method};

fn check_pairs(actual: &[f64], predicted: &[f64]) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} actual vs {} predicted",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::InvalidArgument("metrics need at least one pair".into()));
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pairs(actual, predicted)?;
    let sum: f64 = actual.iter().zip(predicted).map(|(y, p)| (p - y).abs()).sum();
    Ok(sum / actual.len() as f64)
}

/// Root mean squared error.
pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pairs(actual, predicted)?;
    let sum: f64 = actual.iter().zip(predicted).map(|(y, p)| (p - y) * (p - y)).sum();
    Ok((sum / actual.len() as f64).sqrt())
}

/// Mean absolute percentage error, in percent.
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pairs(actual, predicted)?;
    let zeros: Vec<usize> = actual
        .iter()
        .enumerate()
        .filter(|(_, y)| **y == 0.0)
        .map(|(i, _)| i)
        .collect();
    if !zeros.is_empty() {
        return Err(Error::ZeroActual(zeros));
    }
    let sum: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(y, p)| (p - y).abs() / y.abs())
        .sum();
    Ok(sum / actual.len() as f64 * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub symbol: String,
    pub method: Method,
    pub forecasts: Vec<Forecast>,
    pub mae: f64,
    pub rmse: f64,
    pub mape: f64,
    pub n_days: usize,
}

/// Scores every forecast that carries an actual close.
pub fn build_report(forecasts: Vec<Forecast>, symbol: &str, method: Method) -> Result<BacktestReport> {
    let (actual, predicted): (Vec<f64>, Vec<f64>) = forecasts
        .iter()
        .filter_map(|f| f.actual_close.map(|a| (a, f.predicted_close)))
        .unzip();
    if actual.is_empty() {
        return Err(Error::NoEvaluableForecasts);
    }
    Ok(BacktestReport {
        symbol: symbol.to_string(),
        method,
        mae: mae(&actual, &predicted)?,
        rmse: rmse(&actual, &predicted)?,
        mape: mape(&actual, &predicted)?,
        n_days: actual.len(),
        forecasts,
    })
}

impl BacktestReport {
    /// `key = value` summary, one metric per line.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let first = self.forecasts.iter().find_map(|f| f.date);
        let last = self.forecasts.iter().rev().find_map(|f| f.date);
        let _ = writeln!(s, "symbol = {}", self.symbol);
        let _ = writeln!(s, "method = {}", self.method);
        let _ = writeln!(s, "n_days = {}", self.n_days);
        if let (Some(a), Some(b)) = (first, last) {
            let _ = writeln!(s, "first_date = {a}");
            let _ = writeln!(s, "last_date = {b}");
        }
        let _ = writeln!(s, "mae = {}", self.mae);
        let _ = writeln!(s, "rmse = {}", self.rmse);
        let _ = writeln!(s, "mape = {}", self.mape);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        assert_eq!(mae(&[100.0, 200.0], &[101.0, 198.0]).unwrap(), 1.5);
        assert_eq!(mae(&[195.5], &[195.0]).unwrap(), 0.5);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(rmse(&[1.0], &[3.0]).unwrap(), 2.0);
        assert!((mape(&[100.0], &[95.0]).unwrap() - 5.0).abs() < 1e-12);
        assert!((mape(&[200.0, 100.0], &[202.0, 99.0]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions() {
        let y = [3.0, 4.5, 100.0];
        assert_eq!(mae(&y, &y).unwrap(), 0.0);
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);
        assert_eq!(mape(&y, &y).unwrap(), 0.0);
    }

    #[test]
    fn argument_errors() {
        assert!(matches!(mae(&[], &[]), Err(Error::InvalidArgument(_))));
        assert!(matches!(rmse(&[1.0], &[1.0, 2.0]), Err(Error::InvalidArgument(_))));
        match mape(&[1.0, 0.0, 2.0, 0.0], &[1.0; 4]) {
            Err(Error::ZeroActual(idx)) => assert_eq!(idx, vec![1, 3]),
            other => panic!("{other:?}"),
        }
    }

    fn forecast(actual: Option<f64>, predicted: f64) -> Forecast {
        Forecast {
            date: None,
            open: predicted,
            predicted_close: predicted,
            actual_close: actual,
            chosen_candidate: None,
            candidate_log_likelihood: None,
        }
    }

    #[test]
    fn report_skips_missing_actuals() {
        let r = build_report(
            vec![forecast(Some(100.0), 95.0), forecast(None, 1.0)],
            "ACI",
            Method::MapFractional,
        )
        .unwrap();
        assert_eq!(r.n_days, 1);
        assert_eq!(r.mae, 5.0);
        assert_eq!(r.forecasts.len(), 2);
        assert!(r.summary().contains("mape = 5"));
        assert!(matches!(
            build_report(vec![forecast(None, 1.0)], "ACI", Method::MapFractional),
            Err(Error::NoEvaluableForecasts)
        ));
    }
}
