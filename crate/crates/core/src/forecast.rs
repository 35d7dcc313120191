use std::fmt;
use std::io::Write;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::features::ObservationVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MapFractional,
    SuccessiveFluctuation,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::MapFractional => "map_fractional",
            Method::SuccessiveFluctuation => "successive_fluctuation",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "map_fractional" | "map" => Ok(Method::MapFractional),
            "successive_fluctuation" | "fluct" => Ok(Method::SuccessiveFluctuation),
            other => Err(Error::InvalidArgument(format!(
                "unknown method `{other}` (expected map_fractional or successive_fluctuation)"
            ))),
        }
    }
}

/// One predicted closing price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub date: Option<NaiveDate>,
    pub open: f64,
    pub predicted_close: f64,
    pub actual_close: Option<f64>,
    /// Winning grid candidate; absent for the fluctuation baseline.
    pub chosen_candidate: Option<ObservationVector>,
    pub candidate_log_likelihood: Option<f64>,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes `date,open,actual_close,predicted_close,frac_change,log_likelihood`,
/// followed by a `method` column when `method` is given.
pub fn write_forecast_csv<W: Write>(
    forecasts: &[Forecast],
    method: Option<Method>,
    writer: W,
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        "date",
        "open",
        "actual_close",
        "predicted_close",
        "frac_change",
        "log_likelihood",
    ];
    if method.is_some() {
        header.push("method");
    }
    w.write_record(&header)?;
    for f in forecasts {
        let mut row = vec![
            opt(f.date),
            f.open.to_string(),
            opt(f.actual_close),
            f.predicted_close.to_string(),
            opt(f.chosen_candidate.map(|c| c.frac_change())),
            opt(f.candidate_log_likelihood),
        ];
        if let Some(m) = method {
            row.push(m.as_str().to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()
}

/// Writes `date,actual,predicted` for external plotting.
pub fn write_plot_data<W: Write>(forecasts: &[Forecast], writer: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "actual", "predicted"])?;
    for f in forecasts {
        w.write_record([opt(f.date), opt(f.actual_close), f.predicted_close.to_string()])?;
    }
    w.flush()
}
