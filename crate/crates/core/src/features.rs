//! Observation vectors derived from daily bars.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::StockBar;

/// Fractional intraday movement relative to the open:
/// `((close - open) / open, (high - open) / open, (open - low) / open)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationVector(pub [f64; 3]);

impl ObservationVector {
    pub const DIM: usize = 3;

    pub fn new(frac_change: f64, frac_high: f64, frac_low: f64) -> Self {
        ObservationVector([frac_change, frac_high, frac_low])
    }

    pub fn from_bar(bar: &StockBar) -> Self {
        let open = bar.open;
        ObservationVector::new(
            (bar.close - open) / open,
            (bar.high - open) / open,
            (open - bar.low) / open,
        )
    }

    pub fn frac_change(&self) -> f64 {
        self.0[0]
    }

    pub fn frac_high(&self) -> f64 {
        self.0[1]
    }

    pub fn frac_low(&self) -> f64 {
        self.0[2]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl AsRef<[f64]> for ObservationVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Day-over-day close difference paired with that day's volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaObservation(pub [f64; 2]);

impl DeltaObservation {
    pub fn new(close_delta: f64, volume: f64) -> Self {
        DeltaObservation([close_delta, volume])
    }

    pub fn close_delta(&self) -> f64 {
        self.0[0]
    }

    pub fn volume(&self) -> f64 {
        self.0[1]
    }
}

impl AsRef<[f64]> for DeltaObservation {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FractionalFeatures {
    pub observations: Vec<ObservationVector>,
    /// Bar index each observation was computed from.
    pub source_index: Vec<usize>,
    /// Bar indices whose features were not finite.
    pub dropped: Vec<usize>,
}

pub fn fractional_features(bars: &[StockBar]) -> FractionalFeatures {
    let mut out = FractionalFeatures::default();
    for (i, bar) in bars.iter().enumerate() {
        let obs = ObservationVector::from_bar(bar);
        if obs.is_finite() {
            out.observations.push(obs);
            out.source_index.push(i);
        } else {
            out.dropped.push(i);
        }
    }
    out
}

/// Element `i` holds `close[i + 1] - close[i]` and `volume[i + 1]`.
pub fn delta_features(bars: &[StockBar]) -> Result<Vec<DeltaObservation>> {
    if bars.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: bars.len(),
        });
    }
    Ok(bars
        .windows(2)
        .map(|w| DeltaObservation::new(w[1].close - w[0].close, w[1].volume as f64))
        .collect())
}
