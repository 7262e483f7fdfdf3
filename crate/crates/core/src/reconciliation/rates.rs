//! Coding rate selection by error rate.

use serde::{Deserialize, Serialize};

use crate::decimal;
use crate::error::{Error, Result};

/// Piecewise-constant map from QBER to code rate. Band `i` covers error
/// rates up to and including `max_qber[i]`; above the last band no code is
/// usable and the rate is 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    #[serde(with = "decimal::vec")]
    pub max_qber: Vec<f64>,
    #[serde(with = "decimal::vec")]
    pub rate: Vec<f64>,
}

impl Default for RateTable {
    fn default() -> Self {
        RateTable {
            max_qber: vec![0.010, 0.020, 0.030, 0.040, 0.053, 0.062, 0.075, 0.090, 0.110],
            rate: vec![0.85, 0.78, 0.72, 0.66, 0.56, 0.50, 0.44, 0.38, 0.30],
        }
    }
}

impl RateTable {
    pub fn validate(&self) -> Result<()> {
        if self.max_qber.is_empty() || self.max_qber.len() != self.rate.len() {
            return Err(Error::InvalidParameter("rate table needs one rate per band".into()));
        }
        if self.max_qber.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter("rate table bands must increase".into()));
        }
        if self.rate.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidParameter("rates must not increase with QBER".into()));
        }
        if self.rate.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
            return Err(Error::InvalidParameter("rates must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Largest error rate the table can correct.
    pub fn max_correctable(&self) -> f64 {
        *self.max_qber.last().expect("validated table")
    }

    pub fn rate_for(&self, qber: f64) -> f64 {
        self.max_qber
            .iter()
            .position(|&b| qber <= b)
            .map_or(0.0, |i| self.rate[i])
    }
}

/// `eta(qber)` from the default table.
pub fn coding_rate_for(qber: f64) -> f64 {
    RateTable::default().rate_for(qber)
}
