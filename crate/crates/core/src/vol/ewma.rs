//! Exponentially weighted moving average variance and covariance.

use serde::{Deserialize, Serialize};

use super::{bars_per_day, CovarianceForecast, Model, Result, VolError};
use crate::market::{align, ReturnSeries};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EwmaParams {
    pub lambda: f64,
    pub lookback_days: u32,
    pub bar_interval_minutes: u32,
}

impl Default for EwmaParams {
    fn default() -> Self {
        EwmaParams {
            lambda: 0.94,
            lookback_days: 5,
            bar_interval_minutes: 30,
        }
    }
}

impl EwmaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(VolError::Contract(format!("lambda {} outside (0, 1)", self.lambda)));
        }
        if self.bar_interval_minutes == 0 || 1440 % self.bar_interval_minutes != 0 {
            return Err(VolError::Contract("bar interval must divide a day".into()));
        }
        Ok(())
    }

    /// Returns expected in a full lookback window (240 for the defaults).
    pub fn lookback_returns(&self) -> usize {
        (self.lookback_days * 1440 / self.bar_interval_minutes) as usize
    }
}

/// One-bar EWMA covariance of two aligned return vectors.
///
/// The recursion is seeded with the sample covariance of the inputs and
/// then run over every product `a_k * b_k`.
pub fn ewma_raw(a: &[f64], b: &[f64], lambda: f64) -> Result<f64> {
    let n = a.len().min(b.len());
    if n < 2 {
        return Err(VolError::InsufficientData { needed: 2, got: n });
    }
    let (a, b) = (&a[..n], &b[..n]);
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let seed = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1) as f64;
    Ok(a.iter()
        .zip(b)
        .fold(seed, |s, (x, y)| lambda * s + (1.0 - lambda) * x * y))
}

/// EWMA covariance term of `r1` and `r2` scaled to `horizon_days`.
pub fn ewma_forecast(r1: &ReturnSeries, r2: &ReturnSeries, lambda: f64, horizon_days: f64) -> Result<f64> {
    if r1.interval_minutes != r2.interval_minutes {
        return Err(VolError::Contract("series sampled at different intervals".into()));
    }
    let (_, a, b) = align(r1, r2);
    Ok(ewma_raw(&a, &b, lambda)? * bars_per_day(r1.interval_minutes) * horizon_days)
}

/// Fills the symmetric matrix with one recursion per unordered pair.
/// `syms[i]` labels `returns[i]`.
pub fn ewma_covariance_matrix(
    syms: &[String],
    returns: &[ReturnSeries],
    params: &EwmaParams,
    horizon_days: f64,
) -> Result<CovarianceForecast> {
    params.validate()?;
    if syms.len() != returns.len() {
        return Err(VolError::Contract("one return series per sym".into()));
    }
    let n = syms.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let v = ewma_forecast(&returns[i], &returns[j], params.lambda, horizon_days)?;
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    CovarianceForecast::new(syms.to_vec(), m, horizon_days, Model::Ewma)
}
