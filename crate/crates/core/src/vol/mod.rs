//! Covariance forecasts for the underlying indices.
//!
//! Three estimators produce a horizon-scaled [`CovarianceForecast`]:
//! EWMA on 30-min returns, GARCH(1,1) with DCC correlation on the same
//! returns, and HAR-DRD which forecasts 12-hour realized variances (LHARQ)
//! and realized correlations separately and recombines them.

mod dcc;
mod ewma;
mod garch;
mod har;
mod optim;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, LinalgError};
use crate::market::MarketError;

pub use dcc::{dcc_forecast, fit_dcc, garch_dcc_covariance, DccParams};
pub use ewma::{ewma_covariance_matrix, ewma_forecast, ewma_raw, EwmaParams};
pub use garch::{fit_garch11, garch_log_likelihood, GarchDist, GarchParams};
pub use har::{
    fit_har_corr, fit_lharq, har_forecast_covariance, har_forecast_from_realized, HarConfig,
    HarCorrFit, LharqFit, HAR_CORR_REGRESSORS, LHARQ_REGRESSORS,
};
pub use optim::{nelder_mead, NelderMeadResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VolError {
    #[error("insufficient data: need {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("degenerate series {0}: zero variance")]
    Degenerate(String),
    #[error("{sym}: optimizer did not converge after {iterations} iterations (best log-likelihood {best_log_likelihood})")]
    NonConvergence {
        sym: String,
        iterations: usize,
        best_log_likelihood: f64,
        best: Box<GarchParams>,
    },
    #[error("DCC optimizer did not converge after {iterations} iterations")]
    DccNonConvergence { iterations: usize, best: Box<DccParams> },
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, VolError>;

/// Inference model used to forecast the covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "UPPERCASE")]
pub enum Model {
    Ewma,
    Garch,
    #[default]
    Har,
    /// Realized covariance over the forecast window itself; a benchmark
    /// for backtests, not a forecaster.
    #[serde(rename = "EXPOST")]
    ExPost,
}

impl Model {
    pub const ALL: [Model; 3] = [Model::Ewma, Model::Garch, Model::Har];
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Ewma => "EWMA",
            Model::Garch => "GARCH",
            Model::Har => "HAR",
            Model::ExPost => "EXPOST",
        })
    }
}

impl FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "EWMA" => Ok(Model::Ewma),
            "GARCH" | "DCC-GARCH" | "DCC" => Ok(Model::Garch),
            "HAR" | "HAR-DRD" => Ok(Model::Har),
            _ => Err(format!("unknown model {s:?} (expected EWMA, GARCH or HAR)")),
        }
    }
}

/// Covariance of the underlying index log returns over `horizon_days`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceForecast {
    /// Underlyings in matrix order, e.g. `["BTC", "ETH"]`.
    pub syms: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    pub horizon_days: f64,
    pub model: Model,
    pub psd_adjusted: bool,
}

impl CovarianceForecast {
    /// Builds a forecast and routes the matrix through [`linalg::ensure_psd`].
    pub fn new(syms: Vec<String>, matrix: Vec<Vec<f64>>, horizon_days: f64, model: Model) -> Result<Self> {
        if matrix.len() != syms.len() || matrix.iter().any(|r| r.len() != syms.len()) {
            return Err(VolError::Contract(format!(
                "{} syms for a {}x{} matrix",
                syms.len(),
                matrix.len(),
                matrix.first().map_or(0, |r| r.len())
            )));
        }
        let (matrix, psd_adjusted) = linalg::ensure_psd(&matrix)?;
        Ok(CovarianceForecast {
            syms,
            matrix,
            horizon_days,
            model,
            psd_adjusted,
        })
    }

    pub fn dim(&self) -> usize {
        self.syms.len()
    }

    pub fn index_of(&self, sym: &str) -> Option<usize> {
        self.syms.iter().position(|s| s == sym)
    }

    pub fn correlation(&self, i: usize, j: usize) -> Option<f64> {
        let d = self.matrix[i][i] * self.matrix[j][j];
        (d > 0.0).then(|| self.matrix[i][j] / d.sqrt())
    }

    /// Sub-matrix for `syms`, in that order.
    pub fn restrict(&self, syms: &[String]) -> Option<CovarianceForecast> {
        let idx: Option<Vec<usize>> = syms.iter().map(|s| self.index_of(s)).collect();
        let idx = idx?;
        Some(CovarianceForecast {
            syms: syms.to_vec(),
            matrix: idx.iter().map(|&i| idx.iter().map(|&j| self.matrix[i][j]).collect()).collect(),
            horizon_days: self.horizon_days,
            model: self.model,
            psd_adjusted: self.psd_adjusted,
        })
    }
}

/// Number of `interval_minutes` bars in a day, the factor that scales a
/// one-bar variance to one day.
pub fn bars_per_day(interval_minutes: u32) -> f64 {
    1440.0 / interval_minutes as f64
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
