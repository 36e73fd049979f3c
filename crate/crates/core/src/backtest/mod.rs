//! VaR backtests: violation bookkeeping, unconditional coverage,
//! Markov-chain and regression independence tests, group splitting, the
//! ex-post realized-covariance benchmark and the campaign runner.

mod campaign;
mod coverage;
mod independence;
mod pnl;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::LinalgError;
use crate::var::VarError;
use crate::EpochMillis;

pub use campaign::{
    evaluate_cell, generate_portfolio, run_backtest_campaign, run_synthetic_campaign, violation_series, CampaignConfig,
    CampaignReport, CellReport, GridSpec, ModelOutcome, ModelSummary, PortfolioSpec, QuoteHistory, SampleRecord,
};
pub use coverage::binomial_coverage;
pub use independence::{
    christoffersen_lr, regression_independence_f, split_groups, weighted_average, FTestReport, LrReport, MissingCell,
};
pub use pnl::{expost_realized_covariance, realized_pnl, RealizedPnl};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BacktestError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("insufficient data: need {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("empty sample set")]
    Empty,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Var(#[from] VarError),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, BacktestError>;

/// Estimated return quantiles against realized returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationSeries {
    pub confidence: f64,
    pub timestamps: Vec<EpochMillis>,
    pub var_estimates: Vec<f64>,
    pub realized: Vec<f64>,
    /// `realized <= var_estimate`, i.e. the loss reached the VaR.
    pub indicators: Vec<bool>,
}

impl ViolationSeries {
    pub fn new(confidence: f64, timestamps: Vec<EpochMillis>, var_estimates: Vec<f64>, realized: Vec<f64>) -> Result<Self> {
        if timestamps.len() != var_estimates.len() || timestamps.len() != realized.len() {
            return Err(BacktestError::Domain("parallel arrays differ in length".into()));
        }
        let indicators = realized.iter().zip(&var_estimates).map(|(r, v)| r <= v).collect();
        Ok(ViolationSeries {
            confidence,
            timestamps,
            var_estimates,
            realized,
            indicators,
        })
    }

    pub fn len(&self) -> usize {
        self.indicators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indicators.is_empty()
    }

    pub fn violations(&self) -> usize {
        self.indicators.iter().filter(|&&i| i).count()
    }

    pub fn expected_violations(&self) -> f64 {
        self.len() as f64 * (1.0 - self.confidence)
    }

    pub fn subset(&self, idx: &[usize]) -> ViolationSeries {
        ViolationSeries {
            confidence: self.confidence,
            timestamps: idx.iter().map(|&i| self.timestamps[i]).collect(),
            var_estimates: idx.iter().map(|&i| self.var_estimates[i]).collect(),
            realized: idx.iter().map(|&i| self.realized[i]).collect(),
            indicators: idx.iter().map(|&i| self.indicators[i]).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn violation_definition() {
        let s = ViolationSeries::new(0.95, vec![0, 1, 2], vec![-0.02, -0.02, -0.02], vec![-0.03, -0.02, 0.01]).unwrap();
        assert_eq!(s.indicators, vec![true, true, false]);
        assert_eq!(s.violations(), 2);
        assert!(ViolationSeries::new(0.95, vec![0], vec![], vec![]).is_err());
    }
}
