//! Portfolio bookkeeping, delta-gamma-theta mapping, Cornish-Fisher
//! transformation and the end-to-end VaR estimator.

mod book;
mod engine;
mod mapping;
mod moments;
mod source;

use thiserror::Error;

use crate::market::MarketError;
use crate::vol::VolError;

pub use book::{PortfolioBook, Position};
pub use engine::{
    estimate_var, estimate_var_with_forecast, forecast_covariance, transform, EngineConfig, LatencyReport,
    Transformation, VaRResult, VarRequest,
};
pub use mapping::{
    adjust_greeks, compress_by_underlying, extract_indices, map_portfolio, MappedCoefficients, PositionCoefficients,
    DEGENERATE_RATIO,
};
pub use moments::{central_moments, cornish_fisher_quantile, cornish_fisher_z, validity_check, Moments};
pub use source::{MarkHistory, QuoteSource, SourceError, TwapSource};
pub use crate::vol::Model;

/// Where in the workflow an error arose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Request,
    Inference,
    Mapping,
    Transformation,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VarError {
    #[error("invalid request: {0}")]
    Validation(String),
    #[error("invalid instrument: {0}")]
    Instrument(#[from] MarketError),
    #[error("unknown portfolio {0:?}")]
    UnknownPortfolio(String),
    #[error("unknown position {instrument:?} in portfolio {pid:?}")]
    UnknownPosition { pid: String, instrument: String },
    #[error("degenerate portfolio: {0}")]
    DegeneratePortfolio(String),
    #[error("stale or missing market data for {instrument}")]
    StaleData { instrument: String },
    #[error("inference failed: {0}")]
    Inference(#[from] VolError),
    #[error("inference data unavailable: {0}")]
    DataSource(#[from] SourceError),
    #[error("invalid moments: {0}")]
    InvalidMoments(String),
}

impl VarError {
    pub fn stage(&self) -> Stage {
        match self {
            VarError::Validation(_)
            | VarError::Instrument(_)
            | VarError::UnknownPortfolio(_)
            | VarError::UnknownPosition { .. } => Stage::Request,
            VarError::Inference(_) | VarError::DataSource(_) => Stage::Inference,
            VarError::DegeneratePortfolio(_) | VarError::StaleData { .. } => Stage::Mapping,
            VarError::InvalidMoments(_) => Stage::Transformation,
        }
    }
}

pub type Result<T> = std::result::Result<T, VarError>;
