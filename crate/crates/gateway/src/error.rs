use thiserror::Error;

use cryptovar_core::var::{Stage, VarError};
use cryptovar_tick::TickError;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error(transparent)]
    Var(#[from] VarError),
    #[error("malformed request: {0}")]
    BadRequest(String),
    #[error("no market data has been received yet")]
    NoMarketData,
    #[error(transparent)]
    Tick(#[from] TickError),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> u16 {
        match self {
            ApiError::BadRequest(_) => 400,
            ApiError::Var(e) => match e {
                VarError::Validation(_) | VarError::Instrument(_) => 400,
                VarError::UnknownPortfolio(_) | VarError::UnknownPosition { .. } => 404,
                VarError::DegeneratePortfolio(_) | VarError::InvalidMoments(_) => 409,
                VarError::StaleData { .. } | VarError::DataSource(_) | VarError::Inference(_) => 503,
            },
            ApiError::NoMarketData => 503,
            ApiError::Tick(TickError::LogRejected(_)) => 503,
            ApiError::Tick(TickError::NotElapsed { .. }) => 409,
            ApiError::Tick(_) | ApiError::Internal(_) => 500,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ApiError::BadRequest(_) => "bad_request",
            ApiError::Var(e) => match e {
                VarError::Validation(_) => "validation",
                VarError::Instrument(_) => "invalid_instrument",
                VarError::UnknownPortfolio(_) => "unknown_portfolio",
                VarError::UnknownPosition { .. } => "unknown_position",
                VarError::DegeneratePortfolio(_) => "degenerate_portfolio",
                VarError::InvalidMoments(_) => "invalid_moments",
                VarError::StaleData { .. } => "stale_market_data",
                VarError::DataSource(_) => "data_unavailable",
                VarError::Inference(_) => "inference_failed",
            },
            ApiError::NoMarketData => "stale_market_data",
            ApiError::Tick(TickError::LogRejected(_)) => "log_rejected",
            ApiError::Tick(TickError::NotElapsed { .. }) => "not_elapsed",
            ApiError::Tick(_) => "storage",
            ApiError::Internal(_) => "internal",
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            ApiError::Var(e) => Some(e.stage()),
            _ => None,
        }
    }
}
