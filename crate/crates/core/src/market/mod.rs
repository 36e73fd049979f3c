//! Instruments, ticks, minute TWAP bars, log returns and realized measures.
//!
//! Everything here is pure and stateless. Timestamps are UTC epoch
//! milliseconds; "day d" is the 24h window `[d 00:00, d+1 00:00)` UTC.

mod instrument;
mod quote;
mod realized;
mod returns;
mod tick;
mod twap;

use std::sync::Arc;

use thiserror::Error;

use crate::EpochMillis;

pub use instrument::{index_symbol, Instrument, InstrumentKind, OptionType};
pub use quote::{IndexQuote, ProductQuote};
pub use realized::{
    realized_correlation, realized_covariance, realized_pair_windows, realized_quarticity,
    realized_variance, realized_windows, RealizedPairWindow, RealizedWindow,
};
pub use returns::{align, align_all, log_returns, ReturnSeries};
pub use tick::{iso8601, Tick};
pub use twap::{aggregate_twap, minute_of, TwapBar};

/// Interned symbol. Bars and quotes are cloned a lot; the name is shared.
pub type Symbol = Arc<str>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("cannot parse instrument id {input:?}: segment {segment:?} {reason}")]
    Parse {
        input: String,
        segment: String,
        reason: String,
    },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("non-positive price {price} at {time}")]
    Domain { time: EpochMillis, price: f64 },
    #[error("insufficient data: need {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("degenerate correlation: a leg has zero realized variance")]
    DegenerateCorrelation,
}

pub type Result<T> = std::result::Result<T, MarketError>;
