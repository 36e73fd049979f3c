//! What the estimator needs from the market-data layer.
//!
//! The tick engine implements these over its live tables and HDB; the
//! synthetic market implements them over simulated paths.

use thiserror::Error;

use crate::market::{IndexQuote, Instrument, ProductQuote, TwapBar};
use crate::EpochMillis;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("data source: {0}")]
pub struct SourceError(pub String);

/// Historical 1-minute TWAP bars of underlying indices.
pub trait TwapSource: Send + Sync {
    /// Bars of the `underlying` index (e.g. "BTC") with minute in
    /// `[from, to)`, sorted by minute.
    fn index_bars(&self, underlying: &str, from: EpochMillis, to: EpochMillis) -> Result<Vec<TwapBar>, SourceError>;
}

/// Latest quotes, as seen at one instant.
pub trait QuoteSource {
    fn index_quote(&self, underlying: &str) -> Option<IndexQuote>;
    fn product_quote(&self, instrument: &str) -> Option<ProductQuote>;
}

/// Mark history used to revalue positions after the fact.
pub trait MarkHistory {
    /// USD value of one contract from the 1-minute TWAP marks at `minute`.
    fn contract_value_usd(&self, instrument: &Instrument, minute: EpochMillis) -> Option<f64>;
}
