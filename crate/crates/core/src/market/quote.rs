use serde::{Deserialize, Serialize};

use crate::EpochMillis;

/// Latest level of an underlying index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexQuote {
    pub price: f64,
    pub time: EpochMillis,
}

/// Latest mark and greeks of a traded product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductQuote {
    pub mark_price: f64,
    pub delta: Option<f64>,
    pub gamma: Option<f64>,
    pub theta: Option<f64>,
    pub implied_vol: Option<f64>,
    pub time: EpochMillis,
}
