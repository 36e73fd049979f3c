use serde::{Deserialize, Serialize};

use super::{MarketError, Result, Symbol, Tick};
use crate::{EpochMillis, MINUTE_MS};

/// Per-minute pre-averaged price: the arithmetic mean of the tick prices
/// received in `[minute, minute + 1m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwapBar {
    pub sym: Symbol,
    /// Start of the minute bucket, epoch ms.
    pub minute: EpochMillis,
    pub twap: f64,
    pub count: u64,
}

impl TwapBar {
    pub fn new(sym: impl Into<Symbol>, minute: EpochMillis, twap: f64, count: u64) -> Self {
        TwapBar {
            sym: sym.into(),
            minute,
            twap,
            count,
        }
    }

    /// Sum of the contributing prices.
    pub fn price_sum(&self) -> f64 {
        self.twap * self.count as f64
    }

    /// Plus-join of two partial aggregates of the same bucket.
    pub fn merge(&self, other: &TwapBar) -> Result<TwapBar> {
        if self.sym != other.sym || self.minute != other.minute {
            return Err(MarketError::Contract(format!(
                "cannot merge bars ({}, {}) and ({}, {})",
                self.sym, self.minute, other.sym, other.minute
            )));
        }
        let count = self.count + other.count;
        Ok(TwapBar {
            sym: self.sym.clone(),
            minute: self.minute,
            twap: (self.price_sum() + other.price_sum()) / count as f64,
            count,
        })
    }
}

/// Start of the minute containing `t`.
pub fn minute_of(t: EpochMillis) -> EpochMillis {
    t.div_euclid(MINUTE_MS) * MINUTE_MS
}

/// Folds a batch of ticks for one (symbol, minute) bucket into `existing`.
///
/// The result is the same (to rounding) as averaging every contributing
/// price at once, whatever the batching and order.
pub fn aggregate_twap(ticks: &[Tick], existing: Option<&TwapBar>) -> Result<TwapBar> {
    let (sym, minute): (&str, EpochMillis) = match (ticks.first(), existing) {
        (_, Some(bar)) => (&bar.sym, bar.minute),
        (Some(t), None) => (&t.instrument, minute_of(t.time)),
        (None, None) => {
            return Err(MarketError::Contract("empty batch and no existing bar".into()))
        }
    };
    let mut sum = 0.0;
    for t in ticks {
        if t.instrument != sym || minute_of(t.time) != minute {
            return Err(MarketError::Contract(format!(
                "tick ({}, {}) does not belong to bucket ({sym}, {minute})",
                t.instrument, t.time
            )));
        }
        if !t.is_valid() {
            return Err(MarketError::Domain {
                time: t.time,
                price: t.mark_price,
            });
        }
        sum += t.mark_price;
    }
    let (prior_sum, prior_count) = existing.map_or((0.0, 0), |b| (b.price_sum(), b.count));
    let count = prior_count + ticks.len() as u64;
    Ok(TwapBar {
        sym: existing.map_or_else(|| Symbol::from(sym), |b| b.sym.clone()),
        minute,
        twap: (prior_sum + sum) / count as f64,
        count,
    })
}
