//! In-memory holdings per portfolio id.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Result, VarError};
use crate::market::{Instrument, InstrumentKind};

/// Quantities whose magnitude falls below this after netting are removed.
const NET_ZERO: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub pid: String,
    pub instrument: Instrument,
    /// Signed number of contracts.
    pub quantity: f64,
}

/// Holdings keyed by portfolio id then instrument id. A portfolio stays
/// known after its last position is removed, so it can be told apart from
/// an id that never existed.
#[derive(Debug, Clone, Default)]
pub struct PortfolioBook {
    portfolios: BTreeMap<String, BTreeMap<String, Position>>,
}

impl PortfolioBook {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `quantity` contracts, merging with an existing holding. Returns
    /// the resulting position, or `None` when the holding netted to zero.
    pub fn add_position(&mut self, pid: &str, instrument_id: &str, quantity: f64) -> Result<Option<Position>> {
        if pid.trim().is_empty() {
            return Err(VarError::Validation("empty portfolio id".into()));
        }
        if !quantity.is_finite() || quantity == 0.0 {
            return Err(VarError::Validation(format!("quantity must be finite and non-zero, got {quantity}")));
        }
        let instrument = Instrument::parse(instrument_id)?;
        if instrument.kind == InstrumentKind::Index {
            return Err(VarError::Validation(format!("{instrument_id} is an index, not a tradable product")));
        }
        let book = self.portfolios.entry(pid.to_string()).or_default();
        let key = instrument.id.clone();
        let merged = book.get(&key).map_or(0.0, |p| p.quantity) + quantity;
        if merged.abs() < NET_ZERO {
            book.remove(&key);
            return Ok(None);
        }
        let pos = Position {
            pid: pid.to_string(),
            instrument,
            quantity: merged,
        };
        book.insert(key, pos.clone());
        Ok(Some(pos))
    }

    /// Positions sorted by instrument id; `None` for an unknown pid.
    pub fn list(&self, pid: &str) -> Option<Vec<Position>> {
        self.portfolios.get(pid).map(|b| b.values().cloned().collect())
    }

    pub fn remove_position(&mut self, pid: &str, instrument_id: &str) -> Result<Position> {
        let book = self
            .portfolios
            .get_mut(pid)
            .ok_or_else(|| VarError::UnknownPortfolio(pid.to_string()))?;
        let key = Instrument::parse(instrument_id).map(|i| i.id).unwrap_or_else(|_| instrument_id.to_string());
        book.remove(&key).ok_or_else(|| VarError::UnknownPosition {
            pid: pid.to_string(),
            instrument: instrument_id.to_string(),
        })
    }

    pub fn contains(&self, pid: &str) -> bool {
        self.portfolios.contains_key(pid)
    }

    pub fn pids(&self) -> Vec<String> {
        self.portfolios.keys().cloned().collect()
    }
}
