//! Latest value per index and per product.

use std::collections::HashMap;

use cryptovar_core::market::{index_symbol, IndexQuote, ProductQuote};
use cryptovar_core::var::QuoteSource;
use cryptovar_core::{EpochMillis, Instrument, InstrumentKind, Tick};

use crate::codec::FeedRecord;

/// Keeps the newest tick per symbol. An older tick never overwrites a
/// newer one; on equal timestamps the later arrival wins.
#[derive(Debug, Default, Clone)]
pub struct LatestCache {
    indices: HashMap<String, IndexQuote>,
    products: HashMap<String, (ProductQuote, Option<f64>)>,
    /// Strike and expiry per option id, parsed once.
    options: HashMap<String, Instrument>,
}

impl LatestCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn apply(&mut self, tick: &Tick) {
        if !tick.is_valid() {
            return;
        }
        if tick.instrument.ends_with("_usd") {
            let q = IndexQuote {
                price: tick.mark_price,
                time: tick.time,
            };
            match self.indices.get_mut(&tick.instrument) {
                Some(old) if old.time > tick.time => {}
                Some(old) => *old = q,
                None => {
                    self.indices.insert(tick.instrument.clone(), q);
                }
            }
            return;
        }
        let q = ProductQuote {
            mark_price: tick.mark_price,
            delta: tick.delta,
            gamma: tick.gamma,
            theta: tick.theta,
            implied_vol: tick.implied_vol,
            time: tick.time,
        };
        match self.products.get_mut(&tick.instrument) {
            Some((old, _)) if old.time > tick.time => {}
            Some(slot) => *slot = (q, tick.index_price),
            None => {
                if let Ok(inst) = Instrument::parse(&tick.instrument) {
                    if inst.kind == InstrumentKind::Option {
                        self.options.insert(tick.instrument.clone(), inst);
                    }
                } else {
                    return;
                }
                self.products.insert(tick.instrument.clone(), (q, tick.index_price));
            }
        }
    }

    pub fn apply_batch(&mut self, batch: &[FeedRecord]) {
        for r in batch {
            self.apply(&r.tick);
        }
    }

    pub fn index(&self, sym: &str) -> Option<IndexQuote> {
        self.indices.get(sym).copied()
    }

    pub fn product(&self, id: &str) -> Option<ProductQuote> {
        self.products.get(id).map(|(q, _)| *q)
    }

    /// Underlying level reported alongside the latest product tick.
    pub fn product_index_price(&self, id: &str) -> Option<f64> {
        self.products.get(id).and_then(|(_, p)| *p)
    }

    pub fn index_symbols(&self) -> Vec<String> {
        let mut v: Vec<String> = self.indices.keys().cloned().collect();
        v.sort();
        v
    }

    pub fn product_ids(&self) -> Vec<String> {
        let mut v: Vec<String> = self.products.keys().cloned().collect();
        v.sort();
        v
    }

    /// Options on `underlying` with their latest quote.
    pub fn options_on(&self, underlying: &str) -> Vec<(&Instrument, ProductQuote)> {
        let mut v: Vec<(&Instrument, ProductQuote)> = self
            .options
            .iter()
            .filter(|(_, i)| i.underlying.eq_ignore_ascii_case(underlying))
            .filter_map(|(id, i)| self.product(id).map(|q| (i, q)))
            .collect();
        v.sort_by(|a, b| a.0.id.cmp(&b.0.id));
        v
    }

    /// Latest update time over everything held.
    pub fn last_update(&self) -> Option<EpochMillis> {
        let a = self.indices.values().map(|q| q.time).max();
        let b = self.products.values().map(|(q, _)| q.time).max();
        a.max(b)
    }

    pub fn len(&self) -> usize {
        self.indices.len() + self.products.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl QuoteSource for LatestCache {
    fn index_quote(&self, underlying: &str) -> Option<IndexQuote> {
        self.index(&index_symbol(underlying))
    }

    fn product_quote(&self, instrument: &str) -> Option<ProductQuote> {
        self.product(instrument)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn newest_wins_ties_replace() {
        let mut c = LatestCache::new();
        c.apply(&Tick::new("btc_usd", 10, 100.0));
        c.apply(&Tick::new("btc_usd", 5, 50.0));
        assert_eq!(c.index("btc_usd").unwrap().price, 100.0);
        c.apply(&Tick::new("btc_usd", 10, 101.0));
        assert_eq!(c.index("btc_usd").unwrap().price, 101.0);
        assert_eq!(c.index_quote("BTC").unwrap().price, 101.0);
    }

    #[test]
    fn products_and_options() {
        let mut c = LatestCache::new();
        let mut o = Tick::new("BTC-29MAR24-40000-C", 3, 0.05);
        o.implied_vol = Some(0.6);
        o.index_price = Some(42_000.0);
        c.apply(&o);
        c.apply(&Tick::new("BTC-29MAR24", 3, 42_100.0));
        c.apply(&Tick::new("not-an-id", 3, 1.0));
        assert_eq!(c.product_ids(), vec!["BTC-29MAR24", "BTC-29MAR24-40000-C"]);
        assert_eq!(c.options_on("btc").len(), 1);
        assert_eq!(c.product_index_price("BTC-29MAR24-40000-C"), Some(42_000.0));
        assert_eq!(c.product_quote("BTC-29MAR24-40000-C").unwrap().implied_vol, Some(0.6));
        assert_eq!(c.last_update(), Some(3));
    }
}
