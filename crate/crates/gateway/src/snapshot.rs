//! Point-in-time copy of the quotes one request needs, so a long-running
//! estimate never holds the live cache lock.

use std::collections::HashMap;

use cryptovar_core::market::{IndexQuote, ProductQuote};
use cryptovar_core::var::{Position, QuoteSource};
use cryptovar_tick::LatestCache;

#[derive(Debug, Clone, Default)]
pub struct QuoteSnapshot {
    indices: HashMap<String, IndexQuote>,
    products: HashMap<String, ProductQuote>,
}

impl QuoteSnapshot {
    pub fn capture(latest: &LatestCache, positions: &[Position]) -> Self {
        let mut s = QuoteSnapshot::default();
        for p in positions {
            let u = p.instrument.underlying.to_ascii_uppercase();
            if !s.indices.contains_key(&u) {
                if let Some(q) = latest.index_quote(&u) {
                    s.indices.insert(u, q);
                }
            }
            if let Some(q) = latest.product(&p.instrument.id) {
                s.products.insert(p.instrument.id.clone(), q);
            }
        }
        s
    }
}

impl QuoteSource for QuoteSnapshot {
    fn index_quote(&self, underlying: &str) -> Option<IndexQuote> {
        self.indices.get(&underlying.to_ascii_uppercase()).copied()
    }

    fn product_quote(&self, instrument: &str) -> Option<ProductQuote> {
        self.products.get(instrument).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cryptovar_core::{Instrument, Tick};

    #[test]
    fn copies_only_what_is_held() {
        let mut l = LatestCache::new();
        l.apply(&Tick::new("btc_usd", 1, 100.0));
        l.apply(&Tick::new("eth_usd", 1, 10.0));
        l.apply(&Tick::new("BTC-29MAR24", 1, 101.0));
        l.apply(&Tick::new("ETH-29MAR24", 1, 11.0));
        let pos = vec![Position {
            pid: "p".into(),
            instrument: Instrument::parse("BTC-29MAR24").unwrap(),
            quantity: 1.0,
        }];
        let s = QuoteSnapshot::capture(&l, &pos);
        assert_eq!(s.index_quote("btc").unwrap().price, 100.0);
        assert!(s.index_quote("ETH").is_none());
        assert!(s.product_quote("ETH-29MAR24").is_none());
        // Later updates do not leak into the copy.
        l.apply(&Tick::new("BTC-29MAR24", 2, 150.0));
        assert_eq!(s.product_quote("BTC-29MAR24").unwrap().mark_price, 101.0);
    }
}
