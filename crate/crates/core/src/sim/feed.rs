//! Tick feeds drawn from a [`SyntheticMarket`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SyntheticMarket;
use crate::market::{index_symbol, Instrument, Tick};
use crate::{EpochMillis, MINUTE_MS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedSpec {
    pub from: EpochMillis,
    pub to: EpochMillis,
    /// Index ticks per underlying per minute, evenly spaced.
    pub index_ticks_per_minute: u32,
    /// Products to quote; each gets a tick every `product_interval_ms`.
    pub products: Vec<String>,
    pub product_interval_ms: EpochMillis,
    /// Relative jitter of individual index ticks around the minute level.
    pub noise: f64,
    pub seed: u64,
}

impl FeedSpec {
    pub fn new(from: EpochMillis, to: EpochMillis) -> Self {
        FeedSpec {
            from,
            to,
            index_ticks_per_minute: 60,
            products: Vec::new(),
            product_interval_ms: 5_000,
            noise: 2e-5,
            seed: 7,
        }
    }
}

/// Ticks for `[spec.from, spec.to)` in time order (ties broken by the
/// order: indices first, then products as listed).
pub fn generate_ticks(market: &SyntheticMarket, spec: &FeedSpec) -> Vec<Tick> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let products: Vec<Instrument> = spec.products.iter().filter_map(|p| Instrument::parse(p).ok()).collect();
    let mut out = Vec::new();
    let per_min = spec.index_ticks_per_minute.max(1) as EpochMillis;
    let step = MINUTE_MS / per_min;
    let mut minute = spec.from.div_euclid(MINUTE_MS) * MINUTE_MS;
    while minute < spec.to {
        let mut batch: Vec<Tick> = Vec::new();
        for u in market.underlyings() {
            let Some(level) = market.index_price(u, minute) else { continue };
            for k in 0..per_min {
                let t = minute + k * step;
                if t < spec.from || t >= spec.to {
                    continue;
                }
                let p = level * (1.0 + spec.noise * (2.0 * rng.random::<f64>() - 1.0));
                let mut tick = Tick::new(index_symbol(u), t, p);
                tick.index_price = Some(p);
                batch.push(tick);
            }
        }
        if spec.product_interval_ms > 0 {
            let mut t = minute + (spec.product_interval_ms - minute.rem_euclid(spec.product_interval_ms)) % spec.product_interval_ms;
            while t < minute + MINUTE_MS {
                if t >= spec.from && t < spec.to {
                    for inst in &products {
                        let Some(q) = market.product_quote_at(inst, t) else { continue };
                        let index = market.index_price(&inst.underlying, t);
                        let mut tick = Tick::new(inst.id.clone(), t, q.mark_price);
                        tick.index_price = index;
                        tick.bid = Some(q.mark_price * 0.999);
                        tick.ask = Some(q.mark_price * 1.001);
                        tick.delta = q.delta;
                        tick.gamma = q.gamma;
                        tick.theta = q.theta;
                        tick.implied_vol = q.implied_vol;
                        batch.push(tick);
                    }
                }
                t += spec.product_interval_ms;
            }
        }
        batch.sort_by_key(|t| t.time);
        out.extend(batch);
        minute += MINUTE_MS;
    }
    out
}
