//! Raw tick history for charts: the last 24 hours per product.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use cryptovar_core::{EpochMillis, Tick, DAY_MS};

use crate::codec::FeedRecord;
use crate::latest::LatestCache;

pub const DEFAULT_STREAM_HORIZON_MS: EpochMillis = DAY_MS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Olhc {
    #[serde(with = "cryptovar_core::market::iso8601")]
    pub time: EpochMillis,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub instrument: String,
    pub strike: f64,
    #[serde(with = "cryptovar_core::market::iso8601")]
    pub expiry: EpochMillis,
    /// Time to expiry in years (365-day basis).
    pub tenor: f64,
    /// `ln(K / S)` against the latest index level, when known.
    pub log_moneyness: Option<f64>,
    pub implied_vol: f64,
    #[serde(with = "cryptovar_core::market::iso8601")]
    pub time: EpochMillis,
}

#[derive(Debug)]
pub struct StreamStore {
    rows: HashMap<String, VecDeque<(EpochMillis, f64)>>,
    horizon: EpochMillis,
    newest: EpochMillis,
}

impl Default for StreamStore {
    fn default() -> Self {
        Self::new(DEFAULT_STREAM_HORIZON_MS)
    }
}

impl StreamStore {
    pub fn new(horizon: EpochMillis) -> Self {
        StreamStore {
            rows: HashMap::new(),
            horizon,
            newest: EpochMillis::MIN,
        }
    }

    pub fn apply(&mut self, tick: &Tick) {
        if !tick.is_valid() {
            return;
        }
        let q = self.rows.entry(tick.instrument.clone()).or_default();
        // Keep each deque time-ordered; stragglers go in place.
        let pos = q.partition_point(|&(t, _)| t <= tick.time);
        q.insert(pos, (tick.time, tick.mark_price));
        self.newest = self.newest.max(tick.time);
    }

    pub fn apply_batch(&mut self, batch: &[FeedRecord]) {
        for r in batch {
            self.apply(&r.tick);
        }
        self.purge();
    }

    /// Drops rows older than the horizon, measured from the newest tick.
    pub fn purge(&mut self) -> usize {
        let cutoff = self.newest.saturating_sub(self.horizon);
        let mut dropped = 0;
        self.rows.retain(|_, q| {
            let n = q.partition_point(|&(t, _)| t < cutoff);
            q.drain(..n);
            dropped += n;
            !q.is_empty()
        });
        dropped
    }

    pub fn len(&self) -> usize {
        self.rows.values().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, product: &str) -> bool {
        self.rows.contains_key(product)
    }

    pub fn products(&self) -> Vec<String> {
        let mut v: Vec<String> = self.rows.keys().cloned().collect();
        v.sort();
        v
    }

    /// Candles of `interval` ms over `[from, to)`. Empty buckets are
    /// omitted; an unknown product yields no candles.
    pub fn olhc(&self, product: &str, interval: EpochMillis, from: EpochMillis, to: EpochMillis) -> Vec<Olhc> {
        let Some(q) = self.rows.get(product) else {
            log::warn!("olhc: no stream rows for {product}");
            return Vec::new();
        };
        if interval <= 0 || from >= to {
            return Vec::new();
        }
        let lo = q.partition_point(|&(t, _)| t < from);
        let hi = q.partition_point(|&(t, _)| t < to);
        let mut out: Vec<Olhc> = Vec::new();
        for &(t, p) in q.range(lo..hi) {
            let bucket = from + (t - from).div_euclid(interval) * interval;
            match out.last_mut() {
                Some(c) if c.time == bucket => {
                    c.high = c.high.max(p);
                    c.low = c.low.min(p);
                    c.close = p;
                    c.count += 1;
                }
                _ => out.push(Olhc {
                    time: bucket,
                    open: p,
                    high: p,
                    low: p,
                    close: p,
                    count: 1,
                }),
            }
        }
        out
    }
}

/// Implied-volatility points of every quoted, unexpired option on
/// `underlying` as of `now`.
pub fn vol_surface(latest: &LatestCache, underlying: &str, now: EpochMillis) -> Vec<SurfacePoint> {
    let spot = latest.index(&cryptovar_core::market::index_symbol(underlying)).map(|q| q.price);
    latest
        .options_on(underlying)
        .into_iter()
        .filter_map(|(inst, q)| {
            let expiry = inst.expiry_ms()?;
            let strike = inst.strike?;
            let iv = q.implied_vol?;
            (expiry > now && iv.is_finite() && iv > 0.0).then(|| SurfacePoint {
                instrument: inst.id.clone(),
                strike,
                expiry,
                tenor: (expiry - now) as f64 / (365.0 * DAY_MS as f64),
                log_moneyness: spot.or(latest.product_index_price(&inst.id)).map(|s| (strike / s).ln()),
                implied_vol: iv,
                time: q.time,
            })
        })
        .collect()
}
