//! Simulated market implementing the estimator's data-source traits.

use std::collections::HashMap;

use chrono::{DateTime, Days};
use serde::{Deserialize, Serialize};

use super::bs::{black_scholes, BsQuote};
use super::universe::{build_universe, Smile, UniverseSpec};
use super::{simulate_index_paths, IndexPaths, SvParams};
use crate::market::{index_symbol, IndexQuote, Instrument, InstrumentKind, ProductQuote, TwapBar};
use crate::var::{MarkHistory, QuoteSource, SourceError, TwapSource};
use crate::{EpochMillis, DAY_MS, MINUTE_MS};

/// Crypto-quoted option marks are floored here so far out-of-the-money
/// contracts still carry a valid positive price.
const MIN_OPTION_MARK: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Start of the first simulated minute (UTC epoch ms, minute aligned).
    pub start: EpochMillis,
    pub days: u32,
    pub seed: u64,
    pub sv: SvParams,
    pub spots: Vec<(String, f64)>,
    pub universe: UniverseSpec,
    /// Maturities are counted from `start + anchor_offset_days`.
    pub anchor_offset_days: u64,
    pub smile_skew: f64,
    pub smile_curvature: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            start: 1_704_067_200_000, // 2024-01-01T00:00:00Z
            days: 30,
            seed: 1,
            sv: SvParams::default(),
            spots: vec![("BTC".into(), 30_000.0), ("ETH".into(), 2_000.0)],
            universe: UniverseSpec::default(),
            anchor_offset_days: 0,
            smile_skew: -0.15,
            smile_curvature: 0.6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticMarket {
    config: SimConfig,
    paths: IndexPaths,
    instruments: Vec<Instrument>,
    smiles: HashMap<String, Smile>,
}

impl SyntheticMarket {
    pub fn generate(config: SimConfig) -> Self {
        let minutes = config.days as usize * 1440;
        let paths = simulate_index_paths(config.start, minutes, &config.spots, &config.sv, config.seed);
        let anchor = DateTime::from_timestamp_millis(config.start)
            .expect("start within chrono range")
            .date_naive()
            + Days::new(config.anchor_offset_days);
        let instruments = build_universe(anchor, &config.spots, &config.universe);
        let smiles = config
            .spots
            .iter()
            .map(|(u, s)| {
                (
                    u.clone(),
                    Smile {
                        base_vol: config.sv.annual_vol,
                        skew: config.smile_skew,
                        curvature: config.smile_curvature,
                        reference_spot: *s,
                    },
                )
            })
            .collect();
        SyntheticMarket {
            config,
            paths,
            instruments,
            smiles,
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn paths(&self) -> &IndexPaths {
        &self.paths
    }

    pub fn start(&self) -> EpochMillis {
        self.paths.start
    }

    /// Exclusive end of the simulated range.
    pub fn end(&self) -> EpochMillis {
        self.paths.start + self.minutes() as EpochMillis * MINUTE_MS
    }

    pub fn minutes(&self) -> usize {
        self.paths.prices.first().map_or(0, |p| p.len())
    }

    pub fn underlyings(&self) -> &[String] {
        &self.paths.underlyings
    }

    pub fn instruments(&self) -> &[Instrument] {
        &self.instruments
    }

    /// Index level during the minute containing `t`.
    pub fn index_price(&self, underlying: &str, t: EpochMillis) -> Option<f64> {
        let u = self.paths.underlyings.iter().position(|x| x.eq_ignore_ascii_case(underlying))?;
        if t < self.start() {
            return None;
        }
        let k = ((t - self.start()) / MINUTE_MS) as usize;
        self.paths.prices[u].get(k).copied()
    }

    pub fn smile(&self, underlying: &str) -> Option<&Smile> {
        self.smiles.get(&underlying.to_ascii_uppercase())
    }

    fn option_quote(&self, inst: &Instrument, spot: f64, t: EpochMillis) -> Option<(BsQuote, f64)> {
        let expiry = inst.expiry_ms()?;
        if t >= expiry {
            return None;
        }
        let strike = inst.strike?;
        let vol = self.smile(&inst.underlying)?.vol(strike);
        let years = (expiry - t) as f64 / (365.0 * DAY_MS as f64);
        Some((black_scholes(spot, strike, years, vol, inst.option_type?), vol))
    }

    /// Quotes as they would be seen at `t`.
    pub fn snapshot(&self, t: EpochMillis) -> SimSnapshot<'_> {
        SimSnapshot { market: self, time: t }
    }

    /// Product quote of `inst` at `t`; `None` after expiry or outside the
    /// simulated range.
    pub fn product_quote_at(&self, inst: &Instrument, t: EpochMillis) -> Option<ProductQuote> {
        let spot = self.index_price(&inst.underlying, t)?;
        match inst.kind {
            InstrumentKind::Index => Some(ProductQuote {
                mark_price: spot,
                delta: None,
                gamma: None,
                theta: None,
                implied_vol: None,
                time: t,
            }),
            InstrumentKind::Future => {
                if t >= inst.expiry_ms()? {
                    return None;
                }
                Some(ProductQuote {
                    mark_price: spot,
                    delta: Some(1.0),
                    gamma: Some(0.0),
                    theta: Some(0.0),
                    implied_vol: None,
                    time: t,
                })
            }
            InstrumentKind::Option => {
                let (q, vol) = self.option_quote(inst, spot, t)?;
                Some(ProductQuote {
                    mark_price: (q.price / spot).max(MIN_OPTION_MARK),
                    delta: Some(q.delta),
                    gamma: Some(q.gamma),
                    theta: Some(q.theta_per_day),
                    implied_vol: Some(vol),
                    time: t,
                })
            }
        }
    }
}

impl TwapSource for SyntheticMarket {
    fn index_bars(&self, underlying: &str, from: EpochMillis, to: EpochMillis) -> Result<Vec<TwapBar>, SourceError> {
        let u = self
            .paths
            .underlyings
            .iter()
            .position(|x| x.eq_ignore_ascii_case(underlying))
            .ok_or_else(|| SourceError(format!("unknown underlying {underlying}")))?;
        let sym = index_symbol(underlying);
        let ceil_minutes = |t: EpochMillis| -> usize {
            let d = t - self.start();
            (d.div_euclid(MINUTE_MS) + i64::from(d.rem_euclid(MINUTE_MS) != 0)).max(0) as usize
        };
        let prices = &self.paths.prices[u];
        let (lo, hi) = (ceil_minutes(from), ceil_minutes(to).min(prices.len()));
        Ok((lo..hi.max(lo))
            .map(|k| TwapBar::new(sym.as_str(), self.start() + k as EpochMillis * MINUTE_MS, prices[k], 1))
            .collect())
    }
}

impl MarkHistory for SyntheticMarket {
    fn contract_value_usd(&self, inst: &Instrument, minute: EpochMillis) -> Option<f64> {
        let spot = self.index_price(&inst.underlying, minute)?;
        match inst.kind {
            InstrumentKind::Index => Some(spot),
            InstrumentKind::Future => (minute < inst.expiry_ms()?).then_some(spot),
            InstrumentKind::Option => self
                .option_quote(inst, spot, minute)
                .map(|(q, _)| (q.price / spot).max(MIN_OPTION_MARK) * spot),
        }
    }
}

/// Quotes of a [`SyntheticMarket`] frozen at one instant.
#[derive(Debug, Clone, Copy)]
pub struct SimSnapshot<'a> {
    market: &'a SyntheticMarket,
    time: EpochMillis,
}

impl SimSnapshot<'_> {
    pub fn time(&self) -> EpochMillis {
        self.time
    }
}

impl QuoteSource for SimSnapshot<'_> {
    fn index_quote(&self, underlying: &str) -> Option<IndexQuote> {
        Some(IndexQuote {
            price: self.market.index_price(underlying, self.time)?,
            time: self.time,
        })
    }

    fn product_quote(&self, instrument: &str) -> Option<ProductQuote> {
        let inst = Instrument::parse(instrument).ok()?;
        self.market.product_quote_at(&inst, self.time)
    }
}
