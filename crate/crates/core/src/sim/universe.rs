//! Instrument universe and implied-volatility smile of the synthetic market.

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::market::{Instrument, OptionType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UniverseSpec {
    /// Future maturities, days after the anchor date.
    pub future_days: Vec<u64>,
    /// Option maturities, days after the anchor date.
    pub option_days: Vec<u64>,
    pub strikes_per_maturity: usize,
    /// Log-moneyness spacing between neighbouring strikes.
    pub strike_step: f64,
}

impl Default for UniverseSpec {
    /// 5 futures and 8 x 40 x 2 options per underlying: 645 each.
    fn default() -> Self {
        UniverseSpec {
            future_days: vec![7, 14, 30, 60, 90],
            option_days: vec![1, 2, 7, 14, 30, 60, 90, 180],
            strikes_per_maturity: 40,
            strike_step: 0.03,
        }
    }
}

fn strike_tick(spot: f64) -> f64 {
    5.0 * 10f64.powi(spot.log10().floor() as i32 - 3)
}

/// Futures and options on every underlying, strikes centred on `spot`.
pub fn build_universe(anchor: NaiveDate, spots: &[(String, f64)], spec: &UniverseSpec) -> Vec<Instrument> {
    let mut out = Vec::new();
    for (u, spot) in spots {
        for &d in &spec.future_days {
            out.push(Instrument::future(u, anchor + Days::new(d)));
        }
        let tick = strike_tick(*spot);
        let half = spec.strikes_per_maturity as i64 / 2;
        for &d in &spec.option_days {
            let maturity = anchor + Days::new(d);
            let mut last = f64::NAN;
            for j in -half..spec.strikes_per_maturity as i64 - half {
                let k = ((spot * (spec.strike_step * j as f64).exp()) / tick).round() * tick;
                if k == last || k <= 0.0 {
                    continue;
                }
                last = k;
                for cp in [OptionType::Call, OptionType::Put] {
                    out.push(Instrument::option(u, maturity, k, cp));
                }
            }
        }
    }
    out
}

/// Sticky-strike smile in log-moneyness against a fixed reference spot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Smile {
    pub base_vol: f64,
    pub skew: f64,
    pub curvature: f64,
    pub reference_spot: f64,
}

impl Smile {
    pub fn flat(vol: f64, reference_spot: f64) -> Self {
        Smile {
            base_vol: vol,
            skew: 0.0,
            curvature: 0.0,
            reference_spot,
        }
    }

    pub fn vol(&self, strike: f64) -> f64 {
        let x = (strike / self.reference_spot).ln();
        (self.base_vol * (1.0 + self.skew * x + self.curvature * x * x)).clamp(0.05, 5.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn default_universe_size() {
        let spots = vec![("BTC".to_string(), 30_000.0), ("ETH".to_string(), 2_000.0)];
        let u = build_universe(NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(), &spots, &UniverseSpec::default());
        assert_eq!(u.len(), 1290);
        let ids: HashSet<&str> = u.iter().map(|i| i.id.as_str()).collect();
        assert_eq!(ids.len(), u.len());
        for i in &u {
            assert_eq!(&Instrument::parse(&i.id).unwrap(), i);
        }
    }

    #[test]
    fn smile_is_flat_at_reference() {
        let s = Smile {
            base_vol: 0.5,
            skew: -0.2,
            curvature: 0.8,
            reference_spot: 100.0,
        };
        assert_eq!(s.vol(100.0), 0.5);
        assert!(s.vol(80.0) > s.vol(120.0));
    }
}
