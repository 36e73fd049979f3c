//! Delta-gamma-theta mapping of positions onto underlying index returns.
//!
//! With `V_i` the USD value of position `i`, `P_i` its index level and
//! per-contract greeks `delta_i, gamma_i, theta_i` (USD terms, theta per
//! day), the portfolio return over `tau` days is approximated by
//! `sum_i dt_i R_u(i) + 1/2 gt_i R_u(i)^2 + tau * tt_i` where
//! `dt_i = q_i delta_i P_i / V`, `gt_i = q_i gamma_i P_i^2 / V`,
//! `tt_i = q_i theta_i / V` and `V = sum_i V_i`. Futures map with
//! `delta = 1` and no gamma or theta.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Position, QuoteSource, Result, VarError};
use crate::market::InstrumentKind;
use crate::EpochMillis;

/// `|sum V_i| < DEGENERATE_RATIO * sum |V_i|` is rejected: weights blow up.
pub const DEGENERATE_RATIO: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionCoefficients {
    pub instrument: String,
    pub underlying: String,
    pub value_usd: f64,
    pub delta: f64,
    pub gamma: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappedCoefficients {
    /// Sorted underlyings.
    pub syms: Vec<String>,
    pub delta: Vec<f64>,
    /// Diagonal of the gamma matrix; cross-gammas are zero.
    pub gamma_diag: Vec<f64>,
    pub theta: Vec<f64>,
    /// `tau * sum(theta)`.
    pub theta_sum: f64,
    pub tau_days: f64,
    /// `V` in USD.
    pub portfolio_value: f64,
}

impl MappedCoefficients {
    /// Quadratic approximation of the portfolio return for index returns
    /// `r` (ordered as `syms`).
    pub fn portfolio_return(&self, r: &[f64]) -> f64 {
        self.delta
            .iter()
            .zip(&self.gamma_diag)
            .zip(r)
            .map(|((d, g), x)| d * x + 0.5 * g * x * x)
            .sum::<f64>()
            + self.theta_sum
    }
}

/// Distinct underlyings, sorted.
pub fn extract_indices(positions: &[Position]) -> Vec<String> {
    let mut syms: Vec<String> = positions.iter().map(|p| p.instrument.underlying.clone()).collect();
    syms.sort();
    syms.dedup();
    syms
}

fn fresh<T>(q: Option<(T, EpochMillis)>, as_of: EpochMillis, stale_after_ms: EpochMillis, name: &str) -> Result<T> {
    match q {
        Some((v, t)) if as_of - t <= stale_after_ms => Ok(v),
        _ => Err(VarError::StaleData {
            instrument: name.to_string(),
        }),
    }
}

/// Per-position coefficients, already divided by the portfolio value.
/// Also returns `V`.
pub fn adjust_greeks(
    positions: &[Position],
    quotes: &dyn QuoteSource,
    as_of: EpochMillis,
    stale_after_ms: EpochMillis,
) -> Result<(Vec<PositionCoefficients>, f64)> {
    if positions.is_empty() {
        return Err(VarError::DegeneratePortfolio("no positions".into()));
    }
    let mut raw = Vec::with_capacity(positions.len());
    for p in positions {
        let inst = &p.instrument;
        let index = fresh(
            quotes.index_quote(&inst.underlying).map(|q| (q.price, q.time)),
            as_of,
            stale_after_ms,
            &inst.index_sym(),
        )?;
        let quote = fresh(quotes.product_quote(&inst.id).map(|q| (q, q.time)), as_of, stale_after_ms, &inst.id)?;
        let q = p.quantity;
        let c = match inst.kind {
            InstrumentKind::Future => PositionCoefficients {
                instrument: inst.id.clone(),
                underlying: inst.underlying.clone(),
                value_usd: q * quote.mark_price,
                delta: q * index,
                gamma: 0.0,
                theta: 0.0,
            },
            InstrumentKind::Option => {
                let missing = || VarError::StaleData {
                    instrument: format!("{} (greeks)", inst.id),
                };
                let delta = quote.delta.ok_or_else(missing)?;
                let gamma = quote.gamma.ok_or_else(missing)?;
                let theta = quote.theta.ok_or_else(missing)?;
                PositionCoefficients {
                    instrument: inst.id.clone(),
                    underlying: inst.underlying.clone(),
                    value_usd: q * quote.mark_price * index,
                    delta: q * delta * index,
                    gamma: q * gamma * index * index,
                    theta: q * theta,
                }
            }
            InstrumentKind::Index => {
                return Err(VarError::Validation(format!("{} is not a tradable product", inst.id)));
            }
        };
        raw.push(c);
    }
    let total: f64 = raw.iter().map(|c| c.value_usd).sum();
    let gross: f64 = raw.iter().map(|c| c.value_usd.abs()).sum();
    if !total.is_finite() || total.abs() < DEGENERATE_RATIO * gross || total == 0.0 {
        return Err(VarError::DegeneratePortfolio(format!(
            "net value {total} against gross {gross}"
        )));
    }
    for c in &mut raw {
        c.delta /= total;
        c.gamma /= total;
        c.theta /= total;
    }
    Ok((raw, total))
}

/// Sums coefficients sharing an underlying.
pub fn compress_by_underlying(coeffs: &[PositionCoefficients], portfolio_value: f64, tau_days: f64) -> MappedCoefficients {
    let mut acc: BTreeMap<&str, (f64, f64, f64)> = BTreeMap::new();
    for c in coeffs {
        let e = acc.entry(c.underlying.as_str()).or_default();
        e.0 += c.delta;
        e.1 += c.gamma;
        e.2 += c.theta;
    }
    let syms: Vec<String> = acc.keys().map(|s| s.to_string()).collect();
    let theta: Vec<f64> = acc.values().map(|v| v.2).collect();
    MappedCoefficients {
        syms,
        delta: acc.values().map(|v| v.0).collect(),
        gamma_diag: acc.values().map(|v| v.1).collect(),
        theta_sum: tau_days * theta.iter().sum::<f64>(),
        theta,
        tau_days,
        portfolio_value,
    }
}

/// [`adjust_greeks`] followed by [`compress_by_underlying`].
pub fn map_portfolio(
    positions: &[Position],
    quotes: &dyn QuoteSource,
    as_of: EpochMillis,
    tau_days: f64,
    stale_after_ms: EpochMillis,
) -> Result<MappedCoefficients> {
    let (coeffs, total) = adjust_greeks(positions, quotes, as_of, stale_after_ms)?;
    Ok(compress_by_underlying(&coeffs, total, tau_days))
}
