//! Realized outcomes: portfolio revaluation and the ex-post covariance.

use serde::{Deserialize, Serialize};

use super::{BacktestError, Result};
use crate::market::{align_all, log_returns, minute_of};
use crate::var::{MarkHistory, Position, TwapSource, VarError};
use crate::vol::{CovarianceForecast, Model, VolError};
use crate::{EpochMillis, DAY_MS, MINUTE_MS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealizedPnl {
    pub value_start: f64,
    pub value_end: f64,
    /// `(value_end - value_start) / value_start`.
    pub ret: f64,
}

impl RealizedPnl {
    pub fn pnl(&self) -> f64 {
        self.value_end - self.value_start
    }

    pub fn loss(&self) -> f64 {
        -self.pnl()
    }
}

pub(crate) fn horizon_ms(horizon_days: f64) -> EpochMillis {
    (horizon_days * DAY_MS as f64).round() as EpochMillis
}

/// Revalues the positions from minute marks at `t0` and `t0 + horizon`.
/// `None` when a mark is missing at either end or the starting value is
/// zero; such samples are dropped from a backtest.
pub fn realized_pnl(
    positions: &[Position],
    t0: EpochMillis,
    horizon_days: f64,
    marks: &dyn MarkHistory,
) -> Option<RealizedPnl> {
    let (m0, m1) = (minute_of(t0), minute_of(t0 + horizon_ms(horizon_days)));
    let mut v0 = 0.0;
    let mut v1 = 0.0;
    for p in positions {
        v0 += p.quantity * marks.contract_value_usd(&p.instrument, m0)?;
        v1 += p.quantity * marks.contract_value_usd(&p.instrument, m1)?;
    }
    (v0 != 0.0).then(|| RealizedPnl {
        value_start: v0,
        value_end: v1,
        ret: (v1 - v0) / v0,
    })
}

/// Sum of products of 5-minute index returns ending in `(t0, t0 + horizon]`:
/// the covariance the horizon actually delivered.
pub fn expost_realized_covariance(
    syms: &[String],
    t0: EpochMillis,
    horizon_days: f64,
    interval_minutes: u32,
    twaps: &dyn TwapSource,
) -> Result<CovarianceForecast> {
    if syms.is_empty() {
        return Err(BacktestError::Domain("no symbols".into()));
    }
    let t1 = t0 + horizon_ms(horizon_days);
    // The first return needs the grid point at or before t0.
    let step = interval_minutes as EpochMillis * MINUTE_MS;
    let from = t0.div_euclid(step) * step;
    let mut series = Vec::with_capacity(syms.len());
    for s in syms {
        let bars = twaps.index_bars(s, from, t1 + MINUTE_MS).map_err(VarError::from)?;
        let r = log_returns(&bars, interval_minutes).map_err(VolError::from).map_err(VarError::from)?;
        series.push(r.window(t0, t1));
    }
    let (ts, cols) = align_all(&series);
    if ts.is_empty() {
        return Err(BacktestError::InsufficientData { needed: 1, got: 0 });
    }
    let n = syms.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let c: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
            m[i][j] = c;
            m[j][i] = c;
        }
    }
    CovarianceForecast::new(syms.to_vec(), m, horizon_days, Model::ExPost)
        .map_err(|e| BacktestError::Var(VarError::from(e)))
}
