//! Realized variance, quarticity, covariance and correlation over
//! fixed windows of intraday returns.

use serde::{Deserialize, Serialize};

use super::{align, MarketError, Result, ReturnSeries, Symbol};
use crate::{EpochMillis, MINUTE_MS};

/// Realized measures of one symbol over one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizedWindow {
    pub sym: Symbol,
    pub window_minutes: u32,
    /// Exclusive end of the window; returns ending in `(end - m, end]`.
    pub end_time: EpochMillis,
    pub rv: f64,
    pub rq: f64,
    /// Sum of the intraday log returns, i.e. the log return over the window.
    pub log_return: f64,
}

/// Realized co-movement of a pair over one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizedPairWindow {
    pub syms: (Symbol, Symbol),
    pub window_minutes: u32,
    pub end_time: EpochMillis,
    pub rcov: f64,
    /// `None` when either leg has zero realized variance.
    pub rcorr: Option<f64>,
}

fn returns_per_window(returns: &ReturnSeries, window_minutes: u32) -> Result<usize> {
    let step = returns.interval_minutes;
    if step == 0 || window_minutes == 0 || window_minutes % step != 0 {
        return Err(MarketError::Contract(format!(
            "window of {window_minutes} min is not a positive multiple of the {step}-min sampling interval"
        )));
    }
    Ok((window_minutes / step) as usize)
}

fn check_complete(timestamps: &[EpochMillis], step_ms: EpochMillis, needed: usize) -> Result<()> {
    if timestamps.len() != needed || timestamps.windows(2).any(|w| w[1] - w[0] != step_ms) {
        return Err(MarketError::InsufficientData {
            needed,
            got: timestamps.len(),
        });
    }
    Ok(())
}

/// `RV = sum r_i^2` over a complete window of `m / interval` returns.
pub fn realized_variance(returns: &ReturnSeries, window_minutes: u32) -> Result<f64> {
    let n = returns_per_window(returns, window_minutes)?;
    check_complete(&returns.timestamps, returns.interval_ms(), n)?;
    Ok(returns.values.iter().map(|r| r * r).sum())
}

/// `RQ = (n / 3) * sum r_i^4` with `n = m / interval` returns in the window.
pub fn realized_quarticity(returns: &ReturnSeries, window_minutes: u32) -> Result<f64> {
    let n = returns_per_window(returns, window_minutes)?;
    check_complete(&returns.timestamps, returns.interval_ms(), n)?;
    Ok(n as f64 / 3.0 * returns.values.iter().map(|r| r.powi(4)).sum::<f64>())
}

fn aligned_window(
    r1: &ReturnSeries,
    r2: &ReturnSeries,
    window_minutes: u32,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if r1.interval_minutes != r2.interval_minutes {
        return Err(MarketError::Contract("pair sampled at different intervals".into()));
    }
    let n = returns_per_window(r1, window_minutes)?;
    let (ts, a, b) = align(r1, r2);
    check_complete(&ts, r1.interval_ms(), n)?;
    Ok((a, b))
}

/// `RCov = sum r1_i r2_i` over the timestamps both series share.
pub fn realized_covariance(r1: &ReturnSeries, r2: &ReturnSeries, window_minutes: u32) -> Result<f64> {
    let (a, b) = aligned_window(r1, r2, window_minutes)?;
    Ok(a.iter().zip(&b).map(|(x, y)| x * y).sum())
}

/// `RCorr = RCov / sqrt(RV1 RV2)`, clamped to `[-1, 1]` against rounding.
pub fn realized_correlation(r1: &ReturnSeries, r2: &ReturnSeries, window_minutes: u32) -> Result<f64> {
    let (a, b) = aligned_window(r1, r2, window_minutes)?;
    corr_of(&a, &b).ok_or(MarketError::DegenerateCorrelation)
}

fn corr_of(a: &[f64], b: &[f64]) -> Option<f64> {
    let rv1: f64 = a.iter().map(|x| x * x).sum();
    let rv2: f64 = b.iter().map(|x| x * x).sum();
    if rv1 <= 0.0 || rv2 <= 0.0 {
        return None;
    }
    let rcov: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Some((rcov / (rv1 * rv2).sqrt()).clamp(-1.0, 1.0))
}

/// Index of the window (of length `window_ms`, aligned to the epoch) that
/// contains the return ending at `t`.
fn window_index(t: EpochMillis, window_ms: EpochMillis) -> i64 {
    (t - 1).div_euclid(window_ms)
}

/// Splits a return series into epoch-aligned windows and keeps the complete
/// ones. A 720-minute window therefore runs 00:00-12:00 or 12:00-24:00 UTC.
pub fn realized_windows(returns: &ReturnSeries, window_minutes: u32) -> Result<Vec<RealizedWindow>> {
    let n = returns_per_window(returns, window_minutes)?;
    let window_ms = window_minutes as EpochMillis * MINUTE_MS;
    let mut out = Vec::new();
    let mut start = 0;
    while start < returns.len() {
        let w = window_index(returns.timestamps[start], window_ms);
        let mut end = start;
        while end < returns.len() && window_index(returns.timestamps[end], window_ms) == w {
            end += 1;
        }
        if end - start == n {
            let vals = &returns.values[start..end];
            out.push(RealizedWindow {
                sym: returns.sym.clone(),
                window_minutes,
                end_time: (w + 1) * window_ms,
                rv: vals.iter().map(|r| r * r).sum(),
                rq: n as f64 / 3.0 * vals.iter().map(|r| r.powi(4)).sum::<f64>(),
                log_return: vals.iter().sum(),
            });
        }
        start = end;
    }
    Ok(out)
}

/// Pair analogue of [`realized_windows`] on the shared timestamps.
pub fn realized_pair_windows(
    r1: &ReturnSeries,
    r2: &ReturnSeries,
    window_minutes: u32,
) -> Result<Vec<RealizedPairWindow>> {
    if r1.interval_minutes != r2.interval_minutes {
        return Err(MarketError::Contract("pair sampled at different intervals".into()));
    }
    let n = returns_per_window(r1, window_minutes)?;
    let window_ms = window_minutes as EpochMillis * MINUTE_MS;
    let (ts, a, b) = align(r1, r2);
    let mut out = Vec::new();
    let mut start = 0;
    while start < ts.len() {
        let w = window_index(ts[start], window_ms);
        let mut end = start;
        while end < ts.len() && window_index(ts[end], window_ms) == w {
            end += 1;
        }
        if end - start == n {
            let (x, y) = (&a[start..end], &b[start..end]);
            out.push(RealizedPairWindow {
                syms: (r1.sym.clone(), r2.sym.clone()),
                window_minutes,
                end_time: (w + 1) * window_ms,
                rcov: x.iter().zip(y).map(|(p, q)| p * q).sum(),
                rcorr: corr_of(x, y),
            });
        }
        start = end;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(sym: &str, vals: &[f64]) -> ReturnSeries {
        let ts = (1..=vals.len() as i64).map(|i| i * 5 * MINUTE_MS).collect();
        ReturnSeries::new(sym, 5, ts, vals.to_vec()).unwrap()
    }

    #[test]
    fn zero_returns_zero_rv() {
        let r = series("x", &[0.0; 12]);
        assert_eq!(realized_variance(&r, 60).unwrap(), 0.0);
        assert_eq!(realized_quarticity(&r, 60).unwrap(), 0.0);
    }

    #[test]
    fn two_return_window() {
        let r = series("x", &[0.01, -0.02]);
        assert!((realized_variance(&r, 10).unwrap() - 0.0005).abs() < 1e-18);
        let rq = realized_quarticity(&r, 10).unwrap();
        assert!((rq - 2.0 / 3.0 * (1e-8 + 1.6e-7)).abs() < 1e-20);
        assert!((rq - 1.1333333333333333e-7).abs() < 1e-18);
    }

    #[test]
    fn constant_returns_rq_closed_form() {
        let (n, c) = (144usize, 0.003);
        let r = series("x", &vec![c; n]);
        let expected = (n as f64 / 3.0) * n as f64 * c.powi(4);
        assert!((realized_quarticity(&r, 720).unwrap() - expected).abs() / expected < 1e-12);
    }

    #[test]
    fn twelve_hour_window_has_144_returns() {
        let r = series("x", &vec![0.001; 144]);
        assert!((realized_variance(&r, 720).unwrap() - 144.0 * 1e-6).abs() < 1e-15);
        let short = series("x", &vec![0.001; 143]);
        assert_eq!(
            realized_variance(&short, 720),
            Err(MarketError::InsufficientData { needed: 144, got: 143 })
        );
    }

    #[test]
    fn window_not_multiple_of_interval() {
        assert!(matches!(realized_variance(&series("x", &[0.1]), 7), Err(MarketError::Contract(_))));
    }

    #[test]
    fn correlation_extremes() {
        let a = series("a", &[0.01, -0.02, 0.005, 0.0]);
        let neg = series("b", &[-0.01, 0.02, -0.005, 0.0]);
        assert!((realized_correlation(&a, &a, 20).unwrap() - 1.0).abs() < 1e-15);
        assert!((realized_correlation(&a, &neg, 20).unwrap() + 1.0).abs() < 1e-15);
        let flat = series("c", &[0.0; 4]);
        assert_eq!(realized_correlation(&a, &flat, 20), Err(MarketError::DegenerateCorrelation));
    }

    #[test]
    fn ten_point_pair_matches_direct_sums() {
        let x = [0.0031, -0.0012, 0.0008, -0.0044, 0.0019, 0.0002, -0.0027, 0.0035, -0.0006, 0.0011];
        let y = [0.0015, -0.0021, 0.0013, -0.0030, 0.0001, 0.0009, -0.0019, 0.0024, 0.0004, -0.0002];
        let (a, b) = (series("a", &x), series("b", &y));
        // Direct sums written out independently of the library helpers.
        let mut sxy = 0.0;
        let mut sxx = 0.0;
        let mut syy = 0.0;
        for k in 0..10 {
            sxy += x[k] * y[k];
            sxx += x[k] * x[k];
            syy += y[k] * y[k];
        }
        assert!((realized_covariance(&a, &b, 50).unwrap() - sxy).abs() < 1e-18);
        assert!((realized_correlation(&a, &b, 50).unwrap() - sxy / (sxx * syy).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn windows_are_epoch_aligned_and_complete() {
        // 1.5 windows of 60 minutes: the trailing half window is dropped.
        let r = series("x", &vec![0.001; 18]);
        let w = realized_windows(&r, 60).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].end_time, 60 * MINUTE_MS);
        assert!((w[0].log_return - 0.012).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn rv_is_additive_over_disjoint_windows(vals in prop::collection::vec(-0.05f64..0.05, 24)) {
            let whole = series("x", &vals);
            let total = realized_variance(&whole, 120).unwrap();
            let halves: f64 = realized_windows(&whole, 60).unwrap().iter().map(|w| w.rv).sum();
            prop_assert!((total - halves).abs() <= 1e-15 + 1e-12 * total);
        }

        #[test]
        fn correlation_bounded(
            a in prop::collection::vec(-0.05f64..0.05, 12),
            b in prop::collection::vec(-0.05f64..0.05, 12),
        ) {
            let (x, y) = (series("a", &a), series("b", &b));
            if let Ok(c) = realized_correlation(&x, &y, 60) {
                prop_assert!(c.abs() <= 1.0);
            }
        }
    }
}
