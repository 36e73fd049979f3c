//! Independence of violations: first-order Markov LR test, lagged
//! regression F-test, hour-of-day group splitting and group averages.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};

use super::{BacktestError, Result, ViolationSeries};
use crate::linalg::{ols_solve, LinalgError};
use crate::stats::{chi_squared_sf, f_sf, CHI2_1_CRITICAL};
use crate::HOUR_MS;

/// Markov-chain independence test. `lr`, `p_value` and `reject` are `None`
/// when the series has no violations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrReport {
    pub n: usize,
    pub n00: u64,
    pub n01: u64,
    pub n10: u64,
    pub n11: u64,
    pub pi: f64,
    pub pi0: f64,
    pub pi1: f64,
    pub lr: Option<f64>,
    pub p_value: Option<f64>,
    pub critical_value: f64,
    pub significance: f64,
    pub reject: Option<bool>,
}

/// Lagged-indicator regression test. Fields are `None` when the response
/// has no variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FTestReport {
    pub n: usize,
    pub k: usize,
    pub df2: usize,
    pub f: Option<f64>,
    pub p_value: Option<f64>,
    pub significance: f64,
    pub reject: Option<bool>,
}

/// `n0 ln(1 - p) + n1 ln p` with `0 ln 0 = 0`.
fn bernoulli_ll(n0: u64, n1: u64, p: f64) -> f64 {
    let term = |n: u64, q: f64| if n == 0 { 0.0 } else { n as f64 * q.ln() };
    term(n0, 1.0 - p) + term(n1, p)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Chi-squared(1) critical value; the tabulated values for the usual levels.
pub(crate) fn chi2_1_critical(significance: f64) -> f64 {
    CHI2_1_CRITICAL
        .iter()
        .find(|(a, _)| (a - significance).abs() < 1e-12)
        .map(|&(_, c)| c)
        .unwrap_or_else(|| ChiSquared::new(1.0).unwrap().inverse_cdf(1.0 - significance))
}

pub fn christoffersen_lr(indicators: &[bool], significance: f64) -> Result<LrReport> {
    if indicators.len() < 2 {
        return Err(BacktestError::InsufficientData {
            needed: 2,
            got: indicators.len(),
        });
    }
    check_significance(significance)?;
    let (mut n00, mut n01, mut n10, mut n11) = (0u64, 0u64, 0u64, 0u64);
    for w in indicators.windows(2) {
        match (w[0], w[1]) {
            (false, false) => n00 += 1,
            (false, true) => n01 += 1,
            (true, false) => n10 += 1,
            (true, true) => n11 += 1,
        }
    }
    let pi0 = ratio(n01, n00 + n01);
    let pi1 = ratio(n11, n10 + n11);
    let pi = ratio(n01 + n11, n00 + n01 + n10 + n11);
    let critical_value = chi2_1_critical(significance);
    let any_violation = indicators.iter().any(|&i| i);
    let (lr, p_value, reject) = if any_violation {
        let restricted = bernoulli_ll(n00 + n10, n01 + n11, pi);
        let unrestricted = bernoulli_ll(n00, n01, pi0) + bernoulli_ll(n10, n11, pi1);
        let lr = (-2.0 * (restricted - unrestricted)).max(0.0);
        (Some(lr), Some(chi_squared_sf(lr, 1.0)), Some(lr > critical_value))
    } else {
        (None, None, None)
    };
    Ok(LrReport {
        n: indicators.len(),
        n00,
        n01,
        n10,
        n11,
        pi,
        pi0,
        pi1,
        lr,
        p_value,
        critical_value,
        significance,
        reject,
    })
}

fn check_significance(significance: f64) -> Result<()> {
    if significance > 0.0 && significance < 1.0 {
        Ok(())
    } else {
        Err(BacktestError::Domain(format!("significance {significance} outside (0, 1)")))
    }
}

/// Regresses `I_t` on an intercept and `I_{t-1..t-k}` and tests that the
/// lag coefficients are jointly zero.
pub fn regression_independence_f(indicators: &[bool], k: usize, significance: f64) -> Result<FTestReport> {
    if k == 0 {
        return Err(BacktestError::Domain("at least one lag is required".into()));
    }
    if indicators.len() <= k + 5 {
        return Err(BacktestError::InsufficientData {
            needed: k + 6,
            got: indicators.len(),
        });
    }
    check_significance(significance)?;
    let v: Vec<f64> = indicators.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let y: Vec<f64> = v[k..].to_vec();
    let x: Vec<Vec<f64>> = (k..v.len())
        .map(|t| std::iter::once(1.0).chain((1..=k).map(|i| v[t - i])).collect())
        .collect();
    let n = y.len();
    let df2 = n - k - 1;
    let na = FTestReport {
        n,
        k,
        df2,
        f: None,
        p_value: None,
        significance,
        reject: None,
    };
    let mean = y.iter().sum::<f64>() / n as f64;
    let rss_restricted: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if rss_restricted == 0.0 {
        return Ok(na);
    }
    let fit = match ols_solve(&x, &y) {
        Ok(fit) => fit,
        Err(LinalgError::Singular { .. }) => return Ok(na),
        Err(e) => return Err(e.into()),
    };
    let rss_full: f64 = fit.residuals.iter().map(|e| e * e).sum();
    // Residuals of 0/1 data are exact multiples of 1/n at best; treat
    // rounding-level RSS as a perfect fit.
    let f = if rss_full <= 1e-12 * rss_restricted {
        f64::INFINITY
    } else {
        ((rss_restricted - rss_full) / k as f64).max(0.0) / (rss_full / df2 as f64)
    };
    let p = f_sf(f, k as f64, df2 as f64);
    Ok(FTestReport {
        f: Some(f),
        p_value: Some(p),
        reject: Some(p < significance),
        ..na
    })
}

/// Partitions samples by `hour_of_day mod g`; group `i` holds hours
/// `i, i + g, i + 2g, ...` of every day, in time order.
pub fn split_groups(series: &ViolationSeries, g: usize) -> Result<Vec<ViolationSeries>> {
    if g == 0 || g > 24 {
        return Err(BacktestError::Domain(format!("{g} groups; expected 1..=24")));
    }
    let mut idx = vec![Vec::new(); g];
    for (i, &t) in series.timestamps.iter().enumerate() {
        let hour = t.div_euclid(HOUR_MS).rem_euclid(24) as usize;
        idx[hour % g].push(i);
    }
    Ok(idx.iter().map(|ix| series.subset(ix)).collect())
}

/// How a group with an undefined statistic enters the average.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingCell {
    /// Counted with statistic zero, keeping its weight.
    Zero,
    /// Left out of both numerator and weights.
    Skip,
}

/// Average of per-group statistics weighted by group sample counts.
/// `None` when no group contributes.
pub fn weighted_average(cells: &[(Option<f64>, usize)], missing: MissingCell) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0usize);
    for &(v, w) in cells {
        match (v, missing) {
            (Some(v), _) => {
                num += v * w as f64;
                den += w;
            }
            (None, MissingCell::Zero) => den += w,
            (None, MissingCell::Skip) => {}
        }
    }
    (den > 0 && cells.iter().any(|c| c.0.is_some())).then(|| num / den as f64)
}

/// p-value of a group-averaged F statistic, using the averaged residual
/// degrees of freedom.
pub(crate) fn averaged_f_p_value(f: f64, k: usize, df2: f64) -> f64 {
    if df2 < 1.0 {
        return f64::NAN;
    }
    if f.is_infinite() {
        return 0.0;
    }
    FisherSnedecor::new(k as f64, df2).map(|d| 1.0 - d.cdf(f)).unwrap_or(f64::NAN)
}
