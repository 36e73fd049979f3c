//! Unconditional coverage.

use super::{BacktestError, Result};
use crate::stats::binomial_upper_tail;

/// One-sided p-value `P(X >= observed)` for `X ~ Binomial(n, p)`: small
/// values mean more violations than the VaR level allows.
pub fn binomial_coverage(n: u64, p: f64, observed: u64) -> Result<f64> {
    if observed > n {
        return Err(BacktestError::Domain(format!("{observed} violations in {n} samples")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(BacktestError::Domain(format!("probability {p} outside (0, 1)")));
    }
    Ok(binomial_upper_tail(n, p, observed))
}
