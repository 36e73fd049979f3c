//! Central moments of the quadratic portfolio-return form and the
//! Cornish-Fisher quantile.

use serde::{Deserialize, Serialize};

use super::{MappedCoefficients, Result, VarError};
use crate::linalg::{dot, matmul, matvec, trace};
use crate::stats::normal_quantile;
use crate::vol::CovarianceForecast;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub mu4: f64,
    pub skew: f64,
    /// Raw (not excess) kurtosis.
    pub kurt: f64,
    pub sigma_v: f64,
}

/// Moments of `d'R + 1/2 R'GR + tau*theta` with `R ~ N(0, Sigma)` and `G`
/// diagonal. Powers of `G Sigma` enter through traces of matrix powers.
pub fn central_moments(coeffs: &MappedCoefficients, sigma: &CovarianceForecast) -> Result<Moments> {
    let s = sigma.restrict(&coeffs.syms).ok_or_else(|| {
        VarError::InvalidMoments(format!("covariance over {:?} does not cover {:?}", sigma.syms, coeffs.syms))
    })?;
    let sig = &s.matrix;
    let d = &coeffs.delta;
    let gs: Vec<Vec<f64>> = sig
        .iter()
        .zip(&coeffs.gamma_diag)
        .map(|(row, g)| row.iter().map(|v| g * v).collect())
        .collect();
    let gs2 = matmul(&gs, &gs);
    let gs3 = matmul(&gs2, &gs);
    let gs4 = matmul(&gs2, &gs2);

    let sig_d = matvec(sig, d);
    // d' Sigma (G Sigma)^k d = (Sigma d)' G (Sigma G)^(k-1) ... written with
    // v_k = (G Sigma)^k d, so d' Sigma v_k.
    let gs_d = matvec(&gs, d);
    let gs2_d = matvec(&gs2, d);

    let mu1 = 0.5 * trace(&gs) + coeffs.theta_sum;
    let mu2 = dot(&sig_d, d) + 0.5 * trace(&gs2);
    if !(mu2 > 0.0) || !mu2.is_finite() {
        return Err(VarError::InvalidMoments(format!("second moment {mu2} is not positive")));
    }
    let mu3 = 3.0 * dot(&sig_d, &gs_d) + trace(&gs3);
    let mu4 = 12.0 * dot(&sig_d, &gs2_d) + 3.0 * trace(&gs4) + 3.0 * mu2 * mu2;
    let skew = mu3 / mu2.powf(1.5);
    let kurt = mu4 / (mu2 * mu2);
    if kurt < skew * skew + 1.0 - 1e-9 {
        return Err(VarError::InvalidMoments(format!(
            "kurtosis {kurt} below the Pearson bound for skewness {skew}"
        )));
    }
    Ok(Moments {
        mu1,
        mu2,
        mu3,
        mu4,
        skew,
        kurt,
        sigma_v: mu2.sqrt(),
    })
}

/// Cornish-Fisher adjustment of a standard normal quantile `z`.
pub fn cornish_fisher_z(z: f64, skew: f64, kurt: f64) -> f64 {
    let z2 = z * z;
    let z3 = z2 * z;
    z + (z2 - 1.0) * skew / 6.0 + (z3 - 3.0 * z) * (kurt - 3.0) / 24.0 - (2.0 * z3 - 5.0 * z) * skew * skew / 36.0
}

/// Standardized Cornish-Fisher quantile at probability `alpha`.
pub fn cornish_fisher_quantile(skew: f64, kurt: f64, alpha: f64) -> f64 {
    cornish_fisher_z(normal_quantile(alpha), skew, kurt)
}

/// Slack on the validity inequality. Moments of a Gaussian book come out
/// of the trace formulas a few ulps away from `S = 0, K = 3`.
pub const VALIDITY_TOLERANCE: f64 = 1e-12;

/// Whether the expansion is monotone in `z` for these parameters;
/// `kurt_excess` is kurtosis minus 3.
pub fn validity_check(skew: f64, kurt_excess: f64) -> bool {
    let s2 = skew * skew;
    s2 / 9.0 - 4.0 * (kurt_excess / 8.0 - s2 / 6.0) * (1.0 - kurt_excess / 8.0 - 5.0 * s2 / 36.0) <= VALIDITY_TOLERANCE
}
