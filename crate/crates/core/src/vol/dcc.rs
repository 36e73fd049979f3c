//! Dynamic conditional correlation on top of univariate GARCH(1,1) fits.
//!
//! Two-stage estimation: each series gets its own GARCH fit, then the DCC
//! parameters `(a, b)` are fitted by Gaussian quasi-likelihood on the
//! standardized residuals with correlation targeting:
//! `Q_{t+1} = (1 - a - b) Qbar + a z_t z_t' + b Q_t`, `Q_1 = Qbar`.

use serde::{Deserialize, Serialize};

use super::garch::{fit_garch11, GarchDist, GarchParams, MAX_ITERATIONS, TOLERANCE};
use super::optim::nelder_mead;
use super::{bars_per_day, logistic, logit, CovarianceForecast, Model, Result, VolError};
use crate::linalg::cholesky;
use crate::market::{align_all, ReturnSeries};
use crate::par::Execution;

const MIN_OBSERVATIONS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DccParams {
    pub a: f64,
    pub b: f64,
    /// Sample correlation of the standardized residuals.
    pub qbar: Vec<Vec<f64>>,
    /// Pseudo-correlation state after the last observation, `Q_{T+1}`.
    pub q_next: Vec<Vec<f64>>,
    /// One-step-ahead correlation forecast, `Q_{T+1}` normalized.
    pub r_next: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn correlation_matrix(z: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let k = z.len();
    let n = z[0].len() as f64;
    let means: Vec<f64> = z.iter().map(|s| s.iter().sum::<f64>() / n).collect();
    let mut c = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..=i {
            let v: f64 = z[i].iter().zip(&z[j]).map(|(x, y)| (x - means[i]) * (y - means[j])).sum();
            c[i][j] = v;
            c[j][i] = v;
        }
    }
    for i in 0..k {
        if !(c[i][i] > 0.0) {
            return Err(VolError::Degenerate(format!("standardized residual series {i}")));
        }
    }
    let d: Vec<f64> = (0..k).map(|i| c[i][i].sqrt()).collect();
    Ok((0..k)
        .map(|i| {
            (0..k)
                .map(|j| if i == j { 1.0 } else { (c[i][j] / (d[i] * d[j])).clamp(-1.0, 1.0) })
                .collect()
        })
        .collect())
}

fn normalize(q: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = q.len();
    (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    if i == j {
                        1.0
                    } else {
                        (q[i][j] / (q[i][i] * q[j][j]).sqrt()).clamp(-1.0, 1.0)
                    }
                })
                .collect()
        })
        .collect()
}

fn step_q(q: &mut [Vec<f64>], qbar: &[Vec<f64>], z: &[f64], a: f64, b: f64) {
    let k = q.len();
    for i in 0..k {
        for j in 0..k {
            q[i][j] = (1.0 - a - b) * qbar[i][j] + a * z[i] * z[j] + b * q[i][j];
        }
    }
}

/// Returns the log-likelihood and the final state `Q_{T+1}`.
fn dcc_pass(z: &[Vec<f64>], qbar: &[Vec<f64>], a: f64, b: f64) -> (f64, Vec<Vec<f64>>) {
    let k = z.len();
    let n = z[0].len();
    let mut q = qbar.to_vec();
    let mut zt = vec![0.0; k];
    let mut ll = 0.0;
    for t in 0..n {
        for i in 0..k {
            zt[i] = z[i][t];
        }
        let r = normalize(&q);
        let Ok(l) = cholesky(&r) else {
            return (f64::NEG_INFINITY, q);
        };
        let mut y = vec![0.0; k];
        let mut quad = 0.0;
        let mut log_det = 0.0;
        for i in 0..k {
            let mut s = zt[i];
            for m in 0..i {
                s -= l[i][m] * y[m];
            }
            y[i] = s / l[i][i];
            quad += y[i] * y[i];
            log_det += 2.0 * l[i][i].ln();
        }
        let zz: f64 = zt.iter().map(|v| v * v).sum();
        ll -= 0.5 * (log_det + quad - zz);
        step_q(&mut q, qbar, &zt, a, b);
    }
    (ll, q)
}

fn decode(x: &[f64]) -> (f64, f64) {
    let p = logistic(x[0]);
    let s = logistic(x[1]);
    (p * s, p * (1.0 - s))
}

/// Fits `(a, b)` to standardized residuals `z[i][t]` (aligned in time).
pub fn fit_dcc(z: &[Vec<f64>]) -> Result<DccParams> {
    if z.len() < 2 {
        return Err(VolError::Contract("DCC needs at least two series".into()));
    }
    let n = z[0].len();
    if z.iter().any(|s| s.len() != n) {
        return Err(VolError::Contract("residual series of different lengths".into()));
    }
    if n < MIN_OBSERVATIONS {
        return Err(VolError::InsufficientData {
            needed: MIN_OBSERVATIONS,
            got: n,
        });
    }
    let qbar = correlation_matrix(z)?;

    // Perfectly dependent residuals: every Q_t is singular and the
    // correlation is pinned regardless of (a, b).
    if cholesky(&qbar).is_err() {
        return Ok(DccParams {
            a: 0.0,
            b: 0.0,
            q_next: qbar.clone(),
            r_next: qbar.clone(),
            qbar,
            log_likelihood: f64::NAN,
            iterations: 0,
            converged: true,
        });
    }

    let objective = |x: &[f64]| {
        let (a, b) = decode(x);
        -dcc_pass(z, &qbar, a, b).0 / n as f64
    };
    let x0 = vec![logit(0.95), logit(0.05 / 0.95)];
    let r = nelder_mead(objective, &x0, 0.5, MAX_ITERATIONS, TOLERANCE);
    let (a, b) = decode(&r.x);
    let (ll, q_next) = dcc_pass(z, &qbar, a, b);
    let params = DccParams {
        a,
        b,
        r_next: normalize(&q_next),
        q_next,
        qbar,
        log_likelihood: ll,
        iterations: r.iterations,
        converged: r.converged,
    };
    if !r.converged {
        return Err(VolError::DccNonConvergence {
            iterations: r.iterations,
            best: Box::new(params),
        });
    }
    Ok(params)
}

/// `Sigma_ij = sqrt(h_i h_j) R_ij`, one-bar variances scaled to the horizon.
/// The correlation forecast is held at its one-step value.
pub fn dcc_forecast(
    syms: &[String],
    garch: &[GarchParams],
    dcc: Option<&DccParams>,
    horizon_days: f64,
    interval_minutes: u32,
) -> Result<CovarianceForecast> {
    let k = garch.len();
    if syms.len() != k || (k > 1 && dcc.is_none()) {
        return Err(VolError::Contract("one GARCH fit per sym and a DCC fit when k > 1".into()));
    }
    let scale = bars_per_day(interval_minutes) * horizon_days;
    let m = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    let rho = if i == j { 1.0 } else { dcc.map_or(0.0, |d| d.r_next[i][j]) };
                    (garch[i].sigma2_next * garch[j].sigma2_next).sqrt() * rho * scale
                })
                .collect()
        })
        .collect();
    CovarianceForecast::new(syms.to_vec(), m, horizon_days, Model::Garch)
}

/// Full GARCH + DCC path from return series (inner-joined on time).
pub fn garch_dcc_covariance(
    syms: &[String],
    returns: &[ReturnSeries],
    dist: GarchDist,
    horizon_days: f64,
    exec: Execution,
) -> Result<CovarianceForecast> {
    if syms.len() != returns.len() || returns.is_empty() {
        return Err(VolError::Contract("one return series per sym".into()));
    }
    let interval = returns[0].interval_minutes;
    if returns.iter().any(|r| r.interval_minutes != interval) {
        return Err(VolError::Contract("series sampled at different intervals".into()));
    }
    let (_, cols) = align_all(returns);
    let idx: Vec<usize> = (0..cols.len()).collect();
    let fits: Vec<GarchParams> = exec
        .map(&idx, |&i| fit_garch11(&syms[i], &cols[i], dist))
        .into_iter()
        .collect::<Result<_>>()?;
    let dcc = if fits.len() > 1 {
        let z: Vec<Vec<f64>> = fits.iter().zip(&cols).map(|(f, r)| f.standardized_residuals(r)).collect();
        Some(fit_dcc(&z)?)
    } else {
        None
    };
    dcc_forecast(syms, &fits, dcc.as_ref(), horizon_days, interval)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::garch_path;
    use crate::MINUTE_MS;

    fn to_series(sym: &str, v: Vec<f64>) -> ReturnSeries {
        let ts = (1..=v.len() as i64).map(|k| k * 30 * MINUTE_MS).collect();
        ReturnSeries::new(sym, 30, ts, v).unwrap()
    }

    #[test]
    fn independent_series_have_small_forecast_correlation() {
        let a = garch_path(20_000, 1e-6, 0.05, 0.90, 1);
        let b = garch_path(20_000, 2e-6, 0.08, 0.85, 2);
        let f = garch_dcc_covariance(
            &["BTC".into(), "ETH".into()],
            &[to_series("a", a), to_series("b", b)],
            GarchDist::Gaussian,
            1.0,
            Execution::default(),
        )
        .unwrap();
        assert!(f.correlation(0, 1).unwrap().abs() < 0.1, "{f:?}");
    }

    #[test]
    fn identical_series_correlate_fully() {
        let a = garch_path(500, 1e-6, 0.05, 0.90, 3);
        let f = garch_dcc_covariance(
            &["BTC".into(), "ETH".into()],
            &[to_series("a", a.clone()), to_series("b", a)],
            GarchDist::Gaussian,
            1.0,
            Execution::Sequential,
        )
        .unwrap();
        assert!((f.correlation(0, 1).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_sym_collapses_to_garch() {
        let a = garch_path(1000, 1e-6, 0.05, 0.90, 4);
        let fit = fit_garch11("BTC", &a, GarchDist::Gaussian).unwrap();
        let f = garch_dcc_covariance(
            &["BTC".into()],
            &[to_series("a", a)],
            GarchDist::Gaussian,
            2.0,
            Execution::Sequential,
        )
        .unwrap();
        assert!((f.matrix[0][0] - fit.sigma2_next * 96.0).abs() < 1e-18);
    }

    #[test]
    fn correlated_series_recover_dependence() {
        let a = garch_path(5000, 1e-6, 0.05, 0.90, 5);
        let noise = garch_path(5000, 1e-6, 0.05, 0.90, 6);
        let b: Vec<f64> = a.iter().zip(&noise).map(|(x, e)| 0.7 * x + 0.714 * e).collect();
        let f = garch_dcc_covariance(
            &["BTC".into(), "ETH".into()],
            &[to_series("a", a), to_series("b", b)],
            GarchDist::StudentT,
            1.0,
            Execution::Sequential,
        )
        .unwrap();
        let rho = f.correlation(0, 1).unwrap();
        assert!(rho > 0.5 && rho < 0.9, "{rho}");
    }
}
