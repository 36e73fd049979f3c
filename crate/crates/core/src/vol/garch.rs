//! Univariate GARCH(1,1) with zero conditional mean, fitted by (quasi-)
//! maximum likelihood under Gaussian or standardized Student-t innovations.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::optim::nelder_mead;
use super::{logistic, logit, Result, VolError};

pub const MIN_OBSERVATIONS: usize = 200;
pub const MAX_ITERATIONS: usize = 2000;
/// On the mean log-likelihood per observation.
pub const TOLERANCE: f64 = 1e-8;
const NU_FLOOR: f64 = 2.05;
/// Beyond this the t density is Gaussian for all practical purposes; an
/// open upper end lets the optimizer drift on short samples.
const NU_CAP: f64 = 500.0;
const NU_INIT: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GarchDist {
    Gaussian,
    StudentT,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub sym: String,
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
    pub dist: GarchDist,
    /// Degrees of freedom, Student-t only.
    pub nu: Option<f64>,
    pub log_likelihood: f64,
    /// Log-likelihood at the starting point of the optimizer.
    pub initial_log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n_obs: usize,
    /// Used as `sigma^2_0`.
    pub sample_variance: f64,
    /// Conditional variance of the last observation.
    pub sigma2_last: f64,
    /// One-step-ahead forecast `omega + alpha r_T^2 + beta sigma^2_T`.
    pub sigma2_next: f64,
}

impl GarchParams {
    pub fn persistence(&self) -> f64 {
        self.alpha + self.beta
    }

    pub fn unconditional_variance(&self) -> f64 {
        self.omega / (1.0 - self.persistence())
    }

    /// `sigma^2_t` for every observation, starting from the sample variance.
    pub fn conditional_variances(&self, returns: &[f64]) -> Vec<f64> {
        conditional_variances(returns, self.omega, self.alpha, self.beta, self.sample_variance)
    }

    /// Returns divided by their conditional volatility.
    pub fn standardized_residuals(&self, returns: &[f64]) -> Vec<f64> {
        self.conditional_variances(returns)
            .iter()
            .zip(returns)
            .map(|(h, r)| r / h.sqrt())
            .collect()
    }
}

pub fn conditional_variances(returns: &[f64], omega: f64, alpha: f64, beta: f64, sigma2_0: f64) -> Vec<f64> {
    let mut h = Vec::with_capacity(returns.len());
    let mut s = sigma2_0;
    for t in 0..returns.len() {
        if t > 0 {
            let prev = returns[t - 1];
            s = omega + alpha * prev * prev + beta * s;
        }
        h.push(s);
    }
    h
}

struct TConst {
    nu: f64,
    norm: f64,
}

impl TConst {
    fn new(nu: f64) -> Self {
        TConst {
            nu,
            norm: ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (std::f64::consts::PI * (nu - 2.0)).ln(),
        }
    }

    fn log_density(&self, eps2: f64, h: f64) -> f64 {
        self.norm - 0.5 * h.ln() - (self.nu + 1.0) / 2.0 * (eps2 / (h * (self.nu - 2.0))).ln_1p()
    }
}

/// Total log-likelihood of `returns` under GARCH(1,1) with `sigma^2_0`
/// given. `nu` is ignored for Gaussian innovations.
pub fn garch_log_likelihood(
    returns: &[f64],
    omega: f64,
    alpha: f64,
    beta: f64,
    dist: GarchDist,
    nu: Option<f64>,
    sigma2_0: f64,
) -> f64 {
    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
    let t = match dist {
        GarchDist::StudentT => Some(TConst::new(nu.unwrap_or(NU_INIT))),
        GarchDist::Gaussian => None,
    };
    let mut ll = 0.0;
    let mut h = sigma2_0;
    for (k, r) in returns.iter().enumerate() {
        if k > 0 {
            let prev = returns[k - 1];
            h = omega + alpha * prev * prev + beta * h;
        }
        if !(h > 0.0) {
            return f64::NEG_INFINITY;
        }
        let e2 = r * r;
        ll += match &t {
            None => -HALF_LN_2PI - 0.5 * (h.ln() + e2 / h),
            Some(c) => c.log_density(e2, h),
        };
    }
    ll
}

/// Unconstrained coordinates: `omega = exp(x0)`, persistence
/// `p = logistic(x1)`, ARCH share `s = logistic(x2)`, `alpha = p s`,
/// `beta = p (1 - s)`, and `nu = 2.05 + exp(x3)`.
fn decode(x: &[f64]) -> (f64, f64, f64, Option<f64>) {
    let omega = x[0].exp();
    let p = logistic(x[1]);
    let s = logistic(x[2]);
    let nu = x.get(3).map(|v| NU_FLOOR + (NU_CAP - NU_FLOOR) * logistic(*v));
    (omega, p * s, p * (1.0 - s), nu)
}

fn encode(omega: f64, alpha: f64, beta: f64, nu: Option<f64>) -> Vec<f64> {
    let p = alpha + beta;
    let mut x = vec![omega.ln(), logit(p), logit(alpha / p)];
    if let Some(nu) = nu {
        x.push(logit((nu - NU_FLOOR) / (NU_CAP - NU_FLOOR)));
    }
    x
}

/// Fits GARCH(1,1) to `returns` (zero mean assumed).
///
/// The optimizer works on returns divided by their sample standard
/// deviation; `omega` and the likelihood are mapped back to the original
/// scale afterwards. Non-convergence within [`MAX_ITERATIONS`] is an error
/// that carries the best parameters found.
pub fn fit_garch11(sym: &str, returns: &[f64], dist: GarchDist) -> Result<GarchParams> {
    let n = returns.len();
    if n < MIN_OBSERVATIONS {
        return Err(VolError::InsufficientData {
            needed: MIN_OBSERVATIONS,
            got: n,
        });
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(VolError::Contract(format!("{sym}: non-finite return")));
    }
    let mean = returns.iter().sum::<f64>() / n as f64;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1) as f64;
    // Rounding leaves a residue of order eps * mean^2 on constant input.
    if !(var > 64.0 * f64::EPSILON * f64::EPSILON * mean * mean) {
        return Err(VolError::Degenerate(sym.to_string()));
    }
    let sd = var.sqrt();
    let y: Vec<f64> = returns.iter().map(|r| r / sd).collect();
    let y_var = var / (sd * sd);

    let objective = |x: &[f64]| {
        let (w, a, b, nu) = decode(x);
        -garch_log_likelihood(&y, w, a, b, dist, nu, y_var) / n as f64
    };
    let nu0 = (dist == GarchDist::StudentT).then_some(NU_INIT);
    let x0 = encode(y_var * 0.05, 0.05, 0.90, nu0);
    let f_init = objective(&x0);

    let mut x = x0.clone();
    let mut fx = f_init;
    let mut iterations = 0;
    let mut converged = false;
    let mut step = 0.5;
    while iterations < MAX_ITERATIONS {
        let r = nelder_mead(objective, &x, step, MAX_ITERATIONS - iterations, TOLERANCE);
        iterations += r.iterations;
        let improvement = fx - r.fx;
        if r.fx <= fx {
            x = r.x;
            fx = r.fx;
        }
        if !r.converged {
            break;
        }
        // A collapsed simplex can stall away from the optimum; restart
        // around the incumbent until a restart no longer helps.
        if improvement <= TOLERANCE {
            converged = true;
            break;
        }
        step = 0.1;
    }

    let (w_y, alpha, beta, nu) = decode(&x);
    let omega = w_y * var;
    let sigma2 = conditional_variances(returns, omega, alpha, beta, var);
    let sigma2_last = *sigma2.last().expect("n >= 200");
    let r_last = returns[n - 1];
    let (w0, a0, b0, nu_init) = decode(&x0);
    let params = GarchParams {
        sym: sym.to_string(),
        omega,
        alpha,
        beta,
        dist,
        nu,
        log_likelihood: garch_log_likelihood(returns, omega, alpha, beta, dist, nu, var),
        initial_log_likelihood: garch_log_likelihood(returns, w0 * var, a0, b0, dist, nu_init, var),
        iterations,
        converged,
        n_obs: n,
        sample_variance: var,
        sigma2_last,
        sigma2_next: omega + alpha * r_last * r_last + beta * sigma2_last,
    };
    if !converged {
        return Err(VolError::NonConvergence {
            sym: sym.to_string(),
            iterations,
            best_log_likelihood: params.log_likelihood,
            best: Box::new(params),
        });
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::garch_path;

    #[test]
    fn constant_returns_are_degenerate() {
        assert!(matches!(
            fit_garch11("x", &[0.001; 300], GarchDist::Gaussian),
            Err(VolError::Degenerate(_))
        ));
    }

    #[test]
    fn short_series_rejected() {
        assert!(matches!(
            fit_garch11("x", &[0.001; 50], GarchDist::Gaussian),
            Err(VolError::InsufficientData { needed: 200, got: 50 })
        ));
    }

    #[test]
    fn transform_round_trip() {
        let x = encode(0.3, 0.07, 0.88, Some(6.0));
        let (w, a, b, nu) = decode(&x);
        assert!((w - 0.3).abs() < 1e-12 && (a - 0.07).abs() < 1e-12 && (b - 0.88).abs() < 1e-12);
        assert!((nu.unwrap() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn student_t_density_integrates_to_one() {
        let c = TConst::new(5.0);
        let h = 2.0;
        let dx = 1e-3;
        let total: f64 = (-60_000..=60_000)
            .map(|i| {
                let x = i as f64 * dx;
                c.log_density(x * x, h).exp() * dx
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-4, "{total}");
    }

    #[test]
    fn recovers_simulated_parameters() {
        let sigma_bar2: f64 = 1e-4;
        let omega = 0.05 * sigma_bar2 * (1.0 - 0.95);
        let r = garch_path(20_000, omega, 0.05, 0.90, 42);
        let fit = fit_garch11("sim", &r, GarchDist::Gaussian).unwrap();
        assert!((fit.alpha - 0.05).abs() < 0.05, "{fit:?}");
        assert!((fit.beta - 0.90).abs() < 0.05, "{fit:?}");
        assert!(fit.log_likelihood >= fit.initial_log_likelihood);
        assert!(fit.persistence() < 1.0);
    }

    #[test]
    fn student_t_fit_is_stationary_and_improves_on_start() {
        let r = garch_path(3000, 1e-6, 0.08, 0.85, 9);
        let fit = fit_garch11("sim", &r, GarchDist::StudentT).unwrap();
        assert!(fit.persistence() < 1.0);
        assert!(fit.nu.unwrap() > 2.05);
        assert!(fit.log_likelihood >= fit.initial_log_likelihood);
    }
}
