//! Distribution functions used by the transformation and backtest stages.
//!
//! The inverse normal CDF is Wichura's AS241 (PPND16), relative error
//! around 1e-16 over the double range. The binomial tail is summed exactly
//! in log space. Chi-square and F tails delegate to `statrs`, whose
//! regularized incomplete beta/gamma use continued fractions.

use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};
use statrs::function::{erf, gamma::ln_gamma};

/// Standard normal quantile `Phi^{-1}(p)` for `p` in `(0, 1)`.
///
/// Returns `-inf`/`+inf` at 0 and 1 and NaN outside `[0, 1]`.
pub fn normal_quantile(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((r * 2509.0809287301226727 + 33430.575583588128105) * r
            + 67265.770927008700853)
            * r
            + 45921.953931549871457)
            * r
            + 13731.693765509461125)
            * r
            + 1971.5909503065514427)
            * r
            + 133.14166789178437745)
            * r
            + 3.387132872796366608;
        let den = ((((((r * 5226.495278852545925 + 28729.085735721942674) * r
            + 39307.89580009271061)
            * r
            + 21213.794301586595867)
            * r
            + 5394.1960214247511077)
            * r
            + 687.1870074920579083)
            * r
            + 42.313330701600911252)
            * r
            + 1.0;
        return q * num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r
            + 0.24178072517745061177)
            * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734;
        let den = ((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r
            + 0.0151986665636164571966)
            * r
            + 0.14810397642748007459)
            * r
            + 0.68976733498510000455)
            * r
            + 1.6763848301838038494)
            * r
            + 2.05319162663775882187)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r
            + 0.0012426609473880784386)
            * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772;
        let den = ((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r
            + 1.8463183175100546818e-5)
            * r
            + 7.868691311456132591e-4)
            * r
            + 0.0148753612908506148525)
            * r
            + 0.13692988092273580531)
            * r
            + 0.59983220655588793769)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x / std::f64::consts::SQRT_2)
}

fn ln_binomial_pmf(n: u64, k: u64, ln_p: f64, ln_q: f64) -> f64 {
    let (n_f, k_f) = (n as f64, k as f64);
    ln_gamma(n_f + 1.0) - ln_gamma(k_f + 1.0) - ln_gamma(n_f - k_f + 1.0)
        + k_f * ln_p
        + (n_f - k_f) * ln_q
}

/// Exact upper tail `P(X >= k)` for `X ~ Binomial(n, p)`.
///
/// Caller guarantees `k <= n` and `0 < p < 1`.
pub fn binomial_upper_tail(n: u64, p: f64, k: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let (ln_p, ln_q) = (p.ln(), (-p).ln_1p());
    let mode = ((n as f64 + 1.0) * p).floor() as u64;
    let mut total = 0.0;
    for j in k..=n {
        let term = ln_binomial_pmf(n, j, ln_p, ln_q).exp();
        total += term;
        if j > mode && term < total * 1e-18 {
            break;
        }
    }
    total.min(1.0)
}

/// `P(X > x)` for a chi-square variable with `dof` degrees of freedom.
pub fn chi_squared_sf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(dof).map(|d| d.sf(x)).unwrap_or(f64::NAN)
}

/// `P(F > f)` for an F(d1, d2) variable.
pub fn f_sf(f: f64, d1: f64, d2: f64) -> f64 {
    if f.is_infinite() && f > 0.0 {
        return 0.0;
    }
    if f <= 0.0 {
        return 1.0;
    }
    FisherSnedecor::new(d1, d2).map(|d| d.sf(f)).unwrap_or(f64::NAN)
}

/// Chi-square(1) critical values at the 10%, 5% and 1% levels.
pub const CHI2_1_CRITICAL: [(f64, f64); 3] = [(0.10, 2.706), (0.05, 3.841), (0.01, 6.635)];

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{Binomial, DiscreteCDF, Normal};

    #[test]
    fn quantile_reference_values() {
        let cases = [
            (0.95, 1.6448536269514722),
            (0.975, 1.959963984540054),
            (0.99, 2.3263478740408408),
            (0.999, 3.090232306167813),
            (0.5, 0.0),
        ];
        for (p, z) in cases {
            assert!((normal_quantile(p) - z).abs() < 1e-13, "{p}");
            assert!((normal_quantile(1.0 - p) + z).abs() < 1e-13, "{p}");
        }
    }

    #[test]
    fn quantile_matches_independent_inverse_to_1e9() {
        let n = Normal::new(0.0, 1.0).unwrap();
        for i in 1..2000 {
            let p = i as f64 / 2000.0;
            assert!((normal_quantile(p) - n.inverse_cdf(p)).abs() < 1e-9, "{p}");
        }
        for p in [1e-12, 1e-8, 1e-5, 1.0 - 1e-9] {
            assert!((normal_quantile(p) - n.inverse_cdf(p)).abs() < 1e-8, "{p}");
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for i in 1..100 {
            let p = i as f64 / 100.0;
            assert!((normal_cdf(normal_quantile(p)) - p).abs() < 1e-9, "{p}");
        }
    }

    #[test]
    fn quantile_edges() {
        assert_eq!(normal_quantile(0.0), f64::NEG_INFINITY);
        assert_eq!(normal_quantile(1.0), f64::INFINITY);
        assert!(normal_quantile(1.5).is_nan());
    }

    #[test]
    fn binomial_tail_matches_statrs() {
        let b = Binomial::new(0.05, 413).unwrap();
        for k in 1..60u64 {
            let reference = 1.0 - b.cdf(k - 1);
            assert!((binomial_upper_tail(413, 0.05, k) - reference).abs() < 1e-10, "{k}");
        }
        assert_eq!(binomial_upper_tail(413, 0.05, 0), 1.0);
    }

    #[test]
    fn chi2_critical_values() {
        for (alpha, crit) in CHI2_1_CRITICAL {
            assert!((chi_squared_sf(crit, 1.0) - alpha).abs() < 5e-4, "{alpha}");
        }
    }

    #[test]
    fn f_tail_sanity() {
        assert!((f_sf(1.0, 4.0, 1e9) - chi_squared_sf(4.0, 4.0)).abs() < 1e-6);
        assert_eq!(f_sf(f64::INFINITY, 4.0, 10.0), 0.0);
        assert_eq!(f_sf(0.0, 4.0, 10.0), 1.0);
    }
}
