//! Black-Scholes with zero rates. Prices and greeks are in USD per unit of
//! the underlying; theta is per calendar day.

use crate::market::OptionType;
use crate::stats::normal_cdf;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsQuote {
    pub price: f64,
    pub delta: f64,
    pub gamma: f64,
    pub theta_per_day: f64,
}

fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `t_years <= 0` prices at intrinsic value with a step delta.
pub fn black_scholes(spot: f64, strike: f64, t_years: f64, vol: f64, kind: OptionType) -> BsQuote {
    if t_years <= 0.0 || vol <= 0.0 {
        let (price, delta) = match kind {
            OptionType::Call => ((spot - strike).max(0.0), if spot > strike { 1.0 } else { 0.0 }),
            OptionType::Put => ((strike - spot).max(0.0), if spot < strike { -1.0 } else { 0.0 }),
        };
        return BsQuote {
            price,
            delta,
            gamma: 0.0,
            theta_per_day: 0.0,
        };
    }
    let sd = vol * t_years.sqrt();
    let d1 = ((spot / strike).ln() + 0.5 * sd * sd) / sd;
    let d2 = d1 - sd;
    let gamma = pdf(d1) / (spot * sd);
    let theta_per_day = -spot * pdf(d1) * vol / (2.0 * t_years.sqrt()) / 365.0;
    let (price, delta) = match kind {
        OptionType::Call => (spot * normal_cdf(d1) - strike * normal_cdf(d2), normal_cdf(d1)),
        OptionType::Put => (strike * normal_cdf(-d2) - spot * normal_cdf(-d1), normal_cdf(d1) - 1.0),
    };
    BsQuote {
        price,
        delta,
        gamma,
        theta_per_day,
    }
}
