//! Synthetic market used by tests, benchmarks and the CLI.
//!
//! Index prices follow a one-minute log stochastic-volatility model with
//! correlated innovations across underlyings. Futures mark at the index;
//! options are priced off a fixed smile with Black-Scholes.

mod bs;
mod feed;
mod market;
mod universe;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use bs::{black_scholes, BsQuote};
pub use feed::{generate_ticks, FeedSpec};
pub use market::{SimConfig, SimSnapshot, SyntheticMarket};
pub use universe::{build_universe, Smile, UniverseSpec};

use crate::EpochMillis;

const MINUTES_PER_YEAR: f64 = 365.0 * 1440.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvParams {
    /// Long-run annualized volatility of each index.
    pub annual_vol: f64,
    /// Standard deviation of the stationary log-variance.
    pub vol_of_logvar: f64,
    /// e-folding time of the log-variance, in days.
    pub persistence_days: f64,
    /// Correlation of the return innovations across underlyings.
    pub correlation: f64,
}

impl Default for SvParams {
    fn default() -> Self {
        SvParams {
            annual_vol: 0.45,
            vol_of_logvar: 0.5,
            persistence_days: 3.0,
            correlation: 0.7,
        }
    }
}

/// Simulated one-minute index prices. `prices[u][k]` is the price of
/// underlying `u` at minute `start + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexPaths {
    pub start: EpochMillis,
    pub underlyings: Vec<String>,
    pub prices: Vec<Vec<f64>>,
    /// Per-minute return variance actually used, same layout as `prices`.
    pub variances: Vec<Vec<f64>>,
}

/// Log-SV paths. Innovations are equicorrelated with `params.correlation`;
/// each underlying has its own AR(1) log-variance.
pub fn simulate_index_paths(
    start: EpochMillis,
    minutes: usize,
    spots: &[(String, f64)],
    params: &SvParams,
    seed: u64,
) -> IndexPaths {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = spots.len();
    let phi = (-1.0 / (params.persistence_days * 1440.0)).exp();
    let s = params.vol_of_logvar;
    let eta = s * (1.0 - phi * phi).sqrt();
    let mean_var = params.annual_vol.powi(2) / MINUTES_PER_YEAR;
    let mu = mean_var.ln() - 0.5 * s * s;
    let rho = params.correlation;
    let common_w = rho.max(0.0).sqrt();
    let idio_w = (1.0 - rho.max(0.0)).sqrt();

    let mut h: Vec<f64> = (0..k)
        .map(|_| mu + s * Distribution::<f64>::sample(&StandardNormal, &mut rng))
        .collect();
    let mut logp: Vec<f64> = spots.iter().map(|(_, p)| p.ln()).collect();
    let mut prices = vec![Vec::with_capacity(minutes); k];
    let mut variances = vec![Vec::with_capacity(minutes); k];
    for _ in 0..minutes {
        let common: f64 = StandardNormal.sample(&mut rng);
        for u in 0..k {
            let var = h[u].exp();
            let z = common_w * common + idio_w * Distribution::<f64>::sample(&StandardNormal, &mut rng);
            prices[u].push(logp[u].exp());
            variances[u].push(var);
            logp[u] += var.sqrt() * z - 0.5 * var;
            h[u] = mu + phi * (h[u] - mu) + eta * Distribution::<f64>::sample(&StandardNormal, &mut rng);
        }
    }
    IndexPaths {
        start,
        underlyings: spots.iter().map(|(u, _)| u.clone()).collect(),
        prices,
        variances,
    }
}

/// Gaussian GARCH(1,1) returns started from the unconditional variance.
pub fn garch_path(n: usize, omega: f64, alpha: f64, beta: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = omega / (1.0 - alpha - beta);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let z: f64 = StandardNormal.sample(&mut rng);
        let r = h.sqrt() * z;
        out.push(r);
        h = omega + alpha * r * r + beta * h;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_are_reproducible_and_calibrated() {
        let spots = vec![("BTC".to_string(), 30_000.0), ("ETH".to_string(), 2_000.0)];
        let a = simulate_index_paths(0, 60 * 1440, &spots, &SvParams::default(), 5);
        let b = simulate_index_paths(0, 60 * 1440, &spots, &SvParams::default(), 5);
        assert_eq!(a, b);
        let r: Vec<Vec<f64>> = a
            .prices
            .iter()
            .map(|p| p.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
            .collect();
        let var0 = r[0].iter().map(|x| x * x).sum::<f64>() / r[0].len() as f64;
        let annual = (var0 * MINUTES_PER_YEAR).sqrt();
        assert!(annual > 0.25 && annual < 0.8, "{annual}");
        let cov: f64 = r[0].iter().zip(&r[1]).map(|(x, y)| x * y).sum();
        let corr = cov / (r[0].iter().map(|x| x * x).sum::<f64>() * r[1].iter().map(|x| x * x).sum::<f64>()).sqrt();
        assert!((corr - 0.7).abs() < 0.1, "{corr}");
    }

    #[test]
    fn garch_path_has_unconditional_variance() {
        let r = garch_path(200_000, 1e-6, 0.05, 0.9, 1);
        let v = r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64;
        assert!((v / 2e-5 - 1.0).abs() < 0.1, "{v}");
    }
}
