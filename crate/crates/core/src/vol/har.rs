//! HAR-DRD: LHARQ regressions for 12-hour log realized variance, HAR
//! regressions for realized correlation, recombined as `D^1/2 R D^1/2`.

use serde::{Deserialize, Serialize};

use super::{CovarianceForecast, Model, Result, VolError};
use crate::linalg::{ols_solve, OlsFit};
use crate::market::{log_returns, realized_pair_windows, realized_windows, RealizedPairWindow, RealizedWindow, TwapBar};
use crate::par::Execution;

/// Intercept, leverage, logRV, RQ correction, short and long averages.
pub const LHARQ_REGRESSORS: usize = 6;
/// Intercept, last, short and long averages.
pub const HAR_CORR_REGRESSORS: usize = 4;
/// A fit needs this many rows beyond the number of regressors.
const EXTRA_ROWS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarConfig {
    /// Sampling interval of the intraday returns behind RV.
    pub rv_interval_minutes: u32,
    /// Length of one realized-measure period.
    pub window_minutes: u32,
    pub lookback_days: u32,
    pub short_days: u32,
    pub long_days: u32,
}

impl Default for HarConfig {
    fn default() -> Self {
        HarConfig {
            rv_interval_minutes: 5,
            window_minutes: 720,
            lookback_days: 15,
            short_days: 2,
            long_days: 5,
        }
    }
}

impl HarConfig {
    pub fn periods_per_day(&self) -> f64 {
        1440.0 / self.window_minutes as f64
    }

    fn periods(&self, days: u32) -> usize {
        (days as f64 * self.periods_per_day()).round() as usize
    }

    pub fn short_periods(&self) -> usize {
        self.periods(self.short_days)
    }

    pub fn long_periods(&self) -> usize {
        self.periods(self.long_days)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LharqFit {
    pub sym: String,
    pub fit: OlsFit,
    /// Regressors built from the last period, used for the forecast.
    pub next_row: Vec<f64>,
    /// Forecast of next-period log RV.
    pub forecast_log_rv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarCorrFit {
    pub pair: (String, String),
    pub fit: OlsFit,
    pub next_row: Vec<f64>,
    /// Raw next-period forecast, possibly outside `[-1, 1]`.
    pub forecast: f64,
    /// Mean realized correlation over the long window, the fallback.
    pub long_average: f64,
}

impl HarCorrFit {
    /// Out-of-range forecasts are replaced by the long-window average.
    pub fn bounded_forecast(&self) -> f64 {
        if self.forecast.is_finite() && (-1.0..=1.0).contains(&self.forecast) {
            self.forecast
        } else {
            self.long_average.clamp(-1.0, 1.0)
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn lharq_row(w: &[RealizedWindow], t: usize, short: usize, long: usize) -> Vec<f64> {
    let rv: Vec<f64> = w[t + 1 - long..=t].iter().map(|x| x.rv).collect();
    let cur = &w[t];
    vec![
        1.0,
        cur.log_return.min(0.0),
        cur.rv.ln(),
        (cur.rq.sqrt() * cur.rv).ln(),
        mean(&rv[long - short..]).ln(),
        mean(&rv).ln(),
    ]
}

fn check_rows(rows: usize, regressors: usize) -> Result<()> {
    let needed = regressors + EXTRA_ROWS;
    if rows < needed {
        return Err(VolError::InsufficientData { needed, got: rows });
    }
    Ok(())
}

/// Fits the LHARQ regression on consecutive 12-hour realized windows.
/// Windows with non-positive RV or RQ are dropped before the rows are
/// built; row `t` predicts `logRV_{t+1}`.
pub fn fit_lharq(sym: &str, windows: &[RealizedWindow], cfg: &HarConfig) -> Result<LharqFit> {
    let w: Vec<RealizedWindow> = windows
        .iter()
        .filter(|x| x.rv > 0.0 && x.rq > 0.0 && x.rv.is_finite() && x.rq.is_finite())
        .cloned()
        .collect();
    let (short, long) = (cfg.short_periods(), cfg.long_periods());
    let rows = w.len().saturating_sub(long);
    check_rows(rows, LHARQ_REGRESSORS)?;
    let mut x = Vec::with_capacity(rows);
    let mut y = Vec::with_capacity(rows);
    for t in long - 1..w.len() - 1 {
        x.push(lharq_row(&w, t, short, long));
        y.push(w[t + 1].rv.ln());
    }
    let fit = ols_solve(&x, &y)?;
    let next_row = lharq_row(&w, w.len() - 1, short, long);
    Ok(LharqFit {
        sym: sym.to_string(),
        forecast_log_rv: fit.predict(&next_row),
        fit,
        next_row,
    })
}

fn corr_row(c: &[f64], t: usize, short: usize, long: usize) -> Vec<f64> {
    let hist = &c[t + 1 - long..=t];
    vec![1.0, c[t], mean(&hist[long - short..]), mean(hist)]
}

/// HAR regression on untransformed realized correlations.
pub fn fit_har_corr(pair: (&str, &str), windows: &[RealizedPairWindow], cfg: &HarConfig) -> Result<HarCorrFit> {
    let c: Vec<f64> = windows.iter().filter_map(|w| w.rcorr).collect();
    let (short, long) = (cfg.short_periods(), cfg.long_periods());
    let rows = c.len().saturating_sub(long);
    check_rows(rows, HAR_CORR_REGRESSORS)?;
    let mut x = Vec::with_capacity(rows);
    let mut y = Vec::with_capacity(rows);
    for t in long - 1..c.len() - 1 {
        x.push(corr_row(&c, t, short, long));
        y.push(c[t + 1]);
    }
    let fit = ols_solve(&x, &y)?;
    let next_row = corr_row(&c, c.len() - 1, short, long);
    Ok(HarCorrFit {
        pair: (pair.0.to_string(), pair.1.to_string()),
        forecast: fit.predict(&next_row),
        long_average: next_row[3],
        fit,
        next_row,
    })
}

/// Composes the forecast from per-sym realized windows and per-pair
/// realized correlation windows. `pairs[k]` holds the windows for
/// `(i, j)` in row-major upper-triangle order: (0,1), (0,2), ..., (1,2), ...
pub fn har_forecast_from_realized(
    syms: &[String],
    variance_windows: &[Vec<RealizedWindow>],
    pair_windows: &[Vec<RealizedPairWindow>],
    horizon_days: f64,
    cfg: &HarConfig,
    exec: Execution,
) -> Result<CovarianceForecast> {
    let n = syms.len();
    if variance_windows.len() != n || pair_windows.len() != n * (n.saturating_sub(1)) / 2 {
        return Err(VolError::Contract("realized inputs do not match syms".into()));
    }
    let idx: Vec<usize> = (0..n).collect();
    let var_fits: Vec<LharqFit> = exec
        .map(&idx, |&i| fit_lharq(&syms[i], &variance_windows[i], cfg))
        .into_iter()
        .collect::<Result<_>>()?;
    let periods = cfg.periods_per_day() * horizon_days;
    let var: Vec<f64> = var_fits.iter().map(|f| f.forecast_log_rv.exp() * periods).collect();

    let mut m = vec![vec![0.0; n]; n];
    let mut k = 0;
    for i in 0..n {
        m[i][i] = var[i];
        for j in i + 1..n {
            let rho = fit_har_corr((&syms[i], &syms[j]), &pair_windows[k], cfg)?.bounded_forecast();
            let v = rho * (var[i] * var[j]).sqrt();
            m[i][j] = v;
            m[j][i] = v;
            k += 1;
        }
    }
    CovarianceForecast::new(syms.to_vec(), m, horizon_days, Model::Har)
}

/// Full HAR-DRD path from 1-minute TWAP bars per sym.
pub fn har_forecast_covariance(
    syms: &[String],
    bars: &[Vec<TwapBar>],
    horizon_days: f64,
    cfg: &HarConfig,
    exec: Execution,
) -> Result<CovarianceForecast> {
    if syms.len() != bars.len() {
        return Err(VolError::Contract("one bar series per sym".into()));
    }
    let idx: Vec<usize> = (0..syms.len()).collect();
    let returns = exec
        .map(&idx, |&i| log_returns(&bars[i], cfg.rv_interval_minutes))
        .into_iter()
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let windows = exec
        .map(&returns, |r| realized_windows(r, cfg.window_minutes))
        .into_iter()
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut pairs = Vec::new();
    for i in 0..returns.len() {
        for j in i + 1..returns.len() {
            pairs.push(realized_pair_windows(&returns[i], &returns[j], cfg.window_minutes)?);
        }
    }
    har_forecast_from_realized(syms, &windows, &pairs, horizon_days, cfg, exec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{DAY_MS, HOUR_MS};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn windows_from(rv: &[f64], rq: &[f64], r: &[f64]) -> Vec<RealizedWindow> {
        (0..rv.len())
            .map(|i| RealizedWindow {
                sym: "btc_usd".into(),
                window_minutes: 720,
                end_time: (i as i64 + 1) * 12 * HOUR_MS,
                rv: rv[i],
                rq: rq[i],
                log_return: r[i],
            })
            .collect()
    }

    fn corr_windows(c: &[f64]) -> Vec<RealizedPairWindow> {
        c.iter()
            .enumerate()
            .map(|(i, &v)| RealizedPairWindow {
                syms: ("a".into(), "b".into()),
                window_minutes: 720,
                end_time: (i as i64 + 1) * 12 * HOUR_MS,
                rcov: v,
                rcorr: Some(v),
            })
            .collect()
    }

    #[test]
    fn constant_rv_gives_constant_forecast() {
        let n = 30;
        let rv = vec![4e-4; n];
        let rq = vec![2e-7; n];
        let r: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 0.01 } else { -0.012 + i as f64 * 1e-4 }).collect();
        let fit = fit_lharq("BTC", &windows_from(&rv, &rq, &r), &HarConfig::default()).unwrap();
        let b = &fit.fit.coefficients;
        assert!((b[0] - 4e-4f64.ln()).abs() < 1e-9, "{b:?}");
        for v in &b[2..] {
            assert!(v.abs() < 1e-9);
        }
        assert!((fit.forecast_log_rv - 4e-4f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn leverage_regressor_is_zero_for_gains() {
        let w = windows_from(&[1e-4; 10], &[1e-8; 10], &[0.02; 10]);
        assert_eq!(lharq_row(&w, 9, 4, 10)[1], 0.0);
        let w = windows_from(&[1e-4; 10], &[1e-8; 10], &[-0.02; 10]);
        assert_eq!(lharq_row(&w, 9, 4, 10)[1], -0.02);
    }

    #[test]
    fn averages_span_two_and_five_days() {
        let rv: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let w = windows_from(&rv, &[1.0; 10], &[0.0; 10]);
        let row = lharq_row(&w, 9, 4, 10);
        assert!((row[4] - 8.5f64.ln()).abs() < 1e-15);
        assert!((row[5] - 5.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn recovers_coefficients_within_three_standard_errors() {
        let beta = [0.1, -0.5, 0.4, 0.05, 0.2, 0.1];
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let cfg = HarConfig::default();
        let n = 510;
        let mut log_rv = vec![-8.0; 10];
        let mut rq_mult: Vec<f64> = vec![1.0; 10];
        let mut ret: Vec<f64> = vec![0.0; 10];
        for _ in 10..n {
            rq_mult.push(rng.random_range(0.5..3.0));
            ret.push(rng.random_range(-0.05..0.05));
            let t = log_rv.len() - 1;
            let rv: Vec<f64> = log_rv[t - 9..=t].iter().map(|v: &f64| v.exp()).collect();
            let x = [
                1.0,
                ret[t].min(0.0),
                log_rv[t],
                (rq_mult[t].sqrt() * rv[9] * rv[9]).ln(),
                mean(&rv[6..]).ln(),
                mean(&rv).ln(),
            ];
            let next: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + noise.sample(&mut rng);
            log_rv.push(next);
        }
        // RQ chosen so that sqrt(RQ) * RV = sqrt(rq_mult) * RV^2.
        let rv: Vec<f64> = log_rv.iter().map(|v| v.exp()).collect();
        let rq: Vec<f64> = rv.iter().zip(&rq_mult).map(|(v, m)| m * v * v).collect();
        let w = windows_from(&rv, &rq, &ret);
        let fit = fit_lharq("BTC", &w, &cfg).unwrap();
        for (k, (b, se)) in fit.fit.coefficients.iter().zip(&fit.fit.std_errors).enumerate() {
            assert!((b - beta[k]).abs() < 3.0 * se, "beta{k}: {b} vs {} (se {se})", beta[k]);
        }
    }

    #[test]
    fn correlation_constant_forecasts_constant() {
        let c = vec![0.63; 30];
        let fit = fit_har_corr(("a", "b"), &corr_windows(&c), &HarConfig::default()).unwrap();
        assert!((fit.bounded_forecast() - 0.63).abs() < 1e-12);
    }

    #[test]
    fn correlation_ar1_persistence() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let mut c = vec![0.5];
        for _ in 0..600 {
            let prev = *c.last().unwrap();
            c.push(0.1 + 0.8 * prev + noise.sample(&mut rng));
        }
        let fit = fit_har_corr(("a", "b"), &corr_windows(&c), &HarConfig::default()).unwrap();
        let (b1, se1) = (fit.fit.coefficients[1], fit.fit.std_errors[1]);
        // The AR(1) truth has zero weight on the averages.
        assert!((b1 - 0.8).abs() < 3.0 * se1, "{b1} {se1}");
        assert!(fit.fit.coefficients[2].abs() < 3.0 * fit.fit.std_errors[2]);
        assert!(fit.fit.coefficients[3].abs() < 3.0 * fit.fit.std_errors[3]);
    }

    #[test]
    fn too_few_rows() {
        let c = vec![0.5, 0.6, 0.7];
        assert!(matches!(
            fit_har_corr(("a", "b"), &corr_windows(&c), &HarConfig::default()),
            Err(VolError::InsufficientData { .. })
        ));
    }

    #[test]
    fn out_of_range_forecast_falls_back_to_long_average() {
        let mut c: Vec<f64> = (0..30).map(|i| 0.3 + 0.02 * i as f64).collect();
        c[29] = 0.99;
        let fit = HarCorrFit {
            pair: ("a".into(), "b".into()),
            fit: ols_solve(&[vec![1.0], vec![1.0]], &[1.0, 1.0]).unwrap(),
            next_row: vec![],
            forecast: 1.3,
            long_average: mean(&c[20..]),
        };
        assert_eq!(fit.bounded_forecast(), mean(&c[20..]));
    }

    fn bars_for(prices: &[f64], sym: &str) -> Vec<TwapBar> {
        prices
            .iter()
            .enumerate()
            .map(|(i, &p)| TwapBar::new(sym, i as i64 * 60_000, p, 1))
            .collect()
    }

    fn random_walk(seed: u64, days: i64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 0.0008).unwrap();
        let mut p = 100.0f64;
        (0..days * DAY_MS / 60_000)
            .map(|_| {
                p *= f64::exp(n.sample(&mut rng));
                p
            })
            .collect()
    }

    #[test]
    fn single_sym_is_scaled_exp_forecast() {
        let p = random_walk(1, 15);
        let cfg = HarConfig::default();
        let bars = vec![bars_for(&p, "btc_usd")];
        let f = har_forecast_covariance(&["BTC".into()], &bars, 1.0, &cfg, Execution::Sequential).unwrap();
        let r = log_returns(&bars[0], 5).unwrap();
        let fit = fit_lharq("BTC", &realized_windows(&r, 720).unwrap(), &cfg).unwrap();
        assert_eq!(f.matrix.len(), 1);
        assert!((f.matrix[0][0] - fit.forecast_log_rv.exp() * 2.0).abs() < 1e-18);
        let f2 = har_forecast_covariance(&["BTC".into()], &bars, 2.0, &cfg, Execution::Sequential).unwrap();
        assert!((f2.matrix[0][0] - 2.0 * f.matrix[0][0]).abs() < 1e-15 * f2.matrix[0][0]);
    }

    #[test]
    fn identical_series_are_rank_one() {
        let p = random_walk(2, 15);
        let bars = vec![bars_for(&p, "btc_usd"), bars_for(&p, "eth_usd")];
        let f = har_forecast_covariance(
            &["BTC".into(), "ETH".into()],
            &bars,
            1.0,
            &HarConfig::default(),
            Execution::Sequential,
        )
        .unwrap();
        assert!((f.correlation(0, 1).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn correlations_stay_in_range_and_psd() {
        for seed in 0..5 {
            let a = random_walk(10 + seed, 15);
            let b = random_walk(20 + seed, 15);
            let mixed: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x * y).sqrt()).collect();
            let bars = vec![bars_for(&a, "x"), bars_for(&mixed, "y")];
            let f = har_forecast_covariance(
                &["A".into(), "B".into()],
                &bars,
                1.0,
                &HarConfig::default(),
                Execution::Sequential,
            )
            .unwrap();
            let rho = f.correlation(0, 1).unwrap();
            assert!((-1.0..=1.0).contains(&rho));
            assert!(crate::linalg::symmetric_eigenvalues(&f.matrix)[0] >= -1e-10 * f.matrix[0][0]);
        }
    }

    #[test]
    fn residuals_are_orthogonal_to_regressors() {
        let p = random_walk(3, 15);
        let r = log_returns(&bars_for(&p, "x"), 5).unwrap();
        let w = realized_windows(&r, 720).unwrap();
        let cfg = HarConfig::default();
        let fit = fit_lharq("X", &w, &cfg).unwrap();
        let rows: Vec<Vec<f64>> = (9..w.len() - 1).map(|t| lharq_row(&w, t, 4, 10)).collect();
        for j in 0..LHARQ_REGRESSORS {
            let g: f64 = rows.iter().zip(&fit.fit.residuals).map(|(x, e)| x[j] * e).sum();
            assert!(g.abs() < 1e-8, "{j}: {g}");
        }
    }
}
