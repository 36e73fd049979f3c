//! End-to-end estimator: positions, inference, mapping, transformation.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::mapping::{extract_indices, map_portfolio, MappedCoefficients};
use super::moments::{central_moments, cornish_fisher_z, validity_check, Moments};
use super::{Position, QuoteSource, Result, TwapSource, VarError};
use crate::market::{log_returns, TwapBar};
use crate::par::Execution;
use crate::stats::normal_quantile;
use crate::vol::{
    ewma_covariance_matrix, garch_dcc_covariance, har_forecast_covariance, CovarianceForecast, EwmaParams, GarchDist,
    HarConfig, Model,
};
use crate::{EpochMillis, DAY_MS, MINUTE_MS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub ewma: EwmaParams,
    pub har: HarConfig,
    pub garch_dist: GarchDist,
    /// Quotes older than this relative to `as_of` count as stale.
    pub stale_after_ms: EpochMillis,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            ewma: EwmaParams::default(),
            har: HarConfig::default(),
            garch_dist: GarchDist::StudentT,
            stale_after_ms: 60_000,
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarRequest {
    pub pid: String,
    /// VaR level, e.g. 0.99.
    pub confidence: f64,
    pub horizon_days: f64,
    #[serde(default)]
    pub model: Model,
}

impl VarRequest {
    pub fn validate(&self) -> Result<()> {
        if !(self.confidence > 0.5 && self.confidence < 1.0) {
            return Err(VarError::Validation(format!("confidence {} outside (0.5, 1)", self.confidence)));
        }
        if !(self.horizon_days > 0.0 && self.horizon_days.is_finite()) {
            return Err(VarError::Validation(format!("horizon {} must be positive", self.horizon_days)));
        }
        Ok(())
    }
}

/// Stage timings in milliseconds from a monotonic clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct LatencyReport {
    /// Inference, including data sourcing.
    pub t1_ms: f64,
    /// Mapping, including the snapshot read.
    pub t2_ms: f64,
    /// Transformation.
    pub t3_ms: f64,
    pub t_epsilon_ms: f64,
    pub total_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space_bytes: Option<u64>,
}

impl LatencyReport {
    fn from_parts(t1: f64, t2: f64, t3: f64, total: f64) -> Self {
        LatencyReport {
            t1_ms: t1,
            t2_ms: t2,
            t3_ms: t3,
            t_epsilon_ms: (total - t1 - t2 - t3).max(0.0),
            total_ms: total.max(t1 + t2 + t3),
            space_bytes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transformation {
    pub moments: Moments,
    pub z_alpha: f64,
    pub z_cf: f64,
    pub q_return: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaRResult {
    pub pid: String,
    pub as_of: EpochMillis,
    pub confidence: f64,
    pub horizon_days: f64,
    pub model: Model,
    pub syms: Vec<String>,
    pub z_alpha: f64,
    pub z_cf: f64,
    /// Return quantile `mu1 + sigma_v z_cf`.
    pub q_return: f64,
    /// `q_return * portfolio_value`, USD. Negative for a loss.
    pub var_value: f64,
    pub portfolio_value: f64,
    pub moments: Moments,
    /// Cornish-Fisher monotonicity condition; a warning, not a failure.
    pub valid: bool,
    pub psd_adjusted: bool,
    pub covariance: CovarianceForecast,
    pub latency: LatencyReport,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn bars_for(twaps: &dyn TwapSource, syms: &[String], from: EpochMillis, to: EpochMillis) -> Result<Vec<Vec<TwapBar>>> {
    syms.iter()
        .map(|s| twaps.index_bars(s, from, to).map_err(VarError::from))
        .collect()
}

/// Inference step: covariance of the `syms` index returns over the horizon,
/// using data strictly before `as_of`.
pub fn forecast_covariance(
    model: Model,
    syms: &[String],
    as_of: EpochMillis,
    horizon_days: f64,
    twaps: &dyn TwapSource,
    cfg: &EngineConfig,
) -> Result<CovarianceForecast> {
    match model {
        Model::Ewma | Model::Garch => {
            let interval = cfg.ewma.bar_interval_minutes;
            // One extra bar so the lookback holds a full set of returns.
            let from = as_of - cfg.ewma.lookback_days as EpochMillis * DAY_MS - interval as EpochMillis * MINUTE_MS;
            let bars = bars_for(twaps, syms, from, as_of)?;
            let returns = bars
                .iter()
                .map(|b| log_returns(b, interval))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(crate::vol::VolError::from)?;
            Ok(if model == Model::Ewma {
                ewma_covariance_matrix(syms, &returns, &cfg.ewma, horizon_days)?
            } else {
                garch_dcc_covariance(syms, &returns, cfg.garch_dist, horizon_days, cfg.exec)?
            })
        }
        Model::Har => {
            let from = as_of - cfg.har.lookback_days as EpochMillis * DAY_MS;
            let bars = bars_for(twaps, syms, from, as_of)?;
            Ok(har_forecast_covariance(syms, &bars, horizon_days, &cfg.har, cfg.exec)?)
        }
        Model::ExPost => Err(VarError::Validation(
            "the ex-post benchmark is computed from realized data, not forecast".into(),
        )),
    }
}

/// Transformation step: moments, Cornish-Fisher quantile, return quantile.
pub fn transform(coeffs: &MappedCoefficients, sigma: &CovarianceForecast, confidence: f64) -> Result<Transformation> {
    let moments = central_moments(coeffs, sigma)?;
    let z_alpha = normal_quantile(1.0 - confidence);
    let z_cf = cornish_fisher_z(z_alpha, moments.skew, moments.kurt);
    Ok(Transformation {
        z_alpha,
        z_cf,
        q_return: moments.mu1 + moments.sigma_v * z_cf,
        valid: validity_check(moments.skew, moments.kurt - 3.0),
        moments,
    })
}

fn check_positions(req: &VarRequest, positions: &[Position]) -> Result<()> {
    req.validate()?;
    if positions.is_empty() {
        return Err(VarError::DegeneratePortfolio(format!("portfolio {} holds no positions", req.pid)));
    }
    Ok(())
}

fn assemble(
    req: &VarRequest,
    as_of: EpochMillis,
    coeffs: &MappedCoefficients,
    sigma: CovarianceForecast,
    tr: Transformation,
    latency: LatencyReport,
) -> VaRResult {
    VaRResult {
        pid: req.pid.clone(),
        as_of,
        confidence: req.confidence,
        horizon_days: req.horizon_days,
        model: sigma.model,
        syms: coeffs.syms.clone(),
        z_alpha: tr.z_alpha,
        z_cf: tr.z_cf,
        q_return: tr.q_return,
        var_value: tr.q_return * coeffs.portfolio_value,
        portfolio_value: coeffs.portfolio_value,
        moments: tr.moments,
        valid: tr.valid,
        psd_adjusted: sigma.psd_adjusted,
        covariance: sigma,
        latency,
    }
}

/// Full workflow: extract the underlyings, forecast their covariance,
/// map the book onto them and transform to a quantile.
pub fn estimate_var(
    req: &VarRequest,
    positions: &[Position],
    as_of: EpochMillis,
    twaps: &dyn TwapSource,
    quotes: &dyn QuoteSource,
    cfg: &EngineConfig,
) -> Result<VaRResult> {
    let t0 = Instant::now();
    check_positions(req, positions)?;
    let syms = extract_indices(positions);

    let t = Instant::now();
    let sigma = forecast_covariance(req.model, &syms, as_of, req.horizon_days, twaps, cfg)?;
    let t1 = ms(t);

    let t = Instant::now();
    let coeffs = map_portfolio(positions, quotes, as_of, req.horizon_days, cfg.stale_after_ms)?;
    let t2 = ms(t);

    let t = Instant::now();
    let tr = transform(&coeffs, &sigma, req.confidence)?;
    let t3 = ms(t);

    let latency = LatencyReport::from_parts(t1, t2, t3, ms(t0));
    Ok(assemble(req, as_of, &coeffs, sigma, tr, latency))
}

/// Same workflow with the covariance supplied by the caller (ex-post
/// benchmarks, fixed-covariance checks). `t1` is zero.
pub fn estimate_var_with_forecast(
    req: &VarRequest,
    positions: &[Position],
    as_of: EpochMillis,
    sigma: &CovarianceForecast,
    quotes: &dyn QuoteSource,
    cfg: &EngineConfig,
) -> Result<VaRResult> {
    let t0 = Instant::now();
    check_positions(req, positions)?;
    let t = Instant::now();
    let coeffs = map_portfolio(positions, quotes, as_of, req.horizon_days, cfg.stale_after_ms)?;
    let t2 = ms(t);
    let t = Instant::now();
    let tr = transform(&coeffs, sigma, req.confidence)?;
    let t3 = ms(t);
    let latency = LatencyReport::from_parts(0.0, t2, t3, ms(t0));
    Ok(assemble(req, as_of, &coeffs, sigma.clone(), tr, latency))
}
