//! Real-time Value-at-Risk for portfolios of crypto futures and options.
//!
//! The crate is organised along the calculation workflow:
//!
//! - [`market`]: instruments, ticks, minute TWAP bars, log returns and
//!   realized measures. Pure functions, no I/O.
//! - [`vol`]: covariance forecasting for the underlying indices (EWMA,
//!   GARCH(1,1) + DCC, HAR-DRD with an LHARQ variance model).
//! - [`var`]: portfolio book, delta-gamma-theta mapping with per-underlying
//!   compression, central moments, Cornish-Fisher quantiles and the
//!   end-to-end estimator.
//! - [`backtest`]: violation bookkeeping, coverage and independence tests,
//!   and the backtest campaign runner.
//! - [`sim`]: a synthetic stochastic-volatility market used by tests,
//!   benchmarks and the CLI.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise.

pub mod backtest;
pub mod linalg;
pub mod market;
pub mod par;
pub mod sim;
pub mod stats;
pub mod var;
pub mod vol;

pub use market::{Instrument, InstrumentKind, OptionType, ReturnSeries, Tick, TwapBar};
pub use par::Execution;
pub use var::{Model, VaRResult};
pub use vol::CovarianceForecast;

/// Milliseconds since the Unix epoch, UTC.
pub type EpochMillis = i64;

pub const MINUTE_MS: EpochMillis = 60_000;
pub const HOUR_MS: EpochMillis = 60 * MINUTE_MS;
pub const DAY_MS: EpochMillis = 24 * HOUR_MS;
