//! Operation handlers shared by the REST routes, the RPC endpoint and the
//! WebSocket producers.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use serde_json::{json, Value};

use cryptovar_core::market::iso8601;
use cryptovar_core::var::{estimate_var, EngineConfig, LatencyReport, Model, PortfolioBook, VaRResult, VarRequest};
use cryptovar_core::{Instrument, InstrumentKind};
use cryptovar_tick::{TableKind, TickEngine};

use crate::api::{OlhcParams, Operation, VarEstimatePayload};
use crate::error::ApiError;
use crate::snapshot::QuoteSnapshot;

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub var: EngineConfig,
    /// Frames buffered per WebSocket connection before the oldest is dropped.
    pub ws_queue_capacity: usize,
    pub default_cadence_ms: u64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            var: EngineConfig::default(),
            ws_queue_capacity: 256,
            default_cadence_ms: 1_000,
        }
    }
}

pub struct AppState {
    pub engine: Arc<TickEngine>,
    pub book: RwLock<PortfolioBook>,
    pub config: GatewayConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub data: Value,
    pub timings: Option<LatencyReport>,
}

impl From<Value> for Reply {
    fn from(data: Value) -> Self {
        Reply { data, timings: None }
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("response types serialize")
}

impl AppState {
    pub fn new(engine: Arc<TickEngine>, config: GatewayConfig) -> Arc<Self> {
        Arc::new(AppState {
            engine,
            book: RwLock::new(PortfolioBook::new()),
            config,
        })
    }

    /// Runs one operation to completion on the calling thread.
    pub fn execute(&self, op: Operation) -> Result<Reply, ApiError> {
        Ok(match op {
            Operation::Health => self.health().into(),
            Operation::Instruments => self.instruments().into(),
            Operation::ListPortfolios => json!({ "pids": self.book.read().unwrap().pids() }).into(),
            Operation::ListPositions { pid } => {
                let positions = self
                    .book
                    .read()
                    .unwrap()
                    .list(&pid)
                    .ok_or(cryptovar_core::var::VarError::UnknownPortfolio(pid.clone()))?;
                json!({ "pid": pid, "positions": positions }).into()
            }
            Operation::AddPosition { pid, position } => {
                let p = self.book.write().unwrap().add_position(&pid, &position.instrument, position.quantity)?;
                json!({ "pid": pid, "position": p }).into()
            }
            Operation::DeletePosition { pid, instrument } => {
                let p = self.book.write().unwrap().remove_position(&pid, &instrument)?;
                json!({ "pid": pid, "removed": p }).into()
            }
            Operation::VarEstimate(p) => {
                let r = self.estimate(&p)?;
                Reply {
                    timings: Some(r.latency),
                    data: to_value(&r),
                }
            }
            Operation::Olhc(p) => self.olhc(&p).into(),
            Operation::VolSurface { underlying } => self.vol_surface(&underlying).into(),
            Operation::Publish(ticks) => to_value(&self.engine.publish(ticks)?).into(),
        })
    }

    /// VaR of a stored portfolio as of the latest feed time.
    pub fn estimate(&self, p: &VarEstimatePayload) -> Result<VaRResult, ApiError> {
        let model: Model = match &p.model {
            None => Model::default(),
            Some(s) => s.parse().map_err(|e: String| ApiError::BadRequest(e))?,
        };
        if model == Model::ExPost {
            return Err(ApiError::BadRequest("EXPOST is a backtest benchmark, not a forecaster".into()));
        }
        let req = VarRequest {
            pid: p.pid.clone(),
            confidence: p.confidence,
            horizon_days: p.horizon_days,
            model,
        };
        req.validate()?;
        let positions = self
            .book
            .read()
            .unwrap()
            .list(&p.pid)
            .ok_or_else(|| cryptovar_core::var::VarError::UnknownPortfolio(p.pid.clone()))?;
        let clock = self.engine.clock().ok_or(ApiError::NoMarketData)?;
        let quotes = QuoteSnapshot::capture(&self.engine.latest(), &positions);
        // Data strictly before as_of; the newest tick is included.
        let as_of = clock + 1;
        Ok(estimate_var(&req, &positions, as_of, &*self.engine, &quotes, &self.config.var)?)
    }

    pub fn olhc(&self, p: &OlhcParams) -> Value {
        let to = p.to.unwrap_or_else(|| self.engine.clock().map_or(0, |c| c + 1));
        let from = p.from.unwrap_or(to - p.lookback_ms);
        let candles = self.engine.olhc(&p.product, p.interval_ms, from, to);
        let mut v = json!({
            "product": p.product,
            "interval_ms": p.interval_ms,
            "from": iso8601::format(from),
            "to": iso8601::format(to),
            "candles": candles,
        });
        if !self.engine.has_stream(&p.product) {
            v["warning"] = json!(format!("no stream data for {}", p.product));
        }
        v
    }

    pub fn vol_surface(&self, underlying: &str) -> Value {
        let points = self.engine.vol_surface(underlying);
        let mut v = json!({ "underlying": underlying.to_ascii_uppercase(), "points": points });
        if points_empty(&v) {
            v["warning"] = json!(format!("no option quotes with implied vol for {underlying}"));
        }
        v
    }

    /// Quoted products grouped by underlying; options also by maturity.
    pub fn instruments(&self) -> Value {
        let latest = self.engine.latest();
        let mut by_u: BTreeMap<String, (Vec<String>, BTreeMap<String, Vec<String>>)> = BTreeMap::new();
        for id in latest.product_ids() {
            let Ok(inst) = Instrument::parse(&id) else { continue };
            let entry = by_u.entry(inst.underlying.clone()).or_default();
            match inst.kind {
                InstrumentKind::Future => entry.0.push(id),
                InstrumentKind::Option => {
                    let m = inst.maturity.map(|d| d.to_string()).unwrap_or_default();
                    entry.1.entry(m).or_default().push(id);
                }
                InstrumentKind::Index => {}
            }
        }
        for sym in latest.index_symbols() {
            if let Ok(i) = Instrument::parse(&sym) {
                by_u.entry(i.underlying).or_default();
            }
        }
        let groups: Vec<Value> = by_u
            .into_iter()
            .map(|(u, (futures, options))| {
                let index = cryptovar_core::market::index_symbol(&u);
                json!({
                    "underlying": u,
                    "index": index,
                    "index_price": latest.index(&index).map(|q| q.price),
                    "futures": futures,
                    "options": options,
                })
            })
            .collect();
        json!({ "underlyings": groups })
    }

    pub fn health(&self) -> Value {
        // The tickerplant lock is taken before any table lock, never after.
        let next_seq = self.engine.next_seq();
        let tables = self.engine.tables();
        let rows: BTreeMap<&str, usize> = TableKind::ALL
            .iter()
            .map(|k| (k.table_name(), tables.table(*k).len()))
            .collect();
        json!({
            "status": "ok",
            "clock": self.engine.clock().map(iso8601::format),
            "next_seq": next_seq,
            "intraday_rows": rows,
            "late_ticks": tables.late_ticks(),
            "malformed_ticks": tables.malformed(),
            "hdb_dates": self.engine.hdb_dates(),
            "portfolios": self.book.read().unwrap().pids().len(),
        })
    }
}

fn points_empty(v: &Value) -> bool {
    v["points"].as_array().is_none_or(Vec::is_empty)
}

/// Runs an operation on the blocking pool.
pub async fn dispatch(state: Arc<AppState>, op: Operation) -> Result<Reply, ApiError> {
    tokio::task::spawn_blocking(move || state.execute(op))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}
