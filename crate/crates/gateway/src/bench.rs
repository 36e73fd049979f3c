//! Latency bench: a synthetic market ingested through the tick engine, then
//! repeated end-to-end VaR estimates for portfolios of increasing size.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use cryptovar_core::sim::{generate_ticks, FeedSpec, SimConfig, SyntheticMarket};
use cryptovar_core::var::{estimate_var, EngineConfig, LatencyReport, Model, Position, QuoteSource, VarError, VarRequest};
use cryptovar_core::{EpochMillis, Instrument, MINUTE_MS};
use cryptovar_tick::{TickEngine, TickError};

pub struct BenchSetup {
    pub engine: Arc<TickEngine>,
    /// Every product with a live quote, in universe order.
    pub universe: Vec<Instrument>,
    pub as_of: EpochMillis,
}

/// Ingests `days` of one-minute index ticks plus one quote per product at
/// the end. Maturities are laid out from the last day so the whole
/// universe is alive at `as_of`.
pub fn setup(days: u32, seed: u64) -> Result<BenchSetup, TickError> {
    let market = SyntheticMarket::generate(SimConfig {
        days,
        seed,
        anchor_offset_days: days as u64,
        ..SimConfig::default()
    });
    let engine = Arc::new(TickEngine::in_memory());
    let end = market.end();
    let mut spec = FeedSpec::new(market.start(), end);
    spec.index_ticks_per_minute = 1;
    spec.product_interval_ms = 0;
    engine.replay_ticks(generate_ticks(&market, &spec), 50_000, None)?;

    let mut spec = FeedSpec::new(end - MINUTE_MS, end);
    spec.index_ticks_per_minute = 1;
    spec.products = market.instruments().iter().map(|i| i.id.clone()).collect();
    spec.product_interval_ms = MINUTE_MS;
    engine.publish(generate_ticks(&market, &spec))?;

    let as_of = engine.clock().expect("ticks were published") + 1;
    let universe = {
        let latest = engine.latest();
        market
            .instruments()
            .iter()
            .filter(|i| latest.product_quote(&i.id).is_some())
            .cloned()
            .collect()
    };
    Ok(BenchSetup { engine, universe, as_of })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub holdings: usize,
    pub model: Model,
    pub reps: usize,
    /// Stage means over the repetitions.
    pub mean: LatencyReport,
    pub min_total_ms: f64,
    pub max_total_ms: f64,
}

/// Long one contract of each of the first `n` products.
pub fn portfolio(setup: &BenchSetup, n: usize) -> Vec<Position> {
    setup
        .universe
        .iter()
        .take(n.max(1))
        .map(|i| Position {
            pid: "bench".into(),
            instrument: i.clone(),
            quantity: 1.0,
        })
        .collect()
}

pub fn run(
    setup: &BenchSetup,
    holdings: &[usize],
    models: &[Model],
    reps: usize,
    cfg: &EngineConfig,
) -> Result<Vec<BenchRow>, VarError> {
    let reps = reps.max(1);
    let mut rows = Vec::new();
    for &model in models {
        for &n in holdings {
            let positions = portfolio(setup, n);
            let req = VarRequest {
                pid: "bench".into(),
                confidence: 0.99,
                horizon_days: 1.0,
                model,
            };
            let latest = setup.engine.latest().clone();
            // Warm-up fills the inference cache.
            estimate_var(&req, &positions, setup.as_of, &*setup.engine, &latest, cfg)?;
            let mut sum = [0.0f64; 5];
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for _ in 0..reps {
                let r = estimate_var(&req, &positions, setup.as_of, &*setup.engine, &latest, cfg)?;
                let l = r.latency;
                for (s, v) in sum.iter_mut().zip([l.t1_ms, l.t2_ms, l.t3_ms, l.t_epsilon_ms, l.total_ms]) {
                    *s += v;
                }
                lo = lo.min(l.total_ms);
                hi = hi.max(l.total_ms);
            }
            let k = reps as f64;
            rows.push(BenchRow {
                holdings: positions.len(),
                model,
                reps,
                mean: LatencyReport {
                    t1_ms: sum[0] / k,
                    t2_ms: sum[1] / k,
                    t3_ms: sum[2] / k,
                    t_epsilon_ms: sum[3] / k,
                    total_ms: sum[4] / k,
                    space_bytes: None,
                },
                min_total_ms: lo,
                max_total_ms: hi,
            });
        }
    }
    Ok(rows)
}

/// Time to look up the latest quote of `n` products.
pub fn lookup_latency(setup: &BenchSetup, n: usize, reps: usize) -> Duration {
    let ids: Vec<&str> = setup.universe.iter().take(n).map(|i| i.id.as_str()).collect();
    let latest = setup.engine.latest();
    let start = Instant::now();
    let mut found = 0usize;
    for _ in 0..reps.max(1) {
        found += ids.iter().filter(|id| latest.product_quote(id).is_some()).count();
    }
    let el = start.elapsed() / reps.max(1) as u32;
    assert_eq!(found, ids.len() * reps.max(1));
    el
}

pub fn render(rows: &[BenchRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>8} {:>6} {:>5} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "holdings", "model", "reps", "t1_ms", "t2_ms", "t3_ms", "teps_ms", "total_ms", "min_ms", "max_ms"
    );
    for r in rows {
        let m = &r.mean;
        let _ = writeln!(
            out,
            "{:>8} {:>6} {:>5} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>10.3}",
            r.holdings,
            r.model.to_string(),
            r.reps,
            m.t1_ms,
            m.t2_ms,
            m.t3_ms,
            m.t_epsilon_ms,
            m.total_ms,
            r.min_total_ms,
            r.max_total_ms
        );
    }
    out
}
