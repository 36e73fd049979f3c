//! The tick engine: tickerplant, live tables, HDB and inference cache
//! behind one handle that can be shared across threads.

use std::path::PathBuf;
use std::sync::atomic::{AtomicI64, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard};
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use cryptovar_core::market::index_symbol;
use cryptovar_core::var::{MarkHistory, SourceError, TwapSource};
use cryptovar_core::{EpochMillis, Instrument, InstrumentKind, Tick, TwapBar, DAY_MS, MINUTE_MS};

use crate::cache::InferenceCache;
use crate::codec::FeedRecord;
use crate::error::{Result, TickError};
use crate::hdb::{date_of, day_start, Hdb};
use crate::latest::LatestCache;
use crate::recovery::{read_log, truncate_log, RecoveryLog};
use crate::stream::{vol_surface, Olhc, StreamStore, SurfacePoint, DEFAULT_STREAM_HORIZON_MS};
use crate::tables::{TableKind, TwapTables};
use crate::tickerplant::{Ack, Subscriber, Tickerplant};

#[derive(Debug, Clone)]
pub struct EngineOptions {
    /// Recovery log; replayed on open, then appended to.
    pub log_path: Option<PathBuf>,
    pub fsync: bool,
    pub hdb_root: Option<PathBuf>,
    pub stream_horizon_ms: EpochMillis,
    /// Serve inference reads through the window cache.
    pub use_cache: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            log_path: None,
            fsync: false,
            hdb_root: None,
            stream_horizon_ms: DEFAULT_STREAM_HORIZON_MS,
            use_cache: true,
        }
    }
}

impl EngineOptions {
    /// Log at `<root>/tp.log`, HDB under `<root>/hdb`.
    pub fn under(root: impl Into<PathBuf>) -> Self {
        let root = root.into();
        EngineOptions {
            log_path: Some(root.join("tp.log")),
            hdb_root: Some(root.join("hdb")),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryStats {
    /// Day-sized reads against the HDB or the intraday tables.
    pub backing_reads: u64,
    pub queries: u64,
    pub cache_hits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistReport {
    pub date: NaiveDate,
    pub rows_written: u64,
    /// Intraday bars released from memory.
    pub released: usize,
}

pub struct TickEngine {
    plant: Mutex<Tickerplant>,
    tables: Arc<RwLock<TwapTables>>,
    latest: Arc<RwLock<LatestCache>>,
    stream: Arc<RwLock<StreamStore>>,
    clock: Arc<AtomicI64>,
    hdb: Option<Hdb>,
    hdb_dates: RwLock<Vec<NaiveDate>>,
    cache: Mutex<InferenceCache>,
    use_cache: bool,
    backing_reads: AtomicU64,
    queries: AtomicU64,
}

const REPLAY_CHUNK: usize = 10_000;

impl TickEngine {
    /// In-memory engine without log or HDB.
    pub fn in_memory() -> Self {
        Self::open(EngineOptions::default()).expect("no I/O involved")
    }

    /// Opens the HDB, replays the recovery log into the live tables and
    /// then starts appending to it. Days already in the HDB are skipped.
    pub fn open(opts: EngineOptions) -> Result<Self> {
        let hdb = opts.hdb_root.as_ref().map(Hdb::open).transpose()?;
        let dates = match &hdb {
            Some(h) => h.dates()?,
            None => Vec::new(),
        };
        let mut tables = TwapTables::new();
        if let Some(last) = dates.last() {
            tables.release_before(day_start(*last) + DAY_MS);
        }
        let engine = TickEngine {
            plant: Mutex::new(Tickerplant::new(None)),
            tables: Arc::new(RwLock::new(tables)),
            latest: Arc::new(RwLock::new(LatestCache::new())),
            stream: Arc::new(RwLock::new(StreamStore::new(opts.stream_horizon_ms))),
            clock: Arc::new(AtomicI64::new(EpochMillis::MIN)),
            hdb,
            hdb_dates: RwLock::new(dates),
            cache: Mutex::new(InferenceCache::new()),
            use_cache: opts.use_cache,
            backing_reads: AtomicU64::new(0),
            queries: AtomicU64::new(0),
        };
        engine.wire();
        if let Some(path) = &opts.log_path {
            let replay = read_log(path)?;
            if replay.torn_tail {
                truncate_log(path, replay.valid_bytes)?;
            }
            engine.redeliver(&replay.records);
            if !replay.records.is_empty() {
                log::info!("replayed {} records from {}", replay.records.len(), path.display());
            }
            engine.plant.lock().unwrap().attach_log(RecoveryLog::open(path, opts.fsync)?);
        }
        Ok(engine)
    }

    fn wire(&self) {
        let mut plant = self.plant.lock().unwrap();
        let (tables, latest, stream, clock) =
            (self.tables.clone(), self.latest.clone(), self.stream.clone(), self.clock.clone());
        plant.subscribe("twap", Box::new(move |b: &[FeedRecord]| tables.write().unwrap().apply_batch(b)));
        plant.subscribe("latest", Box::new(move |b: &[FeedRecord]| latest.write().unwrap().apply_batch(b)));
        plant.subscribe("stream", Box::new(move |b: &[FeedRecord]| stream.write().unwrap().apply_batch(b)));
        plant.subscribe(
            "clock",
            Box::new(move |b: &[FeedRecord]| {
                if let Some(t) = b.iter().map(|r| r.tick.time).max() {
                    clock.fetch_max(t, Ordering::Relaxed);
                }
            }),
        );
    }

    fn redeliver(&self, records: &[FeedRecord]) {
        let mut plant = self.plant.lock().unwrap();
        for chunk in records.chunks(REPLAY_CHUNK) {
            plant.redeliver(chunk);
        }
    }

    /// Logs and applies a batch. Rejected as a whole if the log write fails.
    pub fn publish(&self, ticks: Vec<Tick>) -> Result<Ack> {
        self.plant.lock().unwrap().publish(ticks)
    }

    /// Adds an external subscriber that sees every later batch.
    pub fn subscribe(&self, name: impl Into<String>, s: Box<dyn Subscriber>) {
        self.plant.lock().unwrap().subscribe(name, s);
    }

    pub fn unsubscribe(&self, name: &str) -> bool {
        self.plant.lock().unwrap().unsubscribe(name)
    }

    /// Rebuilds state from a log file (the engine should be fresh).
    pub fn replay_from_log(&self, path: &std::path::Path) -> Result<usize> {
        let replay = read_log(path)?;
        self.redeliver(&replay.records);
        Ok(replay.records.len())
    }

    /// Publishes `ticks` in batches of `batch`. With `speed`, waits between
    /// batches so feed time runs at `speed` times wall time.
    pub fn replay_ticks(&self, ticks: impl IntoIterator<Item = Tick>, batch: usize, speed: Option<f64>) -> Result<u64> {
        let batch = batch.max(1);
        let started = Instant::now();
        let mut first_time: Option<EpochMillis> = None;
        let mut n = 0u64;
        let mut pending = Vec::with_capacity(batch);
        let mut flush = |pending: &mut Vec<Tick>, first_time: Option<EpochMillis>| -> Result<()> {
            if let (Some(speed), Some(t0), Some(last)) = (speed, first_time, pending.last()) {
                let due = Duration::from_secs_f64(((last.time - t0).max(0) as f64 / 1000.0) / speed.max(1e-9));
                if let Some(wait) = due.checked_sub(started.elapsed()) {
                    std::thread::sleep(wait);
                }
            }
            n += pending.len() as u64;
            self.publish(std::mem::take(pending))?;
            Ok(())
        };
        for t in ticks {
            first_time.get_or_insert(t.time);
            pending.push(t);
            if pending.len() == batch {
                flush(&mut pending, first_time)?;
            }
        }
        if !pending.is_empty() {
            flush(&mut pending, first_time)?;
        }
        Ok(n)
    }

    /// Latest feed time seen.
    pub fn clock(&self) -> Option<EpochMillis> {
        let c = self.clock.load(Ordering::Relaxed);
        (c != EpochMillis::MIN).then_some(c)
    }

    pub fn next_seq(&self) -> u64 {
        self.plant.lock().unwrap().next_seq()
    }

    pub fn latest(&self) -> RwLockReadGuard<'_, LatestCache> {
        self.latest.read().unwrap()
    }

    pub fn tables(&self) -> RwLockReadGuard<'_, TwapTables> {
        self.tables.read().unwrap()
    }

    pub fn hdb(&self) -> Option<&Hdb> {
        self.hdb.as_ref()
    }

    pub fn hdb_dates(&self) -> Vec<NaiveDate> {
        self.hdb_dates.read().unwrap().clone()
    }

    /// Every intraday bar of one table, sorted by symbol then minute.
    pub fn intraday_rows(&self, kind: TableKind) -> Vec<TwapBar> {
        self.tables().table(kind).rows_between(EpochMillis::MIN, EpochMillis::MAX)
    }

    pub fn olhc(&self, product: &str, interval: EpochMillis, from: EpochMillis, to: EpochMillis) -> Vec<Olhc> {
        self.stream.read().unwrap().olhc(product, interval, from, to)
    }

    /// Whether the streaming store holds rows for `product`.
    pub fn has_stream(&self, product: &str) -> bool {
        self.stream.read().unwrap().contains(product)
    }

    pub fn vol_surface(&self, underlying: &str) -> Vec<SurfacePoint> {
        let now = self.clock().unwrap_or(0);
        vol_surface(&self.latest(), underlying, now)
    }

    pub fn stats(&self) -> QueryStats {
        QueryStats {
            backing_reads: self.backing_reads.load(Ordering::Relaxed),
            queries: self.queries.load(Ordering::Relaxed),
            cache_hits: self.cache.lock().unwrap().hits(),
        }
    }

    pub fn reset_stats(&self) {
        self.backing_reads.store(0, Ordering::Relaxed);
        self.queries.store(0, Ordering::Relaxed);
    }

    /// First and one-past-last minute of stored data (HDB or intraday).
    fn stored_span(&self, kind: TableKind) -> Option<(EpochMillis, EpochMillis)> {
        let dates = self.hdb_dates.read().unwrap();
        let tables = self.tables();
        let t = tables.table(kind);
        let lo = [dates.first().map(|d| day_start(*d)), t.first_minute()].into_iter().flatten().min()?;
        let hi = [dates.last().map(|d| day_start(*d) + DAY_MS), t.last_minute().map(|m| m + MINUTE_MS)]
            .into_iter()
            .flatten()
            .max()?;
        Some((lo, hi))
    }

    /// Bars of `sym` in `[from, to)` read straight from the backing stores,
    /// one read per calendar day touched.
    pub fn query_twap(&self, kind: TableKind, sym: &str, from: EpochMillis, to: EpochMillis) -> Result<Vec<TwapBar>> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        self.read_days(kind, sym, from, to)
    }

    fn read_days(&self, kind: TableKind, sym: &str, from: EpochMillis, to: EpochMillis) -> Result<Vec<TwapBar>> {
        let Some((lo, hi)) = self.stored_span(kind) else {
            return Ok(Vec::new());
        };
        let (from, to) = (from.max(lo), to.min(hi));
        let mut out = Vec::new();
        let mut day = from.div_euclid(DAY_MS) * DAY_MS;
        while day < to {
            let (a, b) = (from.max(day), to.min(day + DAY_MS));
            self.backing_reads.fetch_add(1, Ordering::Relaxed);
            let floor = self.tables().table(kind).floor();
            if day < floor {
                if let Some(h) = &self.hdb {
                    out.extend(h.read_range(date_of(day), kind, sym, a, b)?);
                }
            } else {
                out.extend(self.tables().table(kind).range(sym, a, b));
            }
            day += DAY_MS;
        }
        Ok(out)
    }

    /// Like [`query_twap`](Self::query_twap) but through the window cache.
    pub fn cached_window(&self, kind: TableKind, sym: &str, from: EpochMillis, to: EpochMillis) -> Result<Vec<TwapBar>> {
        if !self.use_cache {
            return self.query_twap(kind, sym, from, to);
        }
        self.queries.fetch_add(1, Ordering::Relaxed);
        let sealed = {
            let tables = self.tables();
            let t = tables.table(kind);
            t.open_minute(sym).unwrap_or(t.floor())
        };
        let key = format!("{}/{sym}", kind.table_name());
        self.cache
            .lock()
            .unwrap()
            .get(&key, from, to, sealed, |a, b| self.read_days(kind, sym, a, b))
    }

    /// Moves every intraday day up to and including `date` into the HDB and
    /// releases it from memory. Fails unless the feed clock has passed the
    /// end of `date`. Persisting a day twice leaves the partition unchanged.
    pub fn persist_eod(&self, date: NaiveDate) -> Result<Vec<PersistReport>> {
        let end = day_start(date) + DAY_MS;
        let clock = self.clock().unwrap_or(EpochMillis::MIN);
        if clock < end {
            return Err(TickError::NotElapsed {
                date: date.to_string(),
                clock,
            });
        }
        let Some(hdb) = &self.hdb else {
            return Err(TickError::Partition(date.to_string(), "no HDB configured".into()));
        };
        // Hold the plant so no batch lands between the copy and the release.
        let _plant = self.plant.lock().unwrap();
        let mut first = date;
        if let Some(m) = self.tables().first_minute() {
            first = first.min(date_of(m));
        }
        let mut reports = Vec::new();
        let mut d = first;
        while d <= date {
            let (lo, hi) = (day_start(d), day_start(d) + DAY_MS);
            let mut parts = Vec::new();
            for kind in TableKind::ALL {
                let fresh = self.tables().table(kind).rows_between(lo, hi);
                let mut rows = hdb.read_table(d, kind)?;
                if !fresh.is_empty() {
                    // Intraday bars replace stored ones with the same key.
                    let keys: std::collections::HashSet<(&str, EpochMillis)> =
                        fresh.iter().map(|b| (&*b.sym, b.minute)).collect();
                    rows.retain(|b| !keys.contains(&(&*b.sym, b.minute)));
                    rows.extend(fresh.iter().cloned());
                    rows.sort_by(|a, b| (&a.sym, a.minute).cmp(&(&b.sym, b.minute)));
                }
                parts.push((kind, rows));
            }
            let manifest = hdb.write_partition(d, &parts)?;
            let released = self.tables.write().unwrap().release_before(hi);
            {
                let mut dates = self.hdb_dates.write().unwrap();
                if !dates.contains(&d) {
                    dates.push(d);
                    dates.sort();
                }
            }
            reports.push(PersistReport {
                date: d,
                rows_written: manifest.rows(),
                released,
            });
            d = d.succ_opt().expect("date in range");
        }
        Ok(reports)
    }

    fn bar_at(&self, kind: TableKind, sym: &str, minute: EpochMillis) -> Option<f64> {
        let m = minute.div_euclid(MINUTE_MS) * MINUTE_MS;
        self.query_twap(kind, sym, m, m + MINUTE_MS).ok()?.first().map(|b| b.twap)
    }
}

impl TwapSource for TickEngine {
    fn index_bars(&self, underlying: &str, from: EpochMillis, to: EpochMillis) -> std::result::Result<Vec<TwapBar>, SourceError> {
        self.cached_window(TableKind::Index, &index_symbol(underlying), from, to)
            .map_err(|e| SourceError(e.to_string()))
    }
}

impl MarkHistory for TickEngine {
    /// Futures are quoted in USD, options in units of the underlying.
    fn contract_value_usd(&self, inst: &Instrument, minute: EpochMillis) -> Option<f64> {
        match inst.kind {
            InstrumentKind::Index => self.bar_at(TableKind::Index, &inst.id, minute),
            InstrumentKind::Future => self.bar_at(TableKind::Future, &inst.id, minute),
            InstrumentKind::Option => {
                let coin = self.bar_at(TableKind::Option, &inst.id, minute)?;
                Some(coin * self.bar_at(TableKind::Index, &inst.index_sym(), minute)?)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const T0: EpochMillis = 1_705_363_200_000; // 2024-01-16

    fn minute_ticks(sym: &str, minutes: std::ops::Range<i64>) -> Vec<Tick> {
        minutes
            .flat_map(|m| (0..3).map(move |k| Tick::new(sym, T0 + m * MINUTE_MS + k * 10_000, 100.0 + m as f64 + k as f64)))
            .collect()
    }

    #[test]
    fn live_tables_and_latest() {
        let e = TickEngine::in_memory();
        e.publish(minute_ticks("btc_usd", 0..3)).unwrap();
        let bars = e.query_twap(TableKind::Index, "btc_usd", T0, T0 + 3 * MINUTE_MS).unwrap();
        assert_eq!(bars.len(), 3);
        assert_eq!(bars[1].twap, 102.0);
        assert_eq!(e.latest().index("btc_usd").unwrap().price, 104.0);
        assert_eq!(e.clock(), Some(T0 + 2 * MINUTE_MS + 20_000));
    }

    #[test]
    fn persist_requires_elapsed_day() {
        let dir = tempfile::tempdir().unwrap();
        let e = TickEngine::open(EngineOptions::under(dir.path())).unwrap();
        e.publish(minute_ticks("btc_usd", 0..3)).unwrap();
        let d = date_of(T0);
        assert!(matches!(e.persist_eod(d), Err(TickError::NotElapsed { .. })));
        e.publish(vec![Tick::new("btc_usd", T0 + DAY_MS, 1.0)]).unwrap();
        let r = e.persist_eod(d).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!((r[0].rows_written, r[0].released), (3, 3));
        // Served from disk now, same values.
        let bars = e.query_twap(TableKind::Index, "btc_usd", T0, T0 + DAY_MS).unwrap();
        assert_eq!(bars.len(), 3);
        assert_eq!(bars[2].twap, 103.0);
        // Idempotent.
        let again = e.persist_eod(d).unwrap();
        assert_eq!(again[0].rows_written, 3);
        assert_eq!(e.query_twap(TableKind::Index, "btc_usd", T0, T0 + DAY_MS).unwrap(), bars);
    }

    #[test]
    fn restart_replays_log_after_hdb() {
        let dir = tempfile::tempdir().unwrap();
        {
            let e = TickEngine::open(EngineOptions::under(dir.path())).unwrap();
            e.publish(minute_ticks("btc_usd", 0..3)).unwrap();
            e.publish(vec![Tick::new("btc_usd", T0 + DAY_MS, 1.0)]).unwrap();
            e.persist_eod(date_of(T0)).unwrap();
            e.publish(vec![Tick::new("btc_usd", T0 + DAY_MS + MINUTE_MS, 2.0)]).unwrap();
        }
        let e = TickEngine::open(EngineOptions::under(dir.path())).unwrap();
        // Day one comes from disk only, not twice.
        assert_eq!(e.query_twap(TableKind::Index, "btc_usd", T0, T0 + DAY_MS).unwrap().len(), 3);
        assert_eq!(e.intraday_rows(TableKind::Index).len(), 2);
        assert_eq!(e.next_seq(), 12);
    }

    #[test]
    fn cache_agrees_and_reads_less() {
        let e = TickEngine::in_memory();
        // Hourly bars over three days; two-day windows sliding by an hour.
        let ticks: Vec<Tick> = (0..72).map(|h| Tick::new("btc_usd", T0 + h * 60 * MINUTE_MS, 100.0 + h as f64)).collect();
        e.publish(ticks).unwrap();
        let win = |k: i64| (T0 + k * 60 * MINUTE_MS, T0 + (k + 48) * 60 * MINUTE_MS);
        let direct: Vec<_> = (0..20)
            .map(|k| {
                let (a, b) = win(k);
                e.query_twap(TableKind::Index, "btc_usd", a, b).unwrap()
            })
            .collect();
        let direct_reads = e.stats().backing_reads;
        e.reset_stats();
        for k in 0..20 {
            let (a, b) = win(k);
            let got = e.cached_window(TableKind::Index, "btc_usd", a, b).unwrap();
            assert_eq!(got.len(), 48);
            assert_eq!(got, direct[k as usize]);
        }
        assert!(e.stats().backing_reads < direct_reads, "{:?} vs {direct_reads}", e.stats());
    }

    #[test]
    fn mark_history_values_options_in_usd() {
        let e = TickEngine::in_memory();
        e.publish(vec![
            Tick::new("btc_usd", T0, 40_000.0),
            Tick::new("BTC-29MAR24", T0, 40_500.0),
            Tick::new("BTC-29MAR24-40000-C", T0, 0.05),
        ])
        .unwrap();
        let v = |id: &str| e.contract_value_usd(&Instrument::parse(id).unwrap(), T0 + 30_000);
        assert_eq!(v("BTC-29MAR24"), Some(40_500.0));
        assert_eq!(v("BTC-29MAR24-40000-C"), Some(2_000.0));
        assert_eq!(v("BTC-28JUN24"), None);
    }
}
