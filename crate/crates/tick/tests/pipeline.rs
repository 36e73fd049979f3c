use cryptovar_core::sim::{generate_ticks, FeedSpec, SimConfig, SyntheticMarket};
use cryptovar_core::var::TwapSource;
use cryptovar_core::{EpochMillis, Tick, DAY_MS, MINUTE_MS};
use cryptovar_tick::{EngineOptions, TableKind, TickEngine};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn market(days: u32) -> SyntheticMarket {
    SyntheticMarket::generate(SimConfig {
        days,
        ..SimConfig::default()
    })
}

fn feed(m: &SyntheticMarket, from: EpochMillis, to: EpochMillis, per_minute: u32, products: usize) -> Vec<Tick> {
    let mut spec = FeedSpec::new(from, to);
    spec.index_ticks_per_minute = per_minute;
    spec.products = m.instruments().iter().step_by(97).take(products).map(|i| i.id.clone()).collect();
    generate_ticks(m, &spec)
}

fn all_rows(e: &TickEngine) -> Vec<Vec<cryptovar_core::TwapBar>> {
    TableKind::ALL.iter().map(|k| e.intraday_rows(*k)).collect()
}

#[test]
fn log_replay_and_rebatching_rebuild_identical_tables() {
    let m = market(1);
    let ticks = feed(&m, m.start(), m.start() + 600 * MINUTE_MS, 60, 5);
    assert!(ticks.len() >= 100_000, "{}", ticks.len());

    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("tp.log");
    let live = TickEngine::open(EngineOptions {
        log_path: Some(log.clone()),
        ..EngineOptions::default()
    })
    .unwrap();
    live.replay_ticks(ticks.iter().cloned(), 1000, None).unwrap();

    let replayed = TickEngine::in_memory();
    assert_eq!(replayed.replay_from_log(&log).unwrap(), ticks.len());

    let rebatched = TickEngine::in_memory();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut i = 0;
    while i < ticks.len() {
        let n = rng.random_range(1..5000).min(ticks.len() - i);
        rebatched.publish(ticks[i..i + n].to_vec()).unwrap();
        i += n;
    }

    let reference = all_rows(&live);
    assert!(reference.iter().all(|t| !t.is_empty()));
    assert_eq!(all_rows(&replayed), reference);
    assert_eq!(all_rows(&rebatched), reference);
    for id in live.latest().product_ids() {
        assert_eq!(replayed.latest().product(&id), live.latest().product(&id));
    }
}

#[test]
fn queries_span_disk_and_memory_seamlessly() {
    let m = market(3);
    let ticks = feed(&m, m.start(), m.start() + 2 * DAY_MS + 60 * MINUTE_MS, 2, 0);
    let dir = tempfile::tempdir().unwrap();
    let disk = TickEngine::open(EngineOptions::under(dir.path())).unwrap();
    let mem = TickEngine::in_memory();
    disk.replay_ticks(ticks.iter().cloned(), 4096, None).unwrap();
    mem.replay_ticks(ticks.iter().cloned(), 777, None).unwrap();

    let day0 = chrono::DateTime::from_timestamp_millis(m.start()).unwrap().date_naive();
    let reports = disk.persist_eod(day0.succ_opt().unwrap()).unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(disk.hdb_dates().len(), 2);

    let (from, to) = (m.start() + 600 * MINUTE_MS, m.start() + 2 * DAY_MS + 30 * MINUTE_MS);
    let a = disk.index_bars("BTC", from, to).unwrap();
    let b = mem.index_bars("BTC", from, to).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len() as i64, (to - from) / MINUTE_MS);

    // Reopen: the persisted days are read from disk and not duplicated.
    drop(disk);
    let reopened = TickEngine::open(EngineOptions::under(dir.path())).unwrap();
    assert_eq!(reopened.index_bars("BTC", from, to).unwrap(), b);
}

#[test]
fn cached_reads_match_direct_reads_while_ingesting() {
    let m = market(2);
    let ticks = feed(&m, m.start(), m.start() + 36 * 60 * MINUTE_MS, 1, 0);
    let e = TickEngine::in_memory();
    let step = 30 * MINUTE_MS;
    let mut cursor = 0;
    for k in 1..=72 {
        let until = m.start() + k * step;
        let end = ticks[cursor..].partition_point(|t| t.time < until) + cursor;
        e.publish(ticks[cursor..end].to_vec()).unwrap();
        cursor = end;
        let (from, to) = (until - DAY_MS, until);
        let cached = e.cached_window(TableKind::Index, "eth_usd", from, to).unwrap();
        let direct = e.query_twap(TableKind::Index, "eth_usd", from, to).unwrap();
        assert_eq!(cached, direct, "step {k}");
    }
}
