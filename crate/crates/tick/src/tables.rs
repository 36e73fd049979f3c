//! In-memory minute TWAP tables, one per instrument class.

use std::collections::{BTreeMap, HashMap};
use std::ops::Bound;

use serde::{Deserialize, Serialize};

use cryptovar_core::market::{aggregate_twap, minute_of, Symbol};
use cryptovar_core::{EpochMillis, Instrument, InstrumentKind, Tick, TwapBar};

use crate::codec::FeedRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableKind {
    Index,
    Future,
    Option,
}

impl TableKind {
    pub const ALL: [TableKind; 3] = [TableKind::Index, TableKind::Future, TableKind::Option];

    pub fn table_name(self) -> &'static str {
        match self {
            TableKind::Index => "indextwap",
            TableKind::Future => "futuretwap",
            TableKind::Option => "optiontwap",
        }
    }

    pub fn from_table_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.table_name() == name)
    }

    pub fn of(kind: InstrumentKind) -> Self {
        match kind {
            InstrumentKind::Index => TableKind::Index,
            InstrumentKind::Future => TableKind::Future,
            InstrumentKind::Option => TableKind::Option,
        }
    }
}

#[derive(Debug, Default)]
struct SymRows {
    bars: BTreeMap<EpochMillis, TwapBar>,
    /// Latest minute seen; earlier minutes are closed.
    open_minute: EpochMillis,
}

/// Minute bars keyed by symbol, then minute.
///
/// Bars are built tick by tick, so the result does not depend on how the
/// feed was batched. Once a tick for a later minute arrives, earlier
/// minutes of that symbol are closed and late ticks for them are dropped.
#[derive(Debug, Default)]
pub struct TwapTable {
    rows: HashMap<Symbol, SymRows>,
    /// Minutes before this have been persisted and released.
    floor: EpochMillis,
    late_ticks: u64,
}

impl TwapTable {
    pub fn new() -> Self {
        TwapTable {
            floor: EpochMillis::MIN,
            ..Default::default()
        }
    }

    pub fn apply(&mut self, tick: &Tick) {
        let minute = minute_of(tick.time);
        if minute < self.floor {
            self.late_ticks += 1;
            return;
        }
        let rows = match self.rows.get_mut(tick.instrument.as_str()) {
            Some(r) => r,
            None => self
                .rows
                .entry(Symbol::from(tick.instrument.as_str()))
                .or_insert(SymRows {
                    bars: BTreeMap::new(),
                    open_minute: minute,
                }),
        };
        if minute < rows.open_minute {
            self.late_ticks += 1;
            return;
        }
        rows.open_minute = minute;
        let bar = match rows.bars.get(&minute) {
            Some(existing) => aggregate_twap(std::slice::from_ref(tick), Some(existing)),
            None => aggregate_twap(std::slice::from_ref(tick), None),
        };
        match bar {
            Ok(b) => {
                rows.bars.insert(minute, b);
            }
            Err(e) => log::debug!("dropping tick {}: {e}", tick.instrument),
        }
    }

    /// Bars of `sym` with minute in `[from, to)`.
    pub fn range(&self, sym: &str, from: EpochMillis, to: EpochMillis) -> Vec<TwapBar> {
        if from >= to {
            return Vec::new();
        }
        self.rows
            .get(sym)
            .map(|r| {
                r.bars
                    .range((Bound::Included(from), Bound::Excluded(to)))
                    .map(|(_, b)| b.clone())
                    .collect()
            })
            .unwrap_or_default()
    }

    /// First minute of `sym` still open for updates. Bars before it are final.
    pub fn open_minute(&self, sym: &str) -> Option<EpochMillis> {
        self.rows.get(sym).map(|r| r.open_minute)
    }

    pub fn symbols(&self) -> Vec<Symbol> {
        let mut v: Vec<Symbol> = self.rows.keys().cloned().collect();
        v.sort();
        v
    }

    pub fn len(&self) -> usize {
        self.rows.values().map(|r| r.bars.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn late_ticks(&self) -> u64 {
        self.late_ticks
    }

    pub fn floor(&self) -> EpochMillis {
        self.floor
    }

    /// Every bar with minute in `[from, to)`, sorted by symbol then minute.
    pub fn rows_between(&self, from: EpochMillis, to: EpochMillis) -> Vec<TwapBar> {
        self.symbols().iter().flat_map(|s| self.range(s, from, to)).collect()
    }

    /// Drops bars before `floor` and rejects later ticks for them.
    pub fn release_before(&mut self, floor: EpochMillis) -> usize {
        self.floor = self.floor.max(floor);
        let mut dropped = 0;
        self.rows.retain(|_, r| {
            let keep = r.bars.split_off(&floor);
            dropped += r.bars.len();
            r.bars = keep;
            r.open_minute = r.open_minute.max(floor);
            !r.bars.is_empty()
        });
        dropped
    }

    /// Earliest minute held, if any.
    pub fn first_minute(&self) -> Option<EpochMillis> {
        self.rows.values().filter_map(|r| r.bars.keys().next().copied()).min()
    }

    pub fn last_minute(&self) -> Option<EpochMillis> {
        self.rows.values().filter_map(|r| r.bars.keys().next_back().copied()).max()
    }
}

/// The three class tables behind one subscriber.
#[derive(Debug)]
pub struct TwapTables {
    tables: [TwapTable; 3],
    malformed: u64,
    last_seq: u64,
}

impl Default for TwapTables {
    fn default() -> Self {
        Self::new()
    }
}

impl TwapTables {
    pub fn new() -> Self {
        TwapTables {
            tables: [TwapTable::new(), TwapTable::new(), TwapTable::new()],
            malformed: 0,
            last_seq: 0,
        }
    }

    pub fn table(&self, kind: TableKind) -> &TwapTable {
        &self.tables[kind as usize]
    }

    pub fn table_mut(&mut self, kind: TableKind) -> &mut TwapTable {
        &mut self.tables[kind as usize]
    }

    pub fn apply(&mut self, tick: &Tick) {
        if !tick.is_valid() {
            self.malformed += 1;
            return;
        }
        match Instrument::parse(&tick.instrument) {
            Ok(inst) => self.tables[TableKind::of(inst.kind) as usize].apply(tick),
            Err(e) => {
                self.malformed += 1;
                log::debug!("{e}");
            }
        }
    }

    pub fn apply_batch(&mut self, batch: &[FeedRecord]) {
        for r in batch {
            self.apply(&r.tick);
            self.last_seq = self.last_seq.max(r.seq);
        }
    }

    pub fn malformed(&self) -> u64 {
        self.malformed
    }

    pub fn late_ticks(&self) -> u64 {
        self.tables.iter().map(TwapTable::late_ticks).sum()
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    pub fn release_before(&mut self, floor: EpochMillis) -> usize {
        self.tables.iter_mut().map(|t| t.release_before(floor)).sum()
    }

    pub fn first_minute(&self) -> Option<EpochMillis> {
        self.tables.iter().filter_map(TwapTable::first_minute).min()
    }

    pub fn last_minute(&self) -> Option<EpochMillis> {
        self.tables.iter().filter_map(TwapTable::last_minute).max()
    }
}
