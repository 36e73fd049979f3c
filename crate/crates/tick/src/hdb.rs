//! Date-partitioned columnar store for finished days.
//!
//! ```text
//! <root>/2024.01.16/manifest.json
//! <root>/2024.01.16/indextwap/{sym,minute,twap,count}
//! ```
//!
//! Each column file is `magic, type tag, row count (u64 LE), values`, all
//! fixed width so a row range is a single seek and read. Rows are sorted by
//! symbol then minute and the manifest records each symbol's row range.
//! A partition is written to a staging directory with the manifest last,
//! then swapped in by rename; a directory without a readable manifest, or
//! whose files disagree with it, is ignored.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, NaiveDate};
use serde::{Deserialize, Serialize};

use cryptovar_core::market::Symbol;
use cryptovar_core::{EpochMillis, TwapBar, DAY_MS};

use crate::error::{Result, TickError};
use crate::tables::TableKind;

const MAGIC: &[u8; 4] = b"CVC1";
const HEADER: u64 = 4 + 1 + 8;
const MANIFEST: &str = "manifest.json";
const COLUMNS: [(&str, u8); 4] = [("sym", b'u'), ("minute", b'i'), ("twap", b'f'), ("count", b'u')];

pub fn date_dir_name(d: NaiveDate) -> String {
    d.format("%Y.%m.%d").to_string()
}

fn parse_dir_name(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y.%m.%d").ok()
}

pub(crate) fn day_start(d: NaiveDate) -> EpochMillis {
    d.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp_millis()
}

pub(crate) fn date_of(t: EpochMillis) -> NaiveDate {
    DateTime::from_timestamp_millis(t.div_euclid(DAY_MS) * DAY_MS)
        .expect("timestamp in chrono range")
        .date_naive()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymRange {
    pub sym: String,
    pub start: u64,
    pub len: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableManifest {
    pub rows: u64,
    /// Byte size of each column file.
    pub column_bytes: BTreeMap<String, u64>,
    pub syms: Vec<SymRange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionManifest {
    pub date: NaiveDate,
    pub tables: BTreeMap<String, TableManifest>,
}

impl PartitionManifest {
    pub fn rows(&self) -> u64 {
        self.tables.values().map(|t| t.rows).sum()
    }

    fn sym_range(&self, kind: TableKind, sym: &str) -> Option<&SymRange> {
        let t = self.tables.get(kind.table_name())?;
        t.syms
            .binary_search_by(|r| r.sym.as_str().cmp(sym))
            .ok()
            .map(|i| &t.syms[i])
    }
}

#[derive(Debug)]
pub struct Hdb {
    root: PathBuf,
    manifests: Mutex<HashMap<NaiveDate, Option<Arc<PartitionManifest>>>>,
}

fn io<T>(path: &Path, r: std::io::Result<T>) -> Result<T> {
    r.map_err(|e| TickError::io(path, e))
}

impl Hdb {
    /// Opens (creating) the store and finishes any interrupted swap.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        io(&root, fs::create_dir_all(&root))?;
        for entry in io(&root, fs::read_dir(&root))? {
            let entry = io(&root, entry)?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(live) = name.strip_suffix(".old") {
                let live_path = root.join(live);
                if live_path.exists() {
                    io(&entry.path(), fs::remove_dir_all(entry.path()))?;
                } else {
                    log::warn!("restoring {name} after an interrupted swap");
                    io(&entry.path(), fs::rename(entry.path(), &live_path))?;
                }
            } else if name.starts_with(".staging-") {
                io(&entry.path(), fs::remove_dir_all(entry.path()))?;
            }
        }
        Ok(Hdb {
            root,
            manifests: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Dates with a valid partition, ascending.
    pub fn dates(&self) -> Result<Vec<NaiveDate>> {
        let mut out = Vec::new();
        for entry in io(&self.root, fs::read_dir(&self.root))? {
            let entry = io(&self.root, entry)?;
            if let Some(d) = parse_dir_name(&entry.file_name().to_string_lossy()) {
                if self.manifest(d).is_some() {
                    out.push(d);
                }
            }
        }
        out.sort();
        Ok(out)
    }

    /// The partition's manifest, if it exists and matches its files.
    pub fn manifest(&self, date: NaiveDate) -> Option<Arc<PartitionManifest>> {
        let mut cache = self.manifests.lock().unwrap();
        if let Some(m) = cache.get(&date) {
            return m.clone();
        }
        let m = self.load_manifest(date).map(Arc::new);
        cache.insert(date, m.clone());
        m
    }

    fn load_manifest(&self, date: NaiveDate) -> Option<PartitionManifest> {
        let dir = self.root.join(date_dir_name(date));
        let text = fs::read_to_string(dir.join(MANIFEST)).ok()?;
        let m: PartitionManifest = match serde_json::from_str(&text) {
            Ok(m) => m,
            Err(e) => {
                log::warn!("ignoring {}: bad manifest: {e}", dir.display());
                return None;
            }
        };
        for (table, t) in &m.tables {
            for (col, &bytes) in &t.column_bytes {
                let actual = fs::metadata(dir.join(table).join(col)).map(|md| md.len()).ok();
                if actual != Some(bytes) || bytes != HEADER + 8 * t.rows {
                    log::warn!("ignoring {}: {table}/{col} does not match its manifest", dir.display());
                    return None;
                }
            }
        }
        Some(m)
    }

    /// Writes a whole partition, replacing any existing one atomically.
    /// Each table's rows must be sorted by symbol then minute.
    pub fn write_partition(&self, date: NaiveDate, tables: &[(TableKind, Vec<TwapBar>)]) -> Result<PartitionManifest> {
        let name = date_dir_name(date);
        let staging = self.root.join(format!(".staging-{name}"));
        if staging.exists() {
            io(&staging, fs::remove_dir_all(&staging))?;
        }
        let mut manifest = PartitionManifest {
            date,
            tables: BTreeMap::new(),
        };
        for (kind, rows) in tables {
            if rows.windows(2).any(|w| (&w[0].sym, w[0].minute) >= (&w[1].sym, w[1].minute)) {
                return Err(TickError::Partition(name, format!("{} rows not sorted", kind.table_name())));
            }
            let dir = staging.join(kind.table_name());
            io(&dir, fs::create_dir_all(&dir))?;
            let mut syms: Vec<SymRange> = Vec::new();
            let mut sym_ids = Vec::with_capacity(rows.len());
            for (i, r) in rows.iter().enumerate() {
                if syms.last().is_none_or(|s| s.sym != *r.sym) {
                    syms.push(SymRange {
                        sym: r.sym.to_string(),
                        start: i as u64,
                        len: 0,
                    });
                }
                syms.last_mut().unwrap().len += 1;
                sym_ids.push((syms.len() - 1) as u64);
            }
            let minutes: Vec<u64> = rows.iter().map(|r| r.minute as u64).collect();
            let twaps: Vec<u64> = rows.iter().map(|r| r.twap.to_bits()).collect();
            let counts: Vec<u64> = rows.iter().map(|r| r.count).collect();
            let mut column_bytes = BTreeMap::new();
            for ((col, tag), data) in COLUMNS.iter().zip([&sym_ids, &minutes, &twaps, &counts]) {
                let path = dir.join(col);
                column_bytes.insert(col.to_string(), write_column(&path, *tag, data)?);
            }
            manifest.tables.insert(
                kind.table_name().to_string(),
                TableManifest {
                    rows: rows.len() as u64,
                    column_bytes,
                    syms,
                },
            );
        }
        let mpath = staging.join(MANIFEST);
        let mut f = io(&mpath, File::create(&mpath))?;
        io(&mpath, f.write_all(serde_json::to_string_pretty(&manifest).unwrap().as_bytes()))?;
        io(&mpath, f.sync_all())?;

        let live = self.root.join(&name);
        let old = self.root.join(format!("{name}.old"));
        if live.exists() {
            io(&live, fs::rename(&live, &old))?;
        }
        io(&staging, fs::rename(&staging, &live))?;
        if old.exists() {
            io(&old, fs::remove_dir_all(&old))?;
        }
        self.manifests.lock().unwrap().insert(date, Some(Arc::new(manifest.clone())));
        Ok(manifest)
    }

    /// Bars of `sym` in `kind` on `date` with minute in `[from, to)`. Reads
    /// only the symbol's row range.
    pub fn read_range(
        &self,
        date: NaiveDate,
        kind: TableKind,
        sym: &str,
        from: EpochMillis,
        to: EpochMillis,
    ) -> Result<Vec<TwapBar>> {
        let Some(m) = self.manifest(date) else {
            return Ok(Vec::new());
        };
        let Some(range) = m.sym_range(kind, sym) else {
            return Ok(Vec::new());
        };
        let dir = self.root.join(date_dir_name(date)).join(kind.table_name());
        let minutes = read_column(&dir.join("minute"), range.start, range.len)?;
        let lo = minutes.partition_point(|&t| (t as i64) < from);
        let hi = minutes.partition_point(|&t| (t as i64) < to);
        if lo >= hi {
            return Ok(Vec::new());
        }
        let (start, len) = (range.start + lo as u64, (hi - lo) as u64);
        let twaps = read_column(&dir.join("twap"), start, len)?;
        let counts = read_column(&dir.join("count"), start, len)?;
        let sym: Symbol = sym.into();
        Ok((0..len as usize)
            .map(|i| TwapBar {
                sym: sym.clone(),
                minute: minutes[lo + i] as i64,
                twap: f64::from_bits(twaps[i]),
                count: counts[i],
            })
            .collect())
    }

    /// Every row of one table on `date`, sorted by symbol then minute.
    pub fn read_table(&self, date: NaiveDate, kind: TableKind) -> Result<Vec<TwapBar>> {
        let Some(m) = self.manifest(date) else {
            return Ok(Vec::new());
        };
        let Some(t) = m.tables.get(kind.table_name()) else {
            return Ok(Vec::new());
        };
        let mut out = Vec::with_capacity(t.rows as usize);
        for r in &t.syms {
            out.extend(self.read_range(date, kind, &r.sym, EpochMillis::MIN, EpochMillis::MAX)?);
        }
        Ok(out)
    }

    /// Symbols stored in `kind` on `date`.
    pub fn symbols(&self, date: NaiveDate, kind: TableKind) -> Vec<String> {
        self.manifest(date)
            .and_then(|m| m.tables.get(kind.table_name()).map(|t| t.syms.iter().map(|s| s.sym.clone()).collect()))
            .unwrap_or_default()
    }
}

fn write_column(path: &Path, tag: u8, data: &[u64]) -> Result<u64> {
    let mut buf = Vec::with_capacity(HEADER as usize + 8 * data.len());
    buf.extend_from_slice(MAGIC);
    buf.push(tag);
    buf.extend_from_slice(&(data.len() as u64).to_le_bytes());
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = io(path, File::create(path))?;
    io(path, f.write_all(&buf))?;
    io(path, f.sync_all())?;
    Ok(buf.len() as u64)
}

fn read_column(path: &Path, start: u64, len: u64) -> Result<Vec<u64>> {
    let mut f = io(path, File::open(path))?;
    let mut head = [0u8; HEADER as usize];
    io(path, f.read_exact(&mut head))?;
    if &head[..4] != MAGIC {
        return Err(TickError::Partition(path.display().to_string(), "bad column magic".into()));
    }
    io(path, f.seek(SeekFrom::Start(HEADER + 8 * start)))?;
    let mut raw = vec![0u8; 8 * len as usize];
    io(path, f.read_exact(&mut raw))?;
    Ok(raw.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect())
}
