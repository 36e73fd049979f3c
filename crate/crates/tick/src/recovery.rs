//! Append-only recovery log.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::codec::{decode_record, encode_record, FeedRecord};
use crate::error::{Result, TickError};

pub struct RecoveryLog {
    out: Box<dyn Write + Send>,
    path: Option<PathBuf>,
    /// `fsync` after each batch when backed by a file.
    sync: Option<File>,
}

impl std::fmt::Debug for RecoveryLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RecoveryLog").field("path", &self.path).finish()
    }
}

impl RecoveryLog {
    /// Opens `path` for appending, creating it and its directory.
    pub fn open(path: &Path, fsync: bool) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| TickError::io(dir, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| TickError::io(path, e))?;
        let sync = if fsync {
            Some(file.try_clone().map_err(|e| TickError::io(path, e))?)
        } else {
            None
        };
        Ok(RecoveryLog {
            out: Box::new(BufWriter::new(file)),
            path: Some(path.to_path_buf()),
            sync,
        })
    }

    /// Log over an arbitrary writer (tests, in-memory pipelines).
    pub fn from_writer(w: impl Write + Send + 'static) -> Self {
        RecoveryLog {
            out: Box::new(w),
            path: None,
            sync: None,
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Writes and flushes the whole batch; an error means the batch must
    /// not be delivered.
    pub fn append(&mut self, batch: &[FeedRecord]) -> std::io::Result<()> {
        let mut buf = String::with_capacity(batch.len() * 160);
        for r in batch {
            buf.push_str(&encode_record(r));
            buf.push('\n');
        }
        self.out.write_all(buf.as_bytes())?;
        self.out.flush()?;
        if let Some(f) = &self.sync {
            f.sync_data()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogReplay {
    pub records: Vec<FeedRecord>,
    /// A trailing partial record was skipped.
    pub torn_tail: bool,
    /// Length of the complete prefix; truncate to this before appending.
    pub valid_bytes: u64,
}

/// Cuts a torn tail off so the next append starts on a fresh line.
pub fn truncate_log(path: &Path, valid_bytes: u64) -> Result<()> {
    let f = OpenOptions::new().write(true).open(path).map_err(|e| TickError::io(path, e))?;
    f.set_len(valid_bytes).map_err(|e| TickError::io(path, e))
}

/// Reads every complete record. A partial last line (no newline) is a torn
/// append and is skipped; a bad line anywhere before it is corruption.
pub fn read_log(path: &Path) -> Result<LogReplay> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Ok(LogReplay {
                records: Vec::new(),
                torn_tail: false,
                valid_bytes: 0,
            })
        }
        Err(e) => return Err(TickError::io(path, e)),
    };
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let torn_tail = complete < bytes.len();
    if torn_tail {
        log::warn!(
            "{}: skipping {} bytes of a torn trailing record",
            path.display(),
            bytes.len() - complete
        );
    }
    let text = std::str::from_utf8(&bytes[..complete]).map_err(|e| TickError::CorruptLog {
        line: 0,
        message: e.to_string(),
    })?;
    let mut records: Vec<FeedRecord> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let r = decode_record(line).map_err(|e| TickError::CorruptLog {
            line: i + 1,
            message: e.to_string(),
        })?;
        if records.last().is_some_and(|p| p.seq >= r.seq) {
            return Err(TickError::CorruptLog {
                line: i + 1,
                message: format!("sequence {} does not increase", r.seq),
            });
        }
        records.push(r);
    }
    Ok(LogReplay {
        records,
        torn_tail,
        valid_bytes: complete as u64,
    })
}
