//! Write-ahead log: `"ARCW"` magic, then length-prefixed record frames, each
//! `[u32 len | payload | u32 crc32c]`. One log file per memtable generation;
//! generations at or below the flushed seqno are removed after flush.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::storage::codec::{self, Reader};
use crate::value::Row;

const WAL_MAGIC: &[u8; 4] = b"ARCW";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WalSync {
    PerRecord,
    /// fsync once every `n` records (and on rotation/close).
    Batch(u32),
    Disabled,
}

impl Default for WalSync {
    fn default() -> Self {
        WalSync::Batch(256)
    }
}

pub struct Wal {
    dir: PathBuf,
    writer: BufWriter<File>,
    current_path: PathBuf,
    first_seqno: u64,
    sync: WalSync,
    pending: u32,
}

fn wal_path(dir: &Path, first_seqno: u64) -> PathBuf {
    dir.join(format!("wal-{first_seqno:020}.log"))
}

impl Wal {
    pub fn create(dir: &Path, first_seqno: u64, sync: WalSync) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = wal_path(dir, first_seqno);
        let mut file = OpenOptions::new().create(true).write(true).truncate(true).open(&path)?;
        file.write_all(WAL_MAGIC)?;
        Ok(Wal {
            dir: dir.to_path_buf(),
            writer: BufWriter::new(file),
            current_path: path,
            first_seqno,
            sync,
            pending: 0,
        })
    }

    pub fn append(&mut self, row: &Row) -> Result<()> {
        let mut payload = Vec::with_capacity(64);
        codec::put_row(&mut payload, row);
        self.writer.write_all(&(payload.len() as u32).to_le_bytes())?;
        self.writer.write_all(&payload)?;
        self.writer.write_all(&crc32c::crc32c(&payload).to_le_bytes())?;
        self.writer.flush()?;
        self.pending += 1;
        match self.sync {
            WalSync::PerRecord => {
                self.writer.get_ref().sync_data()?;
                self.pending = 0;
            }
            WalSync::Batch(n) if self.pending >= n => {
                self.writer.get_ref().sync_data()?;
                self.pending = 0;
            }
            _ => {}
        }
        Ok(())
    }

    /// Start a fresh generation after a memtable swap. Returns the old
    /// generation's path so the flusher can delete it once the segment is
    /// durable.
    pub fn rotate(&mut self, next_seqno: u64) -> Result<PathBuf> {
        self.writer.flush()?;
        if self.sync != WalSync::Disabled {
            self.writer.get_ref().sync_data()?;
        }
        let old = std::mem::replace(self, Wal::create(&self.dir, next_seqno, self.sync)?);
        Ok(old.current_path)
    }

    pub fn sync(&mut self) -> Result<()> {
        self.writer.flush()?;
        if self.sync != WalSync::Disabled {
            self.writer.get_ref().sync_data()?;
        }
        self.pending = 0;
        Ok(())
    }

    pub fn first_seqno(&self) -> u64 {
        self.first_seqno
    }
}

/// Replay every WAL generation in `dir`, oldest first, skipping rows already
/// persisted in segments (seqno <= `persisted_seqno`). Truncated tails are
/// tolerated; corrupt frames mid-file are an error.
pub fn replay(dir: &Path, persisted_seqno: u64, mut apply: impl FnMut(Row)) -> Result<u64> {
    let mut generations: Vec<PathBuf> = Vec::new();
    if dir.exists() {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path
                .file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("wal-") && n.ends_with(".log"))
                .unwrap_or(false)
            {
                generations.push(path);
            }
        }
    }
    generations.sort();
    let mut max_seqno = persisted_seqno;
    for path in generations {
        let mut bytes = Vec::new();
        File::open(&path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 4 || &bytes[..4] != WAL_MAGIC {
            return Err(Error::MalformedWal(format!("{path:?}: bad magic")));
        }
        let mut pos = 4usize;
        while pos + 4 <= bytes.len() {
            let len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
            if pos + 4 + len + 4 > bytes.len() {
                break; // torn tail from a crash mid-write
            }
            let payload = &bytes[pos + 4..pos + 4 + len];
            let stored = u32::from_le_bytes(bytes[pos + 4 + len..pos + 8 + len].try_into().unwrap());
            if crc32c::crc32c(payload) != stored {
                break; // treat as torn tail; nothing after it is trustworthy
            }
            let mut r = Reader::new(payload);
            let row = codec::read_row(&mut r)
                .map_err(|e| Error::MalformedWal(format!("{path:?}: {e}")))?;
            if row.seqno > persisted_seqno {
                max_seqno = max_seqno.max(row.seqno);
                apply(row);
            }
            pos += 8 + len;
        }
    }
    Ok(max_seqno)
}

/// Remove WAL generations whose contents are fully covered by flushed
/// segments.
pub fn remove_obsolete(dir: &Path, up_to_first_seqno: u64) -> Result<()> {
    if !dir.exists() {
        return Ok(());
    }
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(stem) = name.strip_prefix("wal-").and_then(|s| s.strip_suffix(".log")) {
            if let Ok(first) = stem.parse::<u64>() {
                if first < up_to_first_seqno {
                    fs::remove_file(&path)?;
                }
            }
        }
    }
    Ok(())
}
