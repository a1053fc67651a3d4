//! Single-file append-only metric store with one `kpm` table.
//!
//! Rows are length-prefixed binary records (sub_id, ingest time, then the
//! wire encoding of the KPM record), so a reader only ever observes complete
//! rows: a torn trailing row fails its length check and is ignored with an
//! error. `dump` exports the table as CSV with a fixed header.

use crate::e2::{self, KpmRecord};
use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

const MAGIC: &[u8; 8] = b"KPMSTR01";

/// Fixed header of the CSV export.
pub const DUMP_HEADER: &str =
    "t_ms,ue_id,dl_thp_kbps,rb_count,sdu_latency_us,pos_x_cm,pos_y_cm,pos_z_cm,cqi,mcs,sub_id";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("store {path}: bad magic, not a kpm store")]
    BadMagic { path: PathBuf },
    #[error("store {path}: corrupt row: {source}")]
    CorruptRow {
        path: PathBuf,
        #[source]
        source: e2::CodecError,
    },
}

/// One row of the `kpm` table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredRow {
    pub sub_id: u32,
    /// Ingest timestamp (ms). Under the deterministic clock this is the
    /// indication's window-end time; under the system clock, unix millis.
    pub ingest_ms: u64,
    pub record: KpmRecord,
}

pub struct MetricStore {
    path: PathBuf,
    writer: Option<BufWriter<File>>,
    rows: Vec<StoredRow>,
}

impl MetricStore {
    /// Creates (truncating) a store file for a new run.
    pub fn create(path: &Path) -> Result<Self, StoreError> {
        let file = File::create(path).map_err(|e| StoreError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut writer = BufWriter::new(file);
        writer.write_all(MAGIC).map_err(|e| StoreError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Ok(MetricStore {
            path: path.to_path_buf(),
            writer: Some(writer),
            rows: Vec::new(),
        })
    }

    /// Opens an existing store read-only and loads every complete row.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let mut file = OpenOptions::new()
            .read(true)
            .open(path)
            .map_err(|e| StoreError::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(|e| StoreError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(StoreError::BadMagic {
                path: path.to_path_buf(),
            });
        }
        let mut rows = Vec::new();
        let mut off = MAGIC.len();
        while bytes.len() - off >= 4 {
            let len = u32::from_be_bytes([
                bytes[off],
                bytes[off + 1],
                bytes[off + 2],
                bytes[off + 3],
            ]) as usize;
            if bytes.len() - off - 4 < len {
                break; // torn trailing row from an aborted run
            }
            let row = &bytes[off + 4..off + 4 + len];
            if row.len() < 12 {
                return Err(StoreError::CorruptRow {
                    path: path.to_path_buf(),
                    source: e2::CodecError::Truncated {
                        what: "row header",
                        needed: 12 - row.len(),
                    },
                });
            }
            let sub_id = u32::from_be_bytes([row[0], row[1], row[2], row[3]]);
            let mut ms = [0u8; 8];
            ms.copy_from_slice(&row[4..12]);
            let ingest_ms = u64::from_be_bytes(ms);
            let (record, used) =
                e2::record_from_bytes(&row[12..]).map_err(|e| StoreError::CorruptRow {
                    path: path.to_path_buf(),
                    source: e,
                })?;
            if 12 + used != row.len() {
                return Err(StoreError::CorruptRow {
                    path: path.to_path_buf(),
                    source: e2::CodecError::LengthMismatch {
                        declared: row.len(),
                        parsed: 12 + used,
                    },
                });
            }
            rows.push(StoredRow {
                sub_id,
                ingest_ms,
                record,
            });
            off += 4 + len;
        }
        Ok(MetricStore {
            path: path.to_path_buf(),
            writer: None,
            rows,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends one row; the write hits the file before the call returns.
    pub fn append(
        &mut self,
        sub_id: u32,
        ingest_ms: u64,
        record: KpmRecord,
    ) -> Result<(), StoreError> {
        let mut row = Vec::with_capacity(64);
        row.extend_from_slice(&sub_id.to_be_bytes());
        row.extend_from_slice(&ingest_ms.to_be_bytes());
        row.extend_from_slice(&e2::record_to_bytes(&record));
        if let Some(w) = self.writer.as_mut() {
            let res = (|| {
                w.write_all(&(row.len() as u32).to_be_bytes())?;
                w.write_all(&row)?;
                w.flush()
            })();
            res.map_err(|e| StoreError::Io {
                path: self.path.clone(),
                source: e,
            })?;
        }
        self.rows.push(StoredRow {
            sub_id,
            ingest_ms,
            record,
        });
        Ok(())
    }

    pub fn rows(&self) -> &[StoredRow] {
        &self.rows
    }

    /// Rows matching the filters, ordered by t_ms ascending (stable within
    /// ties). The time range is half-open `[from, to)`; an inverted range
    /// yields an empty result.
    pub fn query(&self, ue_id: Option<u32>, t_range: Option<(u64, u64)>) -> Vec<KpmRecord> {
        let mut out: Vec<KpmRecord> = self
            .rows
            .iter()
            .filter(|r| ue_id.is_none_or(|u| r.record.ue_id == u))
            .filter(|r| {
                t_range.is_none_or(|(from, to)| r.record.t_ms >= from && r.record.t_ms < to)
            })
            .map(|r| r.record.clone())
            .collect();
        out.sort_by_key(|r| r.t_ms);
        out
    }

    /// Exports the `kpm` table as CSV with the fixed header. Absent latency
    /// serializes as an empty field.
    pub fn dump_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{DUMP_HEADER}")?;
        for row in &self.rows {
            let r = &row.record;
            let lat = r
                .sdu_latency_us
                .map(|v| v.to_string())
                .unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.t_ms,
                r.ue_id,
                r.dl_thp_kbps,
                r.rb_count,
                lat,
                r.pos_cm[0],
                r.pos_cm[1],
                r.pos_cm[2],
                r.cqi,
                r.mcs,
                row.sub_id
            )?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), StoreError> {
        if let Some(w) = self.writer.as_mut() {
            w.flush().map_err(|e| StoreError::Io {
                path: self.path.clone(),
                source: e,
            })?;
        }
        Ok(())
    }
}
