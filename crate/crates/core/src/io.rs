//! On-disk formats: snapshot files (one JSON header line followed by raw
//! little-endian float64 values), the diagnostics CSV, checkpoints, and a
//! background writer thread.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{sync_channel, SyncSender};
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};
use crate::grid::{Field3, GridSpec, Params};

pub const SNAPSHOT_FORMAT_VERSION: u32 = 1;
pub const BYTE_ORDER: &str = "little-endian";
pub const ELEMENT_TYPE: &str = "float64";
pub const LAYOUT: &str = "row-major i1,i2,i_theta";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotHeader {
    pub format_version: u32,
    pub n_x: usize,
    pub n_theta: usize,
    pub step: usize,
    pub t: f64,
    pub params: Params,
    pub byte_order: String,
    pub element_type: String,
    pub layout: String,
}

impl SnapshotHeader {
    pub fn new(grid: GridSpec, step: usize, t: f64, params: Params) -> Self {
        Self {
            format_version: SNAPSHOT_FORMAT_VERSION,
            n_x: grid.n_x(),
            n_theta: grid.n_theta(),
            step,
            t,
            params,
            byte_order: BYTE_ORDER.into(),
            element_type: ELEMENT_TYPE.into(),
            layout: LAYOUT.into(),
        }
    }
}

fn encode(header: &SnapshotHeader, values: &[f64]) -> Vec<u8> {
    let mut buf = serde_json::to_vec(header).expect("header serializes");
    buf.push(b'\n');
    buf.reserve(8 * values.len());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

/// Write atomically: a temporary sibling is renamed into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut file = BufWriter::new(File::create(&tmp)?);
        file.write_all(bytes)?;
        file.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_snapshot(path: &Path, header: &SnapshotHeader, f: &Field3) -> Result<()> {
    write_atomic(path, &encode(header, f.values()))
}

pub fn read_snapshot(path: &Path) -> Result<(SnapshotHeader, Field3)> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::Snapshot("missing header line".into()));
    }
    let header: SnapshotHeader =
        serde_json::from_slice(&line[..line.len() - 1]).map_err(|e| Error::Snapshot(format!("header: {e}")))?;
    if header.format_version != SNAPSHOT_FORMAT_VERSION
        || header.byte_order != BYTE_ORDER
        || header.element_type != ELEMENT_TYPE
        || header.layout != LAYOUT
    {
        return Err(Error::Snapshot("unsupported format".into()));
    }
    let grid = GridSpec::new(header.n_x, header.n_theta)?;
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    if payload.len() != 8 * grid.len3() {
        return Err(Error::Snapshot(format!(
            "payload holds {} bytes, expected {}",
            payload.len(),
            8 * grid.len3()
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((header, Field3::new(grid, values)?))
}

pub fn snapshot_name(step: usize) -> String {
    format!("snap_{step}.bin")
}

/// Fixed CSV header for `k_max`.
pub fn csv_header(k_max: usize) -> String {
    let mut h = String::from("t,mass,l2_to_const,linf,rho_min,rho_max,grad_l2,spectral_tail");
    for k in 0..=k_max {
        h.push_str(&format!(",lp_{k}"));
    }
    h
}

/// One CSV row; `{:e}` keeps the shortest exact round-trip representation.
pub fn csv_row(r: &DiagnosticsRecord) -> String {
    let mut row = format!(
        "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
        r.t, r.mass, r.l2_to_const, r.linf, r.rho_min, r.rho_max, r.grad_l2, r.spectral_tail
    );
    for v in &r.lp_ladder {
        row.push_str(&format!(",{v:e}"));
    }
    row
}

/// Parse a CSV produced by [`csv_header`]/[`csv_row`].
pub fn read_csv(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty CSV".into()))?;
    let columns = header.split(',').count();
    lines
        .enumerate()
        .map(|(i, line)| {
            let v: Vec<f64> = line
                .split(',')
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("CSV line {}: {e}", i + 2)))?;
            if v.len() != columns || v.len() < 9 {
                return Err(Error::Parse(format!("CSV line {}: wrong column count", i + 2)));
            }
            Ok(DiagnosticsRecord {
                t: v[0],
                mass: v[1],
                l2_to_const: v[2],
                linf: v[3],
                rho_min: v[4],
                rho_max: v[5],
                grad_l2: v[6],
                spectral_tail: v[7],
                lp_ladder: v[8..].to_vec(),
            })
        })
        .collect()
}

/// Append-only diagnostics CSV.
pub struct CsvWriter {
    out: BufWriter<File>,
}

impl CsvWriter {
    pub fn create(path: &Path, k_max: usize) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", csv_header(k_max))?;
        Ok(Self { out })
    }

    /// Reopen an existing CSV keeping the header and the first `rows` rows.
    pub fn truncate_to(path: &Path, rows: usize) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let kept: Vec<&str> = text.lines().take(rows + 1).collect();
        if kept.len() != rows + 1 {
            return Err(Error::CheckpointMismatch(format!(
                "diagnostics file has {} rows, checkpoint needs {rows}",
                kept.len().saturating_sub(1)
            )));
        }
        let mut out = BufWriter::new(File::create(path)?);
        for line in kept {
            writeln!(out, "{line}")?;
        }
        Ok(Self { out })
    }

    pub fn push(&mut self, r: &DiagnosticsRecord) -> Result<()> {
        writeln!(self.out, "{}", csv_row(r))?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

pub const CHECKPOINT_FIELD: &str = "checkpoint.bin";
pub const CHECKPOINT_META: &str = "checkpoint.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub config_hash: String,
    pub step: usize,
    pub t: f64,
    /// ⟨f₀⟩ of the original initial data.
    pub mean0: f64,
}

/// Load a checkpoint from `dir`, refusing it unless `config_hash` matches.
pub fn read_checkpoint(dir: &Path, config_hash: &str) -> Result<(CheckpointMeta, Field3)> {
    let text = fs::read_to_string(dir.join(CHECKPOINT_META))?;
    let meta: CheckpointMeta =
        serde_json::from_str(&text).map_err(|e| Error::CheckpointMismatch(format!("metadata: {e}")))?;
    if meta.config_hash != config_hash {
        return Err(Error::CheckpointMismatch(format!(
            "config hash {} differs from checkpoint hash {}",
            config_hash, meta.config_hash
        )));
    }
    let (header, f) = read_snapshot(&dir.join(CHECKPOINT_FIELD))?;
    if header.step != meta.step {
        return Err(Error::CheckpointMismatch(
            "field and metadata disagree on the step".into(),
        ));
    }
    Ok((meta, f))
}

enum Job {
    Snapshot {
        path: PathBuf,
        bytes: Vec<u8>,
    },
    Checkpoint {
        dir: PathBuf,
        bytes: Vec<u8>,
        meta: CheckpointMeta,
    },
}

/// Serializes snapshots on a dedicated thread. The channel holds a single
/// pending job, so the producer never runs more than one buffer ahead.
pub struct SnapshotWriter {
    tx: Option<SyncSender<Job>>,
    handle: Option<JoinHandle<Result<()>>>,
}

impl SnapshotWriter {
    pub fn spawn() -> Self {
        let (tx, rx) = sync_channel::<Job>(1);
        let handle = std::thread::spawn(move || -> Result<()> {
            for job in rx {
                match job {
                    Job::Snapshot { path, bytes } => write_atomic(&path, &bytes)?,
                    Job::Checkpoint { dir, bytes, meta } => {
                        write_atomic(&dir.join(CHECKPOINT_FIELD), &bytes)?;
                        let text = serde_json::to_vec_pretty(&meta).expect("metadata serializes");
                        write_atomic(&dir.join(CHECKPOINT_META), &text)?;
                    }
                }
            }
            Ok(())
        });
        Self {
            tx: Some(tx),
            handle: Some(handle),
        }
    }

    fn send(&mut self, job: Job) -> Result<()> {
        let tx = self.tx.as_ref().expect("writer is open");
        if tx.send(job).is_err() {
            // the worker stopped early; surface its error
            return self.finish();
        }
        Ok(())
    }

    pub fn snapshot(&mut self, path: PathBuf, header: &SnapshotHeader, f: &Field3) -> Result<()> {
        let bytes = encode(header, f.values());
        self.send(Job::Snapshot { path, bytes })
    }

    pub fn checkpoint(
        &mut self,
        dir: PathBuf,
        header: &SnapshotHeader,
        f: &Field3,
        meta: CheckpointMeta,
    ) -> Result<()> {
        let bytes = encode(header, f.values());
        self.send(Job::Checkpoint { dir, bytes, meta })
    }

    /// Close the queue and wait for all pending writes.
    pub fn finish(&mut self) -> Result<()> {
        self.tx.take();
        match self.handle.take() {
            Some(h) => h
                .join()
                .unwrap_or_else(|_| Err(Error::Snapshot("writer thread panicked".into()))),
            None => Ok(()),
        }
    }
}

impl Drop for SnapshotWriter {
    fn drop(&mut self) {
        let _ = self.finish();
    }
}
