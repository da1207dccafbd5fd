//! The fuzzing queue, energy assignment and the crash/hang stores.
//!
//! On-disk layout under the output directory:
//!
//! ```text
//! queue/id:NNNNNN                   interesting inputs, raw bytes
//! crashes/sig:HHHHHHHHHHHHHHHH,id:NNNNNN
//! hangs/sig:HHHHHHHHHHHHHHHH,id:NNNNNN
//! ```
//!
//! `NNNNNN` is the zero-padded decimal id, `HHHH...` the 16-digit hex path
//! signature.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coverage::{Novelty, NoveltyRule, TraceObservation};
use crate::error::{Error, Result};
use crate::executor::CrashKind;

pub const QUEUE_DIR: &str = "queue";
pub const CRASH_DIR: &str = "crashes";
pub const HANG_DIR: &str = "hangs";

pub fn queue_file_name(id: u64) -> String {
    format!("id:{id:06}")
}

pub fn finding_file_name(signature: u64, id: u64) -> String {
    format!("sig:{signature:016x},id:{id:06}")
}

/// Parses `id:NNNNNN`.
pub fn parse_queue_file_name(name: &str) -> Option<u64> {
    let digits = name.strip_prefix("id:")?;
    (digits.len() >= 6 && digits.bytes().all(|b| b.is_ascii_digit()))
        .then(|| digits.parse().ok())
        .flatten()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub id: u64,
    #[serde(skip)]
    pub data: Vec<u8>,
    /// Execution counter when the entry was found.
    pub discovery_time: u64,
    /// Execution time in microseconds.
    pub exec_time: u64,
    /// Distinct edges the entry touches.
    pub path_edges: usize,
    pub deterministic_done: bool,
    pub parent_id: Option<u64>,
}

/// What the campaign knows about an executed child.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecMeta {
    pub discovery_time: u64,
    pub exec_time: u64,
    pub path_edges: usize,
    pub parent_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashRecord {
    pub id: u64,
    #[serde(skip)]
    pub data: Vec<u8>,
    pub path_signature: u64,
    pub kind: CrashKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HangRecord {
    pub id: u64,
    #[serde(skip)]
    pub data: Vec<u8>,
    pub path_signature: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FindingOutcome {
    Added(u64),
    Duplicate,
}

/// Constants of the energy formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyConfig {
    pub base: f64,
    pub min: u32,
    pub max: u32,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        EnergyConfig {
            base: 100.0,
            min: 16,
            max: 1600,
        }
    }
}

/// Queue-wide averages the score is relative to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueStats {
    pub len: usize,
    pub mean_path_edges: f64,
    pub mean_exec_time: f64,
}

/// Havoc iterations to spend on `entry`.
///
/// `base * f_cov * f_speed * f_age`, clamped to `[min, max]`, where
/// `f_cov = clamp(edges / mean_edges, 0.25, 4)`,
/// `f_speed = clamp(mean_time / time, 0.1, 3)` and `f_age` is 2 for entries
/// in the newest quarter of the queue (by id), 1 otherwise.
pub fn calculate_score(entry: &QueueEntry, stats: &QueueStats, cfg: &EnergyConfig) -> u32 {
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 1.0 };
    let f_cov = ratio(entry.path_edges as f64, stats.mean_path_edges).clamp(0.25, 4.0);
    let f_speed = ratio(stats.mean_exec_time, entry.exec_time as f64).clamp(0.1, 3.0);
    let newest_quarter = stats.len / 4;
    let f_age = if newest_quarter > 0 && entry.id as usize >= stats.len - newest_quarter {
        2.0
    } else {
        1.0
    };
    let score = (cfg.base * f_cov * f_speed * f_age).round();
    (score as u32).clamp(cfg.min, cfg.max)
}

/// Queue plus crash and hang stores, optionally mirrored to disk.
#[derive(Debug, Default)]
pub struct Corpus {
    entries: Vec<QueueEntry>,
    cursor: usize,
    crashes: Vec<CrashRecord>,
    crash_signatures: HashSet<u64>,
    hangs: Vec<HangRecord>,
    hang_signatures: HashSet<u64>,
    total_edges: u64,
    total_exec_time: u64,
    energy: EnergyConfig,
    dir: Option<PathBuf>,
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, data: &[u8]) -> Result<()> {
    fs::write(path, data).map_err(|e| Error::io(path, e))
}

impl Corpus {
    /// An in-memory corpus.
    pub fn new(energy: EnergyConfig) -> Self {
        Corpus {
            energy,
            ..Corpus::default()
        }
    }

    /// A corpus persisted under `dir`, which gets `queue/`, `crashes/` and
    /// `hangs/` subdirectories.
    pub fn create(dir: &Path, energy: EnergyConfig) -> Result<Self> {
        for sub in [QUEUE_DIR, CRASH_DIR, HANG_DIR] {
            create_dir(&dir.join(sub))?;
        }
        Ok(Corpus {
            energy,
            dir: Some(dir.to_path_buf()),
            ..Corpus::default()
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn entries(&self) -> &[QueueEntry] {
        &self.entries
    }

    pub fn entry(&self, id: u64) -> Option<&QueueEntry> {
        self.entries.get(id as usize)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn crashes(&self) -> &[CrashRecord] {
        &self.crashes
    }

    pub fn hangs(&self) -> &[HangRecord] {
        &self.hangs
    }

    pub fn energy_config(&self) -> &EnergyConfig {
        &self.energy
    }

    pub fn stats(&self) -> QueueStats {
        let n = self.entries.len().max(1) as f64;
        QueueStats {
            len: self.entries.len(),
            mean_path_edges: self.total_edges as f64 / n,
            mean_exec_time: self.total_exec_time as f64 / n,
        }
    }

    pub fn score(&self, entry: &QueueEntry) -> u32 {
        calculate_score(entry, &self.stats(), &self.energy)
    }

    /// Next entry in round-robin order with its energy.
    ///
    /// # Panics
    ///
    /// On an empty queue; campaigns refuse to start without a seed.
    pub fn pick_input(&mut self) -> (&QueueEntry, u32) {
        assert!(!self.entries.is_empty(), "pick_input on an empty queue");
        let idx = self.cursor % self.entries.len();
        self.cursor = idx + 1;
        let energy = self.score(&self.entries[idx]);
        (&self.entries[idx], energy)
    }

    pub fn mark_deterministic_done(&mut self, id: u64) {
        if let Some(e) = self.entries.get_mut(id as usize) {
            e.deterministic_done = true;
        }
    }

    /// Appends `data` to the queue unless `verdict` says nothing new was
    /// seen. Returns the new entry's id.
    pub fn add_if_interesting(
        &mut self,
        data: &[u8],
        verdict: Novelty,
        rule: NoveltyRule,
        meta: ExecMeta,
    ) -> Result<Option<u64>> {
        if !verdict.is_interesting(rule) {
            return Ok(None);
        }
        let entry = QueueEntry {
            id: self.entries.len() as u64,
            data: data.to_vec(),
            discovery_time: meta.discovery_time,
            exec_time: meta.exec_time,
            path_edges: meta.path_edges,
            deterministic_done: false,
            parent_id: meta.parent_id,
        };
        self.push_entry(entry).map(Some)
    }

    fn push_entry(&mut self, entry: QueueEntry) -> Result<u64> {
        if let Some(dir) = &self.dir {
            write_file(&dir.join(QUEUE_DIR).join(queue_file_name(entry.id)), &entry.data)?;
        }
        self.total_edges += entry.path_edges as u64;
        self.total_exec_time += entry.exec_time;
        let id = entry.id;
        self.entries.push(entry);
        Ok(id)
    }

    /// Stores a crash unless one with the same path signature exists.
    pub fn record_crash(
        &mut self,
        data: &[u8],
        trace: &TraceObservation,
        kind: CrashKind,
    ) -> Result<FindingOutcome> {
        let sig = trace.path_signature();
        if !self.crash_signatures.insert(sig) {
            return Ok(FindingOutcome::Duplicate);
        }
        let id = self.crashes.len() as u64;
        if let Some(dir) = &self.dir {
            write_file(&dir.join(CRASH_DIR).join(finding_file_name(sig, id)), data)?;
        }
        self.crashes.push(CrashRecord {
            id,
            data: data.to_vec(),
            path_signature: sig,
            kind,
        });
        Ok(FindingOutcome::Added(id))
    }

    /// Stores a hang unless one with the same path signature exists.
    pub fn record_hang(&mut self, data: &[u8], trace: &TraceObservation) -> Result<FindingOutcome> {
        let sig = trace.path_signature();
        if !self.hang_signatures.insert(sig) {
            return Ok(FindingOutcome::Duplicate);
        }
        let id = self.hangs.len() as u64;
        if let Some(dir) = &self.dir {
            write_file(&dir.join(HANG_DIR).join(finding_file_name(sig, id)), data)?;
        }
        self.hangs.push(HangRecord {
            id,
            data: data.to_vec(),
            path_signature: sig,
        });
        Ok(FindingOutcome::Added(id))
    }

    /// Rebuilds a corpus from its directory and the metadata saved in a
    /// checkpoint. Queue files must match the metadata one for one.
    pub fn restore(
        dir: &Path,
        energy: EnergyConfig,
        entries: Vec<QueueEntry>,
        crashes: Vec<CrashRecord>,
        hangs: Vec<HangRecord>,
        cursor: usize,
    ) -> Result<Self> {
        let mut corpus = Corpus::create(dir, energy)?;
        let on_disk = list_queue(dir)?;
        if on_disk.len() != entries.len() {
            return Err(Error::Config(format!(
                "{} queue files but {} entries in checkpoint",
                on_disk.len(),
                entries.len()
            )));
        }
        for (expected, (id, path)) in entries.into_iter().zip(on_disk) {
            if expected.id != id || id as usize != corpus.entries.len() {
                return Err(Error::Config(format!("queue id {id} out of sequence")));
            }
            let data = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            corpus.total_edges += expected.path_edges as u64;
            corpus.total_exec_time += expected.exec_time;
            corpus.entries.push(QueueEntry { data, ..expected });
        }
        let read_finding = |sub: &str, sig: u64, id: u64| -> Result<Vec<u8>> {
            let path = dir.join(sub).join(finding_file_name(sig, id));
            fs::read(&path).map_err(|e| Error::io(&path, e))
        };
        for c in crashes {
            let data = read_finding(CRASH_DIR, c.path_signature, c.id)?;
            corpus.crash_signatures.insert(c.path_signature);
            corpus.crashes.push(CrashRecord { data, ..c });
        }
        for h in hangs {
            let data = read_finding(HANG_DIR, h.path_signature, h.id)?;
            corpus.hang_signatures.insert(h.path_signature);
            corpus.hangs.push(HangRecord { data, ..h });
        }
        corpus.cursor = cursor;
        Ok(corpus)
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }
}

/// Queue files under `dir/queue`, sorted by id. Other files are ignored.
pub fn list_queue(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let qdir = dir.join(QUEUE_DIR);
    let mut out = Vec::new();
    for entry in fs::read_dir(&qdir).map_err(|e| Error::io(&qdir, e))? {
        let entry = entry.map_err(|e| Error::io(&qdir, e))?;
        if let Some(id) = entry.file_name().to_str().and_then(parse_queue_file_name) {
            out.push((id, entry.path()));
        }
    }
    out.sort();
    Ok(out)
}
