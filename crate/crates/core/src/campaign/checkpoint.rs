//! `checkpoint.json`: everything needed to rebuild the corpus and coverage
//! map of a run, written with every stats row.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Campaign;
use crate::corpus::{CrashRecord, Corpus, EnergyConfig, HangRecord, QueueEntry};
use crate::coverage::{CoverageMap, NoveltyRule};
use crate::error::{Error, Result};
use crate::executor::{ExecStatus, Executor, Target};
use crate::scheduler::{OperatorCounts, Scheduler};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub execs: u64,
    pub seed_execs: u64,
    pub elapsed_secs: f64,
    pub cursor: usize,
    pub energy: EnergyConfig,
    pub novelty_rule: NoveltyRule,
    pub queue: Vec<QueueEntry>,
    pub crashes: Vec<CrashRecord>,
    pub hangs: Vec<HangRecord>,
    pub map_size: usize,
    pub map: Vec<(u32, u8)>,
    pub scheduler: Scheduler,
    pub successes: OperatorCounts,
    pub uses: OperatorCounts,
}

/// Writes the checkpoint through a temporary file so readers never see a
/// partial one.
pub(super) fn save(c: &Campaign<'_>) -> Result<()> {
    let cp = Checkpoint {
        execs: c.execs,
        seed_execs: c.seed_execs,
        elapsed_secs: c.clock.secs(),
        cursor: c.corpus.cursor(),
        energy: *c.corpus.energy_config(),
        novelty_rule: c.config.novelty_rule,
        queue: c.corpus.entries().to_vec(),
        crashes: c.corpus.crashes().to_vec(),
        hangs: c.corpus.hangs().to_vec(),
        map_size: c.map.map_size(),
        map: c.map.nonzero_cells(),
        scheduler: c.scheduler.clone(),
        successes: c.successes,
        uses: c.uses,
    };
    let path = c.config.out_dir.join(CHECKPOINT_FILE);
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_vec(&cp)?).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let path = dir.join(CHECKPOINT_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Rebuilds the corpus of a run and its coverage map by re-executing the
/// queue in id order.
///
/// Under [`NoveltyRule::EdgeOrBucket`] every map update came from a queue
/// entry, so the replayed map must equal the saved one. Under
/// [`NoveltyRule::EdgeOnly`] bucket-only updates are not replayable; the
/// replayed map must be contained in the saved one, which is returned.
pub fn reload_corpus(
    dir: &Path,
    target: &dyn Target,
    executor: &mut Executor,
) -> Result<(Corpus, CoverageMap, Checkpoint)> {
    let cp = load_checkpoint(dir)?;
    let corpus = Corpus::restore(
        dir,
        cp.energy,
        cp.queue.clone(),
        cp.crashes.clone(),
        cp.hangs.clone(),
        cp.cursor,
    )?;
    let saved = CoverageMap::from_cells(cp.map_size, &cp.map)?;
    let mut replayed = CoverageMap::new(cp.map_size)?;
    for entry in corpus.entries() {
        let result = executor.execute(target, &entry.data)?;
        if result.status != ExecStatus::Ok {
            return Err(Error::Harness(format!(
                "queue entry {} no longer runs cleanly: {:?}",
                entry.id, result.status
            )));
        }
        replayed.has_new_bits(&result.trace);
    }
    let consistent = match cp.novelty_rule {
        NoveltyRule::EdgeOrBucket => replayed == saved,
        NoveltyRule::EdgeOnly => (0..cp.map_size)
            .all(|i| replayed.cell(i) & !saved.cell(i) == 0),
    };
    if !consistent {
        return Err(Error::Harness(
            "replayed queue does not reproduce the saved coverage map".into(),
        ));
    }
    Ok((corpus, saved, cp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::campaign::{fuzz_loop, Budget, CampaignConfig, StatsInterval, Strategy};
    use crate::executor::targets::TlvParser;

    #[test]
    fn reload_reproduces_queue_and_map() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = CampaignConfig::new("tlv_parser", Strategy::Fidgety, dir.path());
        c.budget = Budget::execs(5000);
        c.stats_interval = StatsInterval {
            secs: None,
            execs: Some(1000),
        };
        let stats = fuzz_loop(&c).unwrap();
        let mut exec = Executor::default();
        let (corpus, map, cp) = reload_corpus(dir.path(), &TlvParser, &mut exec).unwrap();
        assert_eq!(corpus.len() as u64, stats.summary.paths);
        assert_eq!(map.edge_count() as u64, stats.summary.edges);
        assert_eq!(cp.execs, stats.summary.execs);
        for (i, e) in corpus.entries().iter().enumerate() {
            assert_eq!(e.id, i as u64);
        }
        assert_eq!(cp.scheduler, stats.scheduler);
    }

    #[test]
    fn reload_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = CampaignConfig::new("tlv_parser", Strategy::Fidgety, dir.path());
        c.budget = Budget::execs(2000);
        let stats = fuzz_loop(&c).unwrap();
        assert!(stats.summary.paths > 1);
        // The newest entry is the only source of its novel bits.
        let last = crate::corpus::queue_file_name(stats.summary.paths - 1);
        fs::write(dir.path().join("queue").join(last), b"0").unwrap();
        let mut exec = Executor::default();
        assert!(reload_corpus(dir.path(), &TlvParser, &mut exec).is_err());
    }
}
