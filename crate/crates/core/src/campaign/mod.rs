//! The fuzz loop: seeds, the optional deterministic stage, then havoc under
//! the configured operator scheduler until the budget runs out.
//!
//! Output directory contents, besides the corpus layout (see
//! [`crate::corpus`]):
//!
//! - `plot_data.csv`: progress rows, see [`stats`].
//! - `fuzzer_stats`: `key : value` summary, rewritten with every row.
//! - `campaign.json`: the [`RunInfo`] of the run.
//! - `checkpoint.json`: queue metadata, coverage map and scheduler state.
//! - `operator_counts`: per-operator success counts, one `name count` line
//!   per operator.

mod checkpoint;
pub mod stats;

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, EnergyConfig, ExecMeta, FindingOutcome, QUEUE_DIR};
use crate::coverage::{CoverageMap, NoveltyRule, DEFAULT_MAP_SIZE};
use crate::error::{Error, Result};
use crate::executor::targets::builtin_target;
use crate::executor::{
    scrape_dictionary, target_dictionary, ExecStatus, Executor, Target, TimingMode,
    DEFAULT_TIMEOUT,
};
use crate::mutation::{
    deterministic_stage, mutate_child, sample_num_mutations, Dictionary, MutationOperator,
    MutationRecord, StackMode, MAX_INPUT,
};
use crate::scheduler::{
    active_arms, BetaPrior, OperatorCounts, OperatorDistribution, RefreshCadence, Scheduler,
};

pub use checkpoint::{load_checkpoint, reload_corpus, Checkpoint, CHECKPOINT_FILE};
pub use stats::{read_plot_data, StatsRow, FUZZER_STATS_FILE, PLOT_FILE};

pub const RUN_INFO_FILE: &str = "campaign.json";
pub const COUNTS_FILE: &str = "operator_counts";

/// Seed used when the seeds directory is absent or empty.
pub const DEFAULT_SEED: &[u8] = b"0";

/// Simulated per-execution process overhead added to the virtual clock.
pub const VIRTUAL_EXEC_OVERHEAD_US: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Deterministic stage, then uniform havoc.
    Afl,
    /// Uniform havoc only.
    Fidgety,
    /// Havoc under a fixed, previously learned distribution.
    Empirical,
    /// Havoc under Thompson sampling.
    Thompson,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Afl,
        Strategy::Fidgety,
        Strategy::Empirical,
        Strategy::Thompson,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Afl => "afl",
            Strategy::Fidgety => "fidgety",
            Strategy::Empirical => "empirical",
            Strategy::Thompson => "thompson",
        }
    }

    pub fn default_stack(self) -> StackMode {
        match self {
            Strategy::Thompson => StackMode::Fixed(4.try_into().expect("non-zero")),
            _ => StackMode::UniformPowers,
        }
    }

    pub fn runs_deterministic_stage(self) -> bool {
        self == Strategy::Afl
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))
    }
}

/// Where the extra-operator tokens come from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DictionarySource {
    None,
    /// String constants scraped from the target's own artifact.
    #[default]
    Artifact,
    /// A dictionary file.
    File(PathBuf),
    /// String constants scraped from an arbitrary file.
    Scrape(PathBuf),
}

impl DictionarySource {
    pub fn resolve(&self, target: &dyn Target) -> Result<Dictionary> {
        match self {
            DictionarySource::None => Ok(Dictionary::default()),
            DictionarySource::Artifact => Ok(target_dictionary(target)),
            DictionarySource::File(path) => Dictionary::load(path),
            DictionarySource::Scrape(path) => {
                let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
                Ok(scrape_dictionary(&bytes))
            }
        }
    }
}

/// Stop condition; whichever limit is reached first. Seed executions do not
/// count against `execs`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub execs: Option<u64>,
    /// Real elapsed time, regardless of the timing mode.
    pub wall: Option<Duration>,
}

impl Budget {
    pub fn execs(n: u64) -> Self {
        Budget {
            execs: Some(n),
            wall: None,
        }
    }

    pub fn wall(d: Duration) -> Self {
        Budget {
            execs: None,
            wall: Some(d),
        }
    }
}

/// When a progress row is written; whichever limit is reached first.
/// Seconds are on the campaign clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsInterval {
    pub secs: Option<f64>,
    pub execs: Option<u64>,
}

impl Default for StatsInterval {
    fn default() -> Self {
        StatsInterval {
            secs: Some(10.0),
            execs: None,
        }
    }
}

impl StatsInterval {
    fn due(&self, execs_since: u64, secs_since: f64) -> bool {
        self.execs.is_some_and(|e| execs_since >= e) || self.secs.is_some_and(|s| secs_since >= s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub target: String,
    pub strategy: Strategy,
    /// `None` picks [`Strategy::default_stack`].
    pub stack: Option<StackMode>,
    pub seeds: Option<PathBuf>,
    pub dictionary: DictionarySource,
    pub budget: Budget,
    pub rng_seed: u64,
    pub out_dir: PathBuf,
    pub cadence: RefreshCadence,
    pub prior: BetaPrior,
    /// Required by [`Strategy::Empirical`], ignored otherwise.
    pub distribution: Option<OperatorDistribution>,
    pub timing: TimingMode,
    pub stats_interval: StatsInterval,
    pub map_size: usize,
    pub timeout: Duration,
    pub novelty_rule: NoveltyRule,
    pub energy: EnergyConfig,
}

impl CampaignConfig {
    pub fn new(target: &str, strategy: Strategy, out_dir: impl Into<PathBuf>) -> Self {
        CampaignConfig {
            target: target.to_string(),
            strategy,
            stack: None,
            seeds: None,
            dictionary: DictionarySource::default(),
            budget: Budget::execs(100_000),
            rng_seed: 0,
            out_dir: out_dir.into(),
            cadence: RefreshCadence::default(),
            prior: BetaPrior::default(),
            distribution: None,
            timing: TimingMode::default(),
            stats_interval: StatsInterval::default(),
            map_size: DEFAULT_MAP_SIZE,
            timeout: DEFAULT_TIMEOUT,
            novelty_rule: NoveltyRule::default(),
            energy: EnergyConfig::default(),
        }
    }

    pub fn stack_mode(&self) -> StackMode {
        self.stack.unwrap_or(self.strategy.default_stack())
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget.execs.is_none() && self.budget.wall.is_none() {
            return Err(Error::Config("no execution or time budget".into()));
        }
        if self.budget.wall.is_some_and(|d| d.is_zero()) {
            return Err(Error::Config("time budget must be positive".into()));
        }
        if self.stats_interval.secs.is_none() && self.stats_interval.execs.is_none() {
            return Err(Error::Config("stats interval has no limit".into()));
        }
        if self.stats_interval.secs.is_some_and(|s| s.is_nan() || s <= 0.0)
            || self.stats_interval.execs == Some(0)
        {
            return Err(Error::Config("stats interval must be positive".into()));
        }
        if self.cadence.secs.is_none() && self.cadence.execs.is_none() {
            return Err(Error::Config("refresh cadence has no limit".into()));
        }
        if self.strategy == Strategy::Empirical && self.distribution.is_none() {
            return Err(Error::Config(
                "empirical strategy needs a distribution file".into(),
            ));
        }
        Ok(())
    }
}

/// What `campaign.json` records about a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub target: String,
    pub strategy: Strategy,
    pub stack: String,
    pub rng_seed: u64,
    pub budget: Budget,
    pub timing: TimingMode,
    pub stats_interval: StatsInterval,
    pub cadence: RefreshCadence,
    pub prior: BetaPrior,
    pub dictionary_tokens: usize,
    pub arms: Vec<MutationOperator>,
    pub novelty_rule: NoveltyRule,
}

impl RunInfo {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(RUN_INFO_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Totals at the end of a campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSummary {
    pub execs: u64,
    pub seed_execs: u64,
    pub deterministic_execs: u64,
    pub havoc_execs: u64,
    pub elapsed_secs: f64,
    pub paths: u64,
    pub edges: u64,
    pub unique_crashes: u64,
    pub unique_hangs: u64,
    /// Children an operator helped build that reached the queue, one
    /// increment per occurrence in the stack.
    pub successes: OperatorCounts,
    /// Every havoc operator draw.
    pub uses: OperatorCounts,
    pub refreshes: u64,
    pub final_distribution: OperatorDistribution,
}

#[derive(Debug, Clone)]
pub struct CampaignStats {
    pub rows: Vec<StatsRow>,
    pub summary: CampaignSummary,
    pub scheduler: Scheduler,
}

/// Runs a campaign against a built-in target.
pub fn fuzz_loop(config: &CampaignConfig) -> Result<CampaignStats> {
    let target = builtin_target(&config.target)?;
    fuzz_target(config, target.as_ref())
}

/// Runs a campaign against any target; `config.target` is only recorded.
pub fn fuzz_target(config: &CampaignConfig, target: &dyn Target) -> Result<CampaignStats> {
    Campaign::new(config, target)?.run()
}

/// Writes the success counts of a finished run.
pub fn export_training_counts(stats: &CampaignStats, path: &Path) -> Result<()> {
    stats.summary.successes.save(path)
}

/// Sums count files.
pub fn merge_training_counts<P: AsRef<Path>>(paths: &[P]) -> Result<OperatorCounts> {
    let mut total = OperatorCounts::default();
    for p in paths {
        total.merge(&OperatorCounts::load(p.as_ref())?);
    }
    Ok(total)
}

/// Seed inputs: every regular file in `dir`, by name, or [`DEFAULT_SEED`].
pub fn load_seeds(dir: Option<&Path>) -> Result<Vec<Vec<u8>>> {
    let mut seeds = Vec::new();
    if let Some(dir) = dir {
        let mut paths = Vec::new();
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            if entry.file_type().map_err(|e| Error::io(entry.path(), e))?.is_file() {
                paths.push(entry.path());
            }
        }
        paths.sort();
        for p in paths {
            let data = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            if data.len() > MAX_INPUT {
                return Err(Error::Config(format!(
                    "seed {} exceeds {MAX_INPUT} bytes",
                    p.display()
                )));
            }
            seeds.push(data);
        }
    }
    if seeds.is_empty() {
        seeds.push(DEFAULT_SEED.to_vec());
    }
    Ok(seeds)
}

struct Clock {
    timing: TimingMode,
    started: Instant,
    virtual_us: u64,
}

impl Clock {
    fn advance(&mut self, duration_us: u64) {
        self.virtual_us += duration_us + VIRTUAL_EXEC_OVERHEAD_US;
    }

    fn secs(&self) -> f64 {
        match self.timing {
            TimingMode::Virtual => self.virtual_us as f64 / 1e6,
            TimingMode::Wall => self.started.elapsed().as_secs_f64(),
        }
    }
}

struct Campaign<'a> {
    config: &'a CampaignConfig,
    target: &'a dyn Target,
    executor: Executor,
    map: CoverageMap,
    corpus: Corpus,
    scheduler: Scheduler,
    dict: Dictionary,
    stack: StackMode,
    rng: ChaCha8Rng,
    clock: Clock,
    execs: u64,
    seed_execs: u64,
    deterministic_execs: u64,
    havoc_execs: u64,
    successes: OperatorCounts,
    uses: OperatorCounts,
    rows: Vec<StatsRow>,
    plot: stats::PlotWriter,
    last_row: (u64, f64),
}

impl<'a> Campaign<'a> {
    fn new(config: &'a CampaignConfig, target: &'a dyn Target) -> Result<Self> {
        config.validate()?;
        let out = &config.out_dir;
        let queue = out.join(QUEUE_DIR);
        if queue.is_dir() && fs::read_dir(&queue).map_err(|e| Error::io(&queue, e))?.next().is_some() {
            return Err(Error::Config(format!(
                "{} already holds a campaign",
                out.display()
            )));
        }
        let dict = config.dictionary.resolve(target)?;
        let arms = active_arms(!dict.is_empty());
        let scheduler = match config.strategy {
            Strategy::Afl | Strategy::Fidgety => Scheduler::uniform(arms.clone()),
            Strategy::Empirical => Scheduler::empirical(arms.clone(), config.distribution.as_ref())?,
            Strategy::Thompson => Scheduler::thompson(arms.clone(), config.prior, config.cadence),
        };
        let corpus = Corpus::create(out, config.energy)?;
        let info = RunInfo {
            target: config.target.clone(),
            strategy: config.strategy,
            stack: config.stack_mode().to_string(),
            rng_seed: config.rng_seed,
            budget: config.budget,
            timing: config.timing,
            stats_interval: config.stats_interval,
            cadence: config.cadence,
            prior: config.prior,
            dictionary_tokens: dict.len(),
            arms,
            novelty_rule: config.novelty_rule,
        };
        let info_path = out.join(RUN_INFO_FILE);
        fs::write(&info_path, serde_json::to_string_pretty(&info)?)
            .map_err(|e| Error::io(&info_path, e))?;
        log::info!(
            "{} on {}: {} dictionary tokens, stack {}",
            config.strategy,
            config.target,
            dict.len(),
            config.stack_mode()
        );
        Ok(Campaign {
            config,
            target,
            executor: Executor::new(config.map_size, config.timeout, config.timing)?,
            map: CoverageMap::new(config.map_size)?,
            corpus,
            scheduler,
            dict,
            stack: config.stack_mode(),
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
            clock: Clock {
                timing: config.timing,
                started: Instant::now(),
                virtual_us: 0,
            },
            execs: 0,
            seed_execs: 0,
            deterministic_execs: 0,
            havoc_execs: 0,
            successes: OperatorCounts::default(),
            uses: OperatorCounts::default(),
            rows: Vec::new(),
            plot: stats::PlotWriter::create(&out.join(PLOT_FILE))?,
            last_row: (0, 0.0),
        })
    }

    fn exhausted(&self) -> bool {
        let budget = &self.config.budget;
        budget.execs.is_some_and(|n| self.execs - self.seed_execs >= n)
            || budget.wall.is_some_and(|d| self.clock.started.elapsed() >= d)
    }

    fn run(mut self) -> Result<CampaignStats> {
        for seed in load_seeds(self.config.seeds.as_deref())? {
            self.run_child(&seed, None, None)?;
        }
        self.seed_execs = self.execs;
        if self.corpus.is_empty() {
            return Err(Error::Config(
                "no seed input ran cleanly; the queue is empty".into(),
            ));
        }
        self.write_row()?;

        'outer: while !self.exhausted() {
            let (parent, energy) = {
                let (entry, energy) = self.corpus.pick_input();
                (entry.clone(), energy)
            };
            if self.config.strategy.runs_deterministic_stage() && !parent.deterministic_done {
                for child in deterministic_stage(&parent.data) {
                    if self.exhausted() {
                        break 'outer;
                    }
                    self.run_child(&child, Some(parent.id), None)?;
                    self.deterministic_execs += 1;
                }
                self.corpus.mark_deterministic_done(parent.id);
            }
            for _ in 0..energy {
                if self.exhausted() {
                    break 'outer;
                }
                let stack = sample_num_mutations(self.stack, &mut self.rng);
                let (child, record) = mutate_child(
                    &parent.data,
                    stack,
                    self.scheduler.current_distribution(),
                    &mut self.rng,
                    &self.dict,
                );
                self.run_child(&child, Some(parent.id), Some(&record))?;
                self.havoc_execs += 1;
            }
        }
        if self.rows.last().is_none_or(|r| r.execs != self.execs) {
            self.write_row()?;
        }
        self.successes
            .save(&self.config.out_dir.join(COUNTS_FILE))?;
        let summary = self.summary();
        log::info!(
            "done: {} execs, {} paths, {} crashes, {} hangs",
            summary.execs,
            summary.paths,
            summary.unique_crashes,
            summary.unique_hangs
        );
        Ok(CampaignStats {
            rows: self.rows,
            summary,
            scheduler: self.scheduler,
        })
    }

    /// Executes one input and files the outcome. Havoc children carry their
    /// mutation record for credit assignment.
    fn run_child(
        &mut self,
        child: &[u8],
        parent_id: Option<u64>,
        record: Option<&MutationRecord>,
    ) -> Result<()> {
        let result = self.executor.execute(self.target, child)?;
        self.execs += 1;
        self.clock.advance(result.duration_us);
        let success = match &result.status {
            ExecStatus::Ok => {
                let verdict = self.map.has_new_bits(&result.trace);
                let meta = ExecMeta {
                    discovery_time: self.execs,
                    exec_time: result.duration_us,
                    path_edges: result.trace.len(),
                    parent_id,
                };
                self.corpus
                    .add_if_interesting(child, verdict, self.config.novelty_rule, meta)?
                    .is_some()
            }
            ExecStatus::Crash(kind) => {
                if let FindingOutcome::Added(id) =
                    self.corpus.record_crash(child, &result.trace, kind.clone())?
                {
                    log::info!("crash #{id} after {} execs: {}", self.execs, kind.message());
                }
                false
            }
            ExecStatus::Hang => {
                self.corpus.record_hang(child, &result.trace)?;
                false
            }
        };
        if let Some(record) = record {
            for op in record.operators() {
                self.uses.add(op, 1);
                if success {
                    self.successes.add(op, 1);
                }
            }
            self.scheduler.observe(record, success);
            self.scheduler
                .maybe_refresh(self.execs, self.clock.secs(), &mut self.rng);
        }
        let (row_execs, row_secs) = self.last_row;
        if !self.rows.is_empty()
            && self
                .config
                .stats_interval
                .due(self.execs - row_execs, self.clock.secs() - row_secs)
        {
            self.write_row()?;
        }
        Ok(())
    }

    fn write_row(&mut self) -> Result<()> {
        let secs = self.clock.secs();
        let row = StatsRow {
            elapsed_secs: secs,
            execs: self.execs,
            paths: self.corpus.len() as u64,
            unique_crashes: self.corpus.crashes().len() as u64,
            unique_hangs: self.corpus.hangs().len() as u64,
            distribution: self.scheduler.current_distribution().full(),
        };
        self.plot.append(&row)?;
        self.rows.push(row);
        self.last_row = (self.execs, secs);
        self.write_fuzzer_stats()?;
        checkpoint::save(self)
    }

    fn write_fuzzer_stats(&self) -> Result<()> {
        let s = self.summary();
        stats::write_fuzzer_stats(
            &self.config.out_dir.join(FUZZER_STATS_FILE),
            &[
                ("target", self.config.target.clone()),
                ("strategy", self.config.strategy.to_string()),
                ("stack", self.stack.to_string()),
                ("rng_seed", self.config.rng_seed.to_string()),
                ("elapsed_secs", format!("{:.3}", s.elapsed_secs)),
                ("execs_done", s.execs.to_string()),
                ("seed_execs", s.seed_execs.to_string()),
                ("paths_total", s.paths.to_string()),
                ("edges_found", s.edges.to_string()),
                ("unique_crashes", s.unique_crashes.to_string()),
                ("unique_hangs", s.unique_hangs.to_string()),
                ("dictionary_tokens", self.dict.len().to_string()),
                ("refreshes", s.refreshes.to_string()),
            ],
        )
    }

    fn summary(&self) -> CampaignSummary {
        CampaignSummary {
            execs: self.execs,
            seed_execs: self.seed_execs,
            deterministic_execs: self.deterministic_execs,
            havoc_execs: self.havoc_execs,
            elapsed_secs: self.clock.secs(),
            paths: self.corpus.len() as u64,
            edges: self.map.edge_count() as u64,
            unique_crashes: self.corpus.crashes().len() as u64,
            unique_hangs: self.corpus.hangs().len() as u64,
            successes: self.successes,
            uses: self.uses,
            refreshes: self.scheduler.refreshes(),
            final_distribution: self.scheduler.current_distribution().clone(),
        }
    }
}
