use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use opfuzz::analysis::{aggregate, Axis, StrategyRun};
use opfuzz::campaign::{
    fuzz_loop, merge_training_counts, Budget, CampaignConfig, DictionarySource, StatsInterval,
    Strategy, RUN_INFO_FILE,
};
use opfuzz::coverage::NoveltyRule;
use opfuzz::executor::TimingMode;
use opfuzz::mutation::StackMode;
use opfuzz::scheduler::{BetaPrior, OperatorDistribution, RefreshCadence};
use opfuzz::Error;

#[derive(Parser)]
#[command(name = "opfuzz", version, about = "Coverage-guided fuzzer with adaptive mutation scheduling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a fuzzing campaign against a built-in target.
    Fuzz(FuzzArgs),
    /// Sum operator count files and write an empirical distribution.
    TrainMerge(TrainMergeArgs),
    /// Compare finished campaigns by relative coverage and wins.
    Analyze(AnalyzeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Afl,
    Fidgety,
    Empirical,
    Thompson,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Afl => Strategy::Afl,
            StrategyArg::Fidgety => Strategy::Fidgety,
            StrategyArg::Empirical => Strategy::Empirical,
            StrategyArg::Thompson => Strategy::Thompson,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TimingArg {
    Virtual,
    Wall,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoveltyArg {
    EdgeOrBucket,
    EdgeOnly,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Execs,
    Secs,
}

#[derive(Args)]
struct FuzzArgs {
    /// Built-in target name.
    #[arg(long)]
    target: String,
    #[arg(long, value_enum)]
    strategy: StrategyArg,
    /// Output directory; must not already hold a campaign.
    #[arg(long)]
    out: PathBuf,
    /// Directory of seed inputs.
    #[arg(long)]
    seeds: Option<PathBuf>,
    /// Dictionary file of quoted or bare tokens.
    #[arg(long, group = "dictionary")]
    dict: Option<PathBuf>,
    /// Scrape string constants from this file for the dictionary.
    #[arg(long, group = "dictionary")]
    scrape: Option<PathBuf>,
    /// Run without a dictionary. By default tokens come from the target.
    #[arg(long, group = "dictionary")]
    no_dict: bool,
    /// Execution budget, seed runs excluded.
    #[arg(long, required_unless_present = "minutes")]
    execs: Option<u64>,
    /// Real-time budget in minutes.
    #[arg(long)]
    minutes: Option<f64>,
    /// `uniform` or `fixed:N`. Defaults to fixed:4 for thompson.
    #[arg(long)]
    stack: Option<StackMode>,
    /// Beta prior `A,B` for thompson.
    #[arg(long)]
    prior: Option<BetaPrior>,
    /// Seconds between thompson redraws.
    #[arg(long)]
    refresh_secs: Option<f64>,
    /// Executions between thompson redraws.
    #[arg(long)]
    refresh_execs: Option<u64>,
    /// Randomness seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Operator distribution file for the empirical strategy.
    #[arg(long)]
    distribution: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "virtual")]
    timing: TimingArg,
    /// Seconds between progress rows.
    #[arg(long)]
    stats_secs: Option<f64>,
    /// Executions between progress rows.
    #[arg(long)]
    stats_execs: Option<u64>,
    /// Per-execution timeout in milliseconds.
    #[arg(long, default_value_t = 50)]
    timeout_ms: u64,
    /// Coverage map size, a power of two.
    #[arg(long, default_value_t = opfuzz::coverage::DEFAULT_MAP_SIZE)]
    map_size: usize,
    #[arg(long, value_enum, default_value = "edge-or-bucket")]
    novelty: NoveltyArg,
}

#[derive(Args)]
struct TrainMergeArgs {
    /// Operator count files from training runs.
    #[arg(required = true)]
    counts: Vec<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
    /// Write the summed counts instead of a distribution.
    #[arg(long)]
    counts_only: bool,
    /// Add one to every count before normalizing.
    #[arg(long)]
    smoothing: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Campaign directories, or directories holding campaign directories.
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    /// Comma-separated checkpoints on the chosen axis.
    #[arg(long, value_delimiter = ',', required = true)]
    checkpoints: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "execs")]
    axis: AxisArg,
    /// Also write one whitespace-separated table per program here.
    #[arg(long)]
    plot_dir: Option<PathBuf>,
}

fn fuzz(args: FuzzArgs) -> Result<()> {
    let strategy = Strategy::from(args.strategy);
    let mut config = CampaignConfig::new(&args.target, strategy, &args.out);
    config.seeds = args.seeds;
    config.dictionary = match (args.dict, args.scrape, args.no_dict) {
        (Some(p), _, _) => DictionarySource::File(p),
        (_, Some(p), _) => DictionarySource::Scrape(p),
        (_, _, true) => DictionarySource::None,
        _ => DictionarySource::Artifact,
    };
    if let Some(m) = args.minutes {
        if m.is_nan() || m <= 0.0 {
            bail!("--minutes must be positive");
        }
    }
    config.budget = Budget {
        execs: args.execs,
        wall: args.minutes.map(|m| Duration::from_secs_f64(m * 60.0)),
    };
    config.stack = args.stack;
    if let Some(p) = args.prior {
        config.prior = p;
    }
    if args.refresh_secs.is_some() || args.refresh_execs.is_some() {
        config.cadence = RefreshCadence {
            secs: args.refresh_secs,
            execs: args.refresh_execs,
        };
    }
    config.rng_seed = args.seed;
    if let Some(path) = &args.distribution {
        config.distribution = Some(OperatorDistribution::load(path)?);
    }
    config.timing = match args.timing {
        TimingArg::Virtual => TimingMode::Virtual,
        TimingArg::Wall => TimingMode::Wall,
    };
    if args.stats_secs.is_some() || args.stats_execs.is_some() {
        config.stats_interval = StatsInterval {
            secs: args.stats_secs,
            execs: args.stats_execs,
        };
    }
    config.timeout = Duration::from_millis(args.timeout_ms);
    config.map_size = args.map_size;
    config.novelty_rule = match args.novelty {
        NoveltyArg::EdgeOrBucket => NoveltyRule::EdgeOrBucket,
        NoveltyArg::EdgeOnly => NoveltyRule::EdgeOnly,
    };

    let stats = fuzz_loop(&config)?;
    let s = &stats.summary;
    println!(
        "{} on {}: {} execs ({} seed), {} paths, {} edges, {} unique crashes, {} unique hangs",
        strategy,
        config.target,
        s.execs,
        s.seed_execs,
        s.paths,
        s.edges,
        s.unique_crashes,
        s.unique_hangs
    );
    Ok(())
}

fn train_merge(args: TrainMergeArgs) -> Result<()> {
    let merged = merge_training_counts(&args.counts)?;
    if args.counts_only {
        merged.save(&args.output)?;
        println!("{} successes across {} files", merged.total(), args.counts.len());
        return Ok(());
    }
    let dist = merged.to_distribution(args.smoothing)?;
    dist.save(&args.output)?;
    println!(
        "distribution from {} successes across {} files",
        merged.total(),
        args.counts.len()
    );
    Ok(())
}

/// Campaign directories named by `paths`, expanding one level of nesting.
fn campaign_dirs(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.join(RUN_INFO_FILE).is_file() {
            out.push(p.clone());
            continue;
        }
        let mut found: Vec<PathBuf> = std::fs::read_dir(p)
            .with_context(|| format!("reading {}", p.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|d| d.join(RUN_INFO_FILE).is_file())
            .collect();
        if found.is_empty() {
            bail!("{} holds no campaign", p.display());
        }
        found.sort();
        out.extend(found);
    }
    Ok(out)
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let axis = match args.axis {
        AxisArg::Execs => Axis::Execs,
        AxisArg::Secs => Axis::Secs,
    };
    let runs = campaign_dirs(&args.runs)?
        .iter()
        .map(|d| StrategyRun::load(d).with_context(|| format!("loading {}", d.display())))
        .collect::<Result<Vec<_>>>()?;
    let report = aggregate(&runs, &args.checkpoints, axis)?;
    report.write_csv(&args.out)?;
    if let Some(dir) = &args.plot_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for program in &report.programs {
            let table = report.plot_table(program).expect("program from report");
            write(&dir.join(format!("{program}.dat")), &table)?;
        }
    }
    let last = report.summary.last().expect("at least one checkpoint");
    for (si, strategy) in report.strategies.iter().enumerate() {
        let (mean, se) = last[si];
        println!(
            "{strategy:<10} rel-cov {mean:.3} +- {se:.3}  wins vs all {}",
            report.wins_all[si]
        );
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fuzz(a) => fuzz(a),
        Command::TrainMerge(a) => train_merge(a),
        Command::Analyze(a) => analyze(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if matches!(e.downcast_ref::<Error>(), Some(Error::InsufficientTrainingData)) {
                log::error!("every count is zero; run longer training campaigns");
            }
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
