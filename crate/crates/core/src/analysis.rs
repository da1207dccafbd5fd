//! Offline comparison of finished campaigns: relative coverage per program
//! and checkpoint, its mean and standard error per strategy, and win counts.
//!
//! Relative coverage of strategy `s` on a program at checkpoint `t` is
//! `paths_t(s) / max over s' of paths_t(s')`. A win of `s` over `s'` is a
//! program on which `s` has strictly more paths at the last checkpoint;
//! ties count for neither side.
//!
//! Several runs of the same strategy on the same program (different seeds)
//! are averaged before any ratio is taken.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::campaign::{read_plot_data, RunInfo, PLOT_FILE};
use crate::error::{Error, Result};

/// Which column of the progress rows checkpoints refer to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Axis {
    #[default]
    Execs,
    Secs,
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "execs" => Ok(Axis::Execs),
            "secs" => Ok(Axis::Secs),
            _ => Err(Error::Config(format!("unknown axis `{s}`, want execs|secs"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPoint {
    pub secs: f64,
    pub execs: u64,
    pub paths: u64,
}

impl SeriesPoint {
    fn at(&self, axis: Axis) -> f64 {
        match axis {
            Axis::Execs => self.execs as f64,
            Axis::Secs => self.secs,
        }
    }
}

/// Path-count time series of one campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRun {
    pub strategy: String,
    pub program: String,
    pub series: Vec<SeriesPoint>,
    pub final_crashes: u64,
    /// Configured stats interval in seconds, if the run had one.
    pub secs_interval: Option<f64>,
    /// Configured stats interval in executions, if the run had one.
    pub execs_interval: Option<u64>,
}

impl StrategyRun {
    /// Checks that the series is non-empty and ordered with monotone paths.
    pub fn new(
        strategy: impl Into<String>,
        program: impl Into<String>,
        series: Vec<SeriesPoint>,
        final_crashes: u64,
    ) -> Result<Self> {
        let run = StrategyRun {
            strategy: strategy.into(),
            program: program.into(),
            series,
            final_crashes,
            secs_interval: None,
            execs_interval: None,
        };
        if run.series.is_empty() {
            return Err(Error::Analysis(format!("{}/{}: empty series", run.program, run.strategy)));
        }
        for w in run.series.windows(2) {
            if w[1].execs < w[0].execs || w[1].secs < w[0].secs || w[1].paths < w[0].paths {
                return Err(Error::Analysis(format!(
                    "{}/{}: series is not monotone",
                    run.program, run.strategy
                )));
            }
        }
        Ok(run)
    }

    /// Reads `campaign.json` and `plot_data.csv` from a campaign directory.
    pub fn load(dir: &Path) -> Result<Self> {
        let info = RunInfo::load(dir)?;
        let rows = read_plot_data(&dir.join(PLOT_FILE))?;
        let final_crashes = rows.last().map_or(0, |r| r.unique_crashes);
        let series = rows
            .iter()
            .map(|r| SeriesPoint {
                secs: r.elapsed_secs,
                execs: r.execs,
                paths: r.paths,
            })
            .collect();
        let mut run = StrategyRun::new(info.strategy.name(), info.target, series, final_crashes)?;
        run.secs_interval = info.stats_interval.secs;
        run.execs_interval = info.stats_interval.execs;
        Ok(run)
    }

    /// Tolerance for a checkpoint falling between rows: the configured stats
    /// interval on `axis`, else the largest gap between consecutive rows.
    fn interval(&self, axis: Axis) -> f64 {
        let configured = match axis {
            Axis::Execs => self.execs_interval.map(|e| e as f64),
            Axis::Secs => self.secs_interval,
        };
        configured.unwrap_or_else(|| {
            self.series
                .windows(2)
                .map(|w| w[1].at(axis) - w[0].at(axis))
                .fold(0.0, f64::max)
        })
    }

    /// Paths at checkpoint `t`: the last row at or before `t`, provided the
    /// run reaches `t` and the row is within one stats interval of it.
    pub fn paths_at(&self, t: f64, axis: Axis) -> Result<u64> {
        let last = self.series.last().expect("validated non-empty");
        if last.at(axis) < t {
            return Err(Error::Analysis(format!(
                "{}/{} ends at {} before checkpoint {t}",
                self.program,
                self.strategy,
                last.at(axis)
            )));
        }
        let idx = self.series.partition_point(|p| p.at(axis) <= t);
        let row = idx
            .checked_sub(1)
            .map(|i| &self.series[i])
            .ok_or_else(|| {
                Error::Analysis(format!(
                    "{}/{} has no row at or before checkpoint {t}",
                    self.program, self.strategy
                ))
            })?;
        if t - row.at(axis) > self.interval(axis) {
            return Err(Error::Analysis(format!(
                "{}/{}: nearest row to checkpoint {t} is more than one interval away",
                self.program, self.strategy
            )));
        }
        Ok(row.paths)
    }
}

/// `paths / max(paths)` per strategy.
pub fn rel_cov(paths: &BTreeMap<String, f64>) -> Result<BTreeMap<String, f64>> {
    let max = paths.values().copied().fold(0.0, f64::max);
    if max.is_nan() || max <= 0.0 {
        return Err(Error::Analysis("no strategy found any path".into()));
    }
    Ok(paths.iter().map(|(s, p)| (s.clone(), p / max)).collect())
}

/// Mean path count per strategy at `t` over the given runs of one program.
fn mean_paths(runs: &[&StrategyRun], t: f64, axis: Axis) -> Result<BTreeMap<String, f64>> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for run in runs {
        let p = run.paths_at(t, axis)? as f64;
        let e = sums.entry(run.strategy.clone()).or_default();
        e.0 += p;
        e.1 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(s, (sum, n))| (s, sum / n as f64))
        .collect())
}

/// Relative coverage of each strategy on one program at `t`.
pub fn relative_coverage(runs: &[StrategyRun], t: f64, axis: Axis) -> Result<BTreeMap<String, f64>> {
    let programs: BTreeSet<&str> = runs.iter().map(|r| r.program.as_str()).collect();
    if programs.len() != 1 {
        return Err(Error::Analysis(format!(
            "expected runs of one program, got {}",
            programs.len()
        )));
    }
    let refs: Vec<&StrategyRun> = runs.iter().collect();
    rel_cov(&mean_paths(&refs, t, axis)?)
}

/// Sample mean and standard error (`sd / sqrt(n)`, with the `n - 1` sample
/// deviation). A single sample has standard error zero.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt() / n.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub axis: Axis,
    pub checkpoints: Vec<f64>,
    pub programs: Vec<String>,
    pub strategies: Vec<String>,
    /// `[checkpoint][program][strategy]`, averaged over replicate runs.
    pub paths: Vec<Vec<Vec<f64>>>,
    /// Same shape as `paths`.
    pub rel_cov: Vec<Vec<Vec<f64>>>,
    /// `[checkpoint][strategy]` as `(mean, stderr)` over programs.
    pub summary: Vec<Vec<(f64, f64)>>,
    /// `wins[s][s2]`: programs where `s` beats `s2` at the last checkpoint.
    pub wins: Vec<Vec<u32>>,
    /// Programs where a strategy beats every other one.
    pub wins_all: Vec<u32>,
}

/// Builds the full comparison. Every program must have runs of every
/// strategy that appears anywhere.
pub fn aggregate(runs: &[StrategyRun], checkpoints: &[f64], axis: Axis) -> Result<Report> {
    if runs.is_empty() {
        return Err(Error::Analysis("no runs".into()));
    }
    if checkpoints.is_empty() {
        return Err(Error::Analysis("no checkpoints".into()));
    }
    if checkpoints.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Analysis("checkpoints must increase".into()));
    }
    let programs: Vec<String> = runs
        .iter()
        .map(|r| r.program.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let strategies: Vec<String> = runs
        .iter()
        .map(|r| r.strategy.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut paths = Vec::new();
    let mut rel = Vec::new();
    let mut summary = Vec::new();
    for &t in checkpoints {
        let mut paths_t = Vec::new();
        let mut rel_t = Vec::new();
        for program in &programs {
            let mine: Vec<&StrategyRun> = runs.iter().filter(|r| &r.program == program).collect();
            let means = mean_paths(&mine, t, axis)?;
            if means.len() != strategies.len() {
                let missing: Vec<&str> = strategies
                    .iter()
                    .filter(|s| !means.contains_key(*s))
                    .map(String::as_str)
                    .collect();
                return Err(Error::Analysis(format!(
                    "{program}: no runs for {}",
                    missing.join(", ")
                )));
            }
            let rc = rel_cov(&means)?;
            paths_t.push(means.into_values().collect::<Vec<_>>());
            rel_t.push(rc.into_values().collect::<Vec<_>>());
        }
        let summary_t = (0..strategies.len())
            .map(|s| mean_stderr(&rel_t.iter().map(|p: &Vec<f64>| p[s]).collect::<Vec<_>>()))
            .collect();
        paths.push(paths_t);
        rel.push(rel_t);
        summary.push(summary_t);
    }

    let last = paths.last().expect("at least one checkpoint");
    let n = strategies.len();
    let mut wins = vec![vec![0u32; n]; n];
    let mut wins_all = vec![0u32; n];
    for per_program in last {
        for a in 0..n {
            let mut beats_all = n > 1;
            for b in (0..n).filter(|&b| b != a) {
                if per_program[a] > per_program[b] {
                    wins[a][b] += 1;
                } else {
                    beats_all = false;
                }
            }
            if beats_all {
                wins_all[a] += 1;
            }
        }
    }

    Ok(Report {
        axis,
        checkpoints: checkpoints.to_vec(),
        programs,
        strategies,
        paths,
        rel_cov: rel,
        summary,
        wins,
        wins_all,
    })
}

pub const REPORT_HEADER: [&str; 6] = ["table", "checkpoint", "program", "strategy", "versus", "value"];

impl Report {
    /// Long-format CSV: one value per line under [`REPORT_HEADER`]. Tables
    /// are `paths`, `rel_cov`, `mean_rel_cov`, `stderr_rel_cov`, `wins` and
    /// `wins_all`; empty cells mean "not applicable".
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(REPORT_HEADER)?;
        for (ci, &t) in self.checkpoints.iter().enumerate() {
            let t = t.to_string();
            for (table, data) in [("paths", &self.paths), ("rel_cov", &self.rel_cov)] {
                for (pi, program) in self.programs.iter().enumerate() {
                    for (si, strategy) in self.strategies.iter().enumerate() {
                        let v = data[ci][pi][si].to_string();
                        w.write_record([table, &t, program, strategy, "", &v])?;
                    }
                }
            }
            for (si, strategy) in self.strategies.iter().enumerate() {
                let (mean, se) = self.summary[ci][si];
                w.write_record(["mean_rel_cov", &t, "", strategy, "", &mean.to_string()])?;
                w.write_record(["stderr_rel_cov", &t, "", strategy, "", &se.to_string()])?;
            }
        }
        let t = self.checkpoints.last().expect("non-empty").to_string();
        for (a, strategy) in self.strategies.iter().enumerate() {
            for (b, other) in self.strategies.iter().enumerate().filter(|(b, _)| *b != a) {
                w.write_record(["wins", &t, "", strategy, other, &self.wins[a][b].to_string()])?;
            }
            w.write_record(["wins_all", &t, "", strategy, "", &self.wins_all[a].to_string()])?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Analysis(format!("csv buffer: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    /// Whitespace-separated table for one program: checkpoint, then the
    /// relative coverage of each strategy.
    pub fn plot_table(&self, program: &str) -> Option<String> {
        let pi = self.programs.iter().position(|p| p == program)?;
        let mut out = format!("# checkpoint {}\n", self.strategies.join(" "));
        for (ci, t) in self.checkpoints.iter().enumerate() {
            let _ = write!(out, "{t}");
            for v in &self.rel_cov[ci][pi] {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        Some(out)
    }
}
