//! `plot_data.csv` and `fuzzer_stats`.
//!
//! `plot_data.csv` has a header row followed by one row per stats interval:
//!
//! ```text
//! elapsed_secs,execs,paths,unique_crashes,unique_hangs,p_bit_flip,...,p_extra_insert
//! ```
//!
//! `elapsed_secs` has three decimals and the sixteen `p_<operator>` columns,
//! in [`MutationOperator::ALL`] order, six. Operators outside the campaign's
//! arm set read `0.000000`.

use std::fs::{self, File};
use std::path::Path;

use crate::error::{Error, Result};
use crate::mutation::MutationOperator;

pub const PLOT_FILE: &str = "plot_data.csv";
pub const FUZZER_STATS_FILE: &str = "fuzzer_stats";

const FIXED_COLUMNS: [&str; 5] = ["elapsed_secs", "execs", "paths", "unique_crashes", "unique_hangs"];

pub fn plot_header() -> Vec<String> {
    FIXED_COLUMNS
        .iter()
        .map(|c| c.to_string())
        .chain(MutationOperator::ALL.iter().map(|op| format!("p_{}", op.name())))
        .collect()
}

/// One sample of campaign progress.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsRow {
    pub elapsed_secs: f64,
    /// All executions so far, seeds included.
    pub execs: u64,
    /// Queue length.
    pub paths: u64,
    pub unique_crashes: u64,
    pub unique_hangs: u64,
    /// Indexed like [`MutationOperator::ALL`].
    pub distribution: [f64; MutationOperator::COUNT],
}

impl StatsRow {
    pub fn to_record(&self) -> Vec<String> {
        [
            format!("{:.3}", self.elapsed_secs),
            self.execs.to_string(),
            self.paths.to_string(),
            self.unique_crashes.to_string(),
            self.unique_hangs.to_string(),
        ]
        .into_iter()
        .chain(self.distribution.iter().map(|p| format!("{p:.6}")))
        .collect()
    }

    fn from_record(record: &csv::StringRecord) -> std::result::Result<Self, String> {
        if record.len() != FIXED_COLUMNS.len() + MutationOperator::COUNT {
            return Err(format!("expected {} fields, got {}", plot_header().len(), record.len()));
        }
        let int = |i: usize| -> std::result::Result<u64, String> {
            record[i]
                .parse()
                .map_err(|_| format!("bad {} `{}`", FIXED_COLUMNS[i], &record[i]))
        };
        let float = |i: usize| -> std::result::Result<f64, String> {
            record[i]
                .parse()
                .map_err(|_| format!("bad number `{}`", &record[i]))
        };
        let mut distribution = [0.0; MutationOperator::COUNT];
        for (k, p) in distribution.iter_mut().enumerate() {
            *p = float(FIXED_COLUMNS.len() + k)?;
        }
        Ok(StatsRow {
            elapsed_secs: float(0)?,
            execs: int(1)?,
            paths: int(2)?,
            unique_crashes: int(3)?,
            unique_hangs: int(4)?,
            distribution,
        })
    }
}

/// Appends rows to `plot_data.csv`, flushing after each.
pub struct PlotWriter {
    inner: csv::Writer<File>,
}

impl PlotWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut inner = csv::Writer::from_writer(file);
        inner.write_record(plot_header())?;
        inner.flush().map_err(|e| Error::io(path, e))?;
        Ok(PlotWriter { inner })
    }

    pub fn append(&mut self, row: &StatsRow) -> Result<()> {
        self.inner.write_record(row.to_record())?;
        self.inner
            .flush()
            .map_err(|e| Error::io(Path::new(PLOT_FILE), e))
    }
}

impl std::fmt::Debug for PlotWriter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("PlotWriter")
    }
}

pub fn read_plot_data(path: &Path) -> Result<Vec<StatsRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, 0, format!("{other:?}")),
    })?;
    let header = reader.headers()?.clone();
    if header.iter().ne(plot_header().iter().map(String::as_str)) {
        return Err(Error::parse(path, 1, "unexpected header"));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        rows.push(StatsRow::from_record(&record).map_err(|msg| Error::parse(path, i + 2, msg))?);
    }
    Ok(rows)
}

/// Writes `key : value` lines, keys padded to a common width.
pub fn write_fuzzer_stats(path: &Path, fields: &[(&str, String)]) -> Result<()> {
    let width = fields.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let text: String = fields
        .iter()
        .map(|(k, v)| format!("{k:<width$} : {v}\n"))
        .collect();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(execs: u64) -> StatsRow {
        let mut distribution = [0.0; MutationOperator::COUNT];
        distribution[0] = 0.25;
        distribution[15] = 0.75;
        StatsRow {
            elapsed_secs: 1.5,
            execs,
            paths: 3,
            unique_crashes: 1,
            unique_hangs: 0,
            distribution,
        }
    }

    #[test]
    fn header_layout() {
        let h = plot_header();
        assert_eq!(h.len(), 21);
        assert_eq!(h[0], "elapsed_secs");
        assert_eq!(h[5], "p_bit_flip");
        assert_eq!(h[20], "p_extra_insert");
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(PLOT_FILE);
        let mut w = PlotWriter::create(&path).unwrap();
        w.append(&row(10)).unwrap();
        w.append(&row(20)).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let second = text.lines().nth(1).unwrap();
        assert!(second.starts_with("1.500,10,3,1,0,0.250000,0.000000,"), "{second}");
        assert_eq!(read_plot_data(&path).unwrap(), vec![row(10), row(20)]);
    }

    #[test]
    fn rejects_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(PLOT_FILE);
        fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(read_plot_data(&path).is_err());
        let mut text = plot_header().join(",");
        text.push_str("\n1.0,x,3,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,1\n");
        fs::write(&path, text).unwrap();
        assert!(matches!(read_plot_data(&path), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn fuzzer_stats_alignment() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(FUZZER_STATS_FILE);
        write_fuzzer_stats(&path, &[("execs_done", "5".into()), ("paths", "2".into())]).unwrap();
        assert_eq!(fs::read_to_string(path).unwrap(), "execs_done : 5\npaths      : 2\n");
    }
}
