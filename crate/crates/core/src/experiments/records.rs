//! Per-trial records and their aggregate summary.
//!
//! CSV columns, in order:
//!
//! | column | meaning |
//! |---|---|
//! | `suite` | suite name |
//! | `cell` | grid cell index, in grid enumeration order |
//! | `replica` | replica index within the cell |
//! | `seed` | seed derived for this trial |
//! | `n` | dimension |
//! | `epsilon` | precision, empty when the suite has none |
//! | `delta` | failure probability of the randomized tester, else empty |
//! | `model` | `hyperplane` or `quadratic`, empty when unused |
//! | `tie_policy` | tie policy label, empty when unused |
//! | `case` | `yes` / `no` for testing suites, else empty |
//! | `status` | `ok`, or `error` when the trial itself failed |
//! | `success` | trial outcome judged against the analytic gradient |
//! | `queries` | comparison queries used |
//! | `error_norm` | suite-specific error measure, see the runner |
//! | `depth` | coherent query depth (quantum suite), else empty |
//! | `detail` | free-form diagnostic text |
//!
//! Wall time is kept in memory only so that replays give identical files.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::experiments::fit::FitReport;
use crate::stats::{wilson_interval, Interval};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub suite: String,
    pub cell: usize,
    pub replica: usize,
    pub seed: u64,
    pub n: usize,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub model: Option<String>,
    pub tie_policy: Option<String>,
    pub case: Option<String>,
    pub status: Status,
    pub success: bool,
    pub queries: u64,
    pub error_norm: Option<f64>,
    pub depth: Option<u32>,
    pub detail: String,
    #[serde(skip)]
    pub wall_time: f64,
}

pub fn write_csv<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    writer.write_record(CSV_HEADER)?;
    for record in records {
        writer.serialize(record)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<RunRecord>> {
    let mut reader = csv::Reader::from_reader(input);
    reader
        .deserialize()
        .map(|row| row.map_err(Into::into))
        .collect()
}

pub const CSV_HEADER: [&str; 16] = [
    "suite",
    "cell",
    "replica",
    "seed",
    "n",
    "epsilon",
    "delta",
    "model",
    "tie_policy",
    "case",
    "status",
    "success",
    "queries",
    "error_norm",
    "depth",
    "detail",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryStats {
    pub mean: f64,
    pub min: u64,
    pub max: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: usize,
    pub n: usize,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub model: Option<String>,
    pub tie_policy: Option<String>,
    pub case: Option<String>,
    pub trials: u64,
    pub errors: u64,
    pub successes: u64,
    pub success_rate: f64,
    pub interval: Interval,
    pub queries: QueryStats,
    pub mean_error_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub suite: String,
    pub records: usize,
    pub cells: Vec<CellSummary>,
    /// Cells in which at least one trial errored.
    pub failed_cells: Vec<usize>,
    pub fits: Vec<FitReport>,
}

impl Summary {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Smallest per-cell success rate, or `None` without cells.
    pub fn min_success_rate(&self) -> Option<f64> {
        self.cells
            .iter()
            .map(|c| c.success_rate)
            .min_by(|a, b| a.total_cmp(b))
    }
}

/// Groups records by cell and aggregates them.
pub fn summarize(suite: &str, records: &[RunRecord], fits: Vec<FitReport>) -> Summary {
    let mut groups: BTreeMap<usize, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.cell).or_default().push(r);
    }
    let cells: Vec<CellSummary> = groups
        .into_iter()
        .map(|(cell, rows)| {
            let first = rows[0];
            let trials = rows.len() as u64;
            let successes = rows.iter().filter(|r| r.success).count() as u64;
            let errors = rows.iter().filter(|r| r.status == Status::Error).count() as u64;
            let queries: Vec<u64> = rows.iter().map(|r| r.queries).collect();
            let norms: Vec<f64> = rows.iter().filter_map(|r| r.error_norm).collect();
            CellSummary {
                cell,
                n: first.n,
                epsilon: first.epsilon,
                delta: first.delta,
                model: first.model.clone(),
                tie_policy: first.tie_policy.clone(),
                case: first.case.clone(),
                trials,
                errors,
                successes,
                success_rate: successes as f64 / trials as f64,
                interval: wilson_interval(successes, trials),
                queries: QueryStats {
                    mean: queries.iter().sum::<u64>() as f64 / trials as f64,
                    min: queries.iter().copied().min().unwrap_or(0),
                    max: queries.iter().copied().max().unwrap_or(0),
                },
                mean_error_norm: (!norms.is_empty())
                    .then(|| norms.iter().sum::<f64>() / norms.len() as f64),
            }
        })
        .collect();
    Summary {
        suite: suite.to_string(),
        records: records.len(),
        failed_cells: cells
            .iter()
            .filter(|c| c.errors > 0)
            .map(|c| c.cell)
            .collect(),
        cells,
        fits,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(cell: usize, success: bool, queries: u64) -> RunRecord {
        RunRecord {
            suite: "estimate".into(),
            cell,
            replica: 0,
            seed: 1,
            n: 10,
            epsilon: Some(0.1),
            delta: None,
            model: Some("hyperplane".into()),
            tie_policy: Some("plus".into()),
            case: None,
            status: Status::Ok,
            success,
            queries,
            error_norm: Some(0.05),
            depth: None,
            detail: "x, \"y\"".into(),
            wall_time: 1.5,
        }
    }

    #[test]
    fn csv_round_trip_drops_wall_time() {
        let rows = vec![record(0, true, 10), record(1, false, 20)];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&CSV_HEADER.join(",")));
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].detail, rows[0].detail);
        assert_eq!(back[1].wall_time, 0.0);
        assert_eq!(back[0].delta, None);
    }

    #[test]
    fn empty_records_give_header_only() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim(), CSV_HEADER.join(","));
    }

    #[test]
    fn summary_aggregates_cells() {
        let rows = vec![record(0, true, 10), record(0, false, 30), record(2, true, 5)];
        let s = summarize("estimate", &rows, Vec::new());
        assert_eq!(s.cells.len(), 2);
        assert_eq!(s.cells[0].successes, 1);
        assert_eq!(s.cells[0].queries.mean, 20.0);
        assert_eq!(s.cells[0].queries.max, 30);
        assert_eq!(s.min_success_rate(), Some(0.5));
        assert!(s.failed_cells.is_empty());
    }
}
