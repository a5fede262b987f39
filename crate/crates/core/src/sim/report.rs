//! Sweeps over simulator configs and tabular reports of their metrics.

use std::io::{self, Write};

use thiserror::Error;

use super::{run_sim, SimConfig, SimError, SimMetrics};
use crate::sensor::TraceSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            _ => Err(format!("unknown report format `{s}` (csv|md)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRow {
    pub config: SimConfig,
    pub metrics: SimMetrics,
}

pub const REPORT_COLUMNS: [&str; 15] = [
    "mode",
    "latency",
    "write_model",
    "overlap_events",
    "torn_read_count",
    "out_of_order_commits",
    "versions_relayed",
    "versions_observed",
    "max_staleness_ms",
    "empty_body_polls",
    "wrong_field_count",
    "not_numeric",
    "relay_interval_ms",
    "poll_interval_ms",
    "seed",
];

fn row_cells(row: &SimRow) -> Vec<String> {
    let (c, m) = (&row.config, &row.metrics);
    let failures = |k: &str| m.poll.decode_failures.get(k).copied().unwrap_or(0).to_string();
    vec![
        c.mode.to_string(),
        c.latency.to_string(),
        c.write_model.to_string(),
        m.relay.overlap_events.to_string(),
        m.torn_read_count.to_string(),
        m.out_of_order_commits.to_string(),
        m.versions_relayed.to_string(),
        m.versions_observed.to_string(),
        m.max_staleness_ms.map(|s| format!("{s:.3}")).unwrap_or_default(),
        m.poll.empty_body_polls.to_string(),
        failures("wrong_field_count"),
        failures("not_numeric"),
        c.relay_interval_ms.to_string(),
        c.poll_interval_ms.to_string(),
        c.seed.to_string(),
    ]
}

/// Writes one header line and one line per row.
pub fn report<W: Write>(rows: &[SimRow], format: ReportFormat, out: W) -> io::Result<()> {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(REPORT_COLUMNS)?;
            for row in rows {
                w.write_record(row_cells(row))?;
            }
            w.flush()
        }
        ReportFormat::Markdown => {
            let mut out = out;
            writeln!(out, "| {} |", REPORT_COLUMNS.join(" | "))?;
            writeln!(out, "|{}", "---|".repeat(REPORT_COLUMNS.len()))?;
            for row in rows {
                writeln!(out, "| {} |", row_cells(row).join(" | "))?;
            }
            out.flush()
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SweepError {
    #[error("grid line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("empty grid")]
    Empty,
    #[error("cell {index} ({cell}): {source}")]
    Cell {
        index: usize,
        cell: String,
        #[source]
        source: SimError,
    },
}

/// A base config plus axes. Every combination of axis values is one cell;
/// the last axis varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub base: SimConfig,
    pub axes: Vec<(String, Vec<String>)>,
}

const KEYS: [&str; 10] = [
    "mode",
    "relay_interval_ms",
    "poll_interval_ms",
    "latency",
    "write_model",
    "duration_ms",
    "seed",
    "trace",
    "max_inflight",
    "timeout_ms",
];

impl SweepGrid {
    pub fn new(base: SimConfig) -> Self {
        SweepGrid { base, axes: Vec::new() }
    }

    pub fn axis(mut self, key: &str, values: &[&str]) -> Self {
        self.axes
            .push((key.to_owned(), values.iter().map(|v| (*v).to_owned()).collect()));
        self
    }

    /// Parses `key=v1|v2|...` lines. Blank lines and `#` comments are
    /// skipped. A key with one value just sets the base.
    pub fn parse(text: &str, base: SimConfig) -> Result<Self, SweepError> {
        let mut grid = SweepGrid::new(base);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| SweepError::Parse { line: i + 1, msg };
            let (key, values) = line.split_once('=').ok_or_else(|| err("expected key=value".into()))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(err(format!("unknown key `{key}`")));
            }
            if grid.axes.iter().any(|(k, _)| k == key) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            let values: Vec<String> = values.split('|').map(|v| v.trim().to_owned()).collect();
            if values.iter().any(String::is_empty) {
                return Err(err("empty value".into()));
            }
            grid.axes.push((key.to_owned(), values));
        }
        Ok(grid)
    }

    pub fn cell_count(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    /// Cells in order, each with its `key=value` assignments.
    pub fn cells(&self) -> Vec<Vec<(&str, &str)>> {
        let mut cells: Vec<Vec<(&str, &str)>> = vec![Vec::new()];
        for (key, values) in &self.axes {
            cells = cells
                .into_iter()
                .flat_map(|cell| {
                    values.iter().map(move |v| {
                        let mut c = cell.clone();
                        c.push((key.as_str(), v.as_str()));
                        c
                    })
                })
                .collect();
        }
        cells
    }
}

fn apply(cfg: &mut SimConfig, key: &str, value: &str) -> Result<(), SimError> {
    let bad = || SimError::InvalidConfig(format!("bad value `{value}` for {key}"));
    let num = |v: &str| v.parse::<u64>().map_err(|_| bad());
    match key {
        "mode" => cfg.mode = value.parse().map_err(|_| bad())?,
        "relay_interval_ms" => cfg.relay_interval_ms = num(value)?,
        "poll_interval_ms" => cfg.poll_interval_ms = num(value)?,
        "latency" => cfg.latency = value.parse()?,
        "write_model" => cfg.write_model = value.parse()?,
        "duration_ms" => cfg.duration_ms = num(value)?,
        "seed" => {
            cfg.seed = num(value)?;
            cfg.trace.seed = cfg.seed;
        }
        "trace" => {
            let seed = cfg.trace.seed;
            cfg.trace = value
                .parse::<TraceSpec>()
                .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
            cfg.trace.seed = seed;
        }
        "max_inflight" => {
            cfg.max_inflight = if value == "none" {
                None
            } else {
                Some(num(value)? as usize)
            }
        }
        "timeout_ms" => cfg.request_timeout_ms = if value == "none" { None } else { Some(num(value)?) },
        _ => return Err(SimError::InvalidConfig(format!("unknown key `{key}`"))),
    }
    Ok(())
}

/// Runs every cell. The first invalid cell aborts the sweep.
pub fn sweep(grid: &SweepGrid) -> Result<Vec<SimRow>, SweepError> {
    if grid.cell_count() == 0 {
        return Err(SweepError::Empty);
    }
    let mut rows = Vec::with_capacity(grid.cell_count());
    for (index, cell) in grid.cells().into_iter().enumerate() {
        let label = || {
            cell.iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let mut config = grid.base.clone();
        let result = cell
            .iter()
            .try_for_each(|(k, v)| apply(&mut config, k, v))
            .and_then(|_| run_sim(&config));
        match result {
            Ok(metrics) => rows.push(SimRow { config, metrics }),
            Err(source) => {
                return Err(SweepError::Cell {
                    index,
                    cell: label(),
                    source,
                })
            }
        }
    }
    Ok(rows)
}
