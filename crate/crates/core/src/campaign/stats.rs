use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::FormatError;

/// One periodic sample of campaign progress.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub exec_index: u64,
    pub wall_seconds: f64,
    pub execs_per_sec: f64,
    pub msgs_per_sec: f64,
    pub edges_covered: u64,
    pub vertices: u64,
    pub state_edges: u64,
    pub corpus_size: u64,
    pub unique_crashes: u64,
}

fn csv_err(path: &Path, e: csv::Error) -> FormatError {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => FormatError::io(path, e),
        other => FormatError::InvalidStats(format!("{}: {other:?}", path.display())),
    }
}

pub fn write_stats(rows: &[StatsRow], path: impl AsRef<Path>) -> Result<(), FormatError> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    if rows.is_empty() {
        w.write_record([
            "exec_index",
            "wall_seconds",
            "execs_per_sec",
            "msgs_per_sec",
            "edges_covered",
            "vertices",
            "state_edges",
            "corpus_size",
            "unique_crashes",
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| FormatError::io(path, e))
}

pub fn read_stats(path: impl AsRef<Path>) -> Result<Vec<StatsRow>, FormatError> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| csv_err(path, e))
}
