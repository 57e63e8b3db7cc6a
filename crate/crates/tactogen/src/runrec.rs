//! Run records: every artifact-producing invocation writes its fully
//! resolved configuration before doing any work. The timestamp field is the
//! one part excluded from byte-identity comparisons.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::{format_err, io_err, Result};

#[derive(Debug, Serialize)]
pub struct RunRecord<C: Serialize> {
    pub command: &'static str,
    pub seed: u64,
    pub config: C,
    pub timestamp_unix: u64,
}

pub fn write_run_record<C: Serialize>(dir: &Path, command: &'static str, seed: u64, config: C) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let record = RunRecord {
        command,
        seed,
        config,
        timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    };
    let path = dir.join("run.json");
    let json = serde_json::to_string_pretty(&record)
        .map_err(|e| format_err(&path, None, format!("run record encode: {e}")))?;
    fs::write(&path, json).map_err(io_err(&path))
}
