//! Step-trace records emitted by the augmented environment, one JSON object
//! per line. Field names are part of the external format; see
//! `docs/trace-format.md`.

use crate::error::Result;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    Imaginary,
    Real,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceActions {
    pub real: usize,
    pub imaginary: usize,
    pub reset: bool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TraceRewardPair {
    pub raw: f64,
    pub planning: f64,
}

/// Per-step analytics for the real-action ranking analysis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankInputs {
    pub child_visits: Vec<f64>,
    pub child_mean: Vec<f64>,
    pub child_max: Vec<f64>,
    pub chosen: usize,
}

/// One augmented step. The analytics fields are only present when the
/// wrapper runs with analytics enabled.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub stage: u64,
    pub k: u32,
    pub kind: StepKind,
    pub actions: TraceActions,
    pub reward_pair: TraceRewardPair,
    pub g_max_root: f64,
    pub depth: u32,
    pub done: bool,
    /// Rollout quality relative to the root value (imaginary steps).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Whether this imaginary step created a new node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expanded_new: Option<bool>,
    /// Whether the pointer returned to the root this step (chosen or forced).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reset_fired: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_root: Option<f64>,
    /// Root-children statistics at the moment the real action was taken.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_inputs: Option<RankInputs>,
}

/// Append records to any writer, one JSON object per line.
pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        TraceWriter { out }
    }

    pub fn write(&mut self, record: &TraceRecord) -> Result<()> {
        let line = serde_json::to_string(record).expect("trace records serialise");
        self.out.write_all(line.as_bytes())?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Parse a trace stream, skipping malformed lines.
pub fn read_trace<R: BufRead>(reader: R) -> Result<(Vec<TraceRecord>, usize)> {
    let mut records = Vec::new();
    let mut skipped = 0usize;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<TraceRecord>(&line) {
            Ok(r) => records.push(r),
            Err(_) => skipped += 1,
        }
    }
    Ok((records, skipped))
}
