use crate::error::Result;
use crate::trace::{read_trace, StepKind, TraceRecord};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// Per-stage behaviour aggregates extracted from a step trace.
#[derive(Debug, Clone, Default)]
pub struct StageAggregates {
    /// Rollout quality at steps where the pointer returned to the root.
    pub reset_deltas: Vec<f64>,
    /// Rollout quality at steps where it did not.
    pub noreset_deltas: Vec<f64>,
    /// New-node count per rollout, recorded at each reset.
    pub expansion_lengths: Vec<usize>,
    /// Largest per-step delta in each stage that had imaginary steps.
    pub delta_max_per_stage: Vec<(u64, f64)>,
    /// Share of real actions choosing the rank-i child under each
    /// statistic (visit count, mean return, max return).
    pub rank_share_visits: Vec<f64>,
    pub rank_share_mean: Vec<f64>,
    pub rank_share_max: Vec<f64>,
    /// Malformed lines skipped while reading.
    pub skipped_lines: usize,
}

/// Rank of the chosen entry under descending order; ties take the better
/// rank.
fn rank_of(values: &[f64], chosen: usize) -> usize {
    values
        .iter()
        .filter(|&&v| v > values[chosen] + 1e-12)
        .count()
}

pub fn analyze_records(records: &[TraceRecord]) -> StageAggregates {
    let mut agg = StageAggregates::default();
    let mut stage_max: BTreeMap<u64, f64> = BTreeMap::new();
    let mut new_since_rollout_start = 0usize;
    let mut rank_counts_visits: Vec<usize> = Vec::new();
    let mut rank_counts_mean: Vec<usize> = Vec::new();
    let mut rank_counts_max: Vec<usize> = Vec::new();
    let mut real_steps = 0usize;

    for record in records {
        match record.kind {
            StepKind::Imaginary => {
                if let Some(delta) = record.delta {
                    let entry = stage_max.entry(record.stage).or_insert(f64::NEG_INFINITY);
                    *entry = entry.max(delta);
                    if record.reset_fired == Some(true) {
                        agg.reset_deltas.push(delta);
                    } else {
                        agg.noreset_deltas.push(delta);
                    }
                }
                if record.expanded_new == Some(true) {
                    new_since_rollout_start += 1;
                }
                if record.reset_fired == Some(true) {
                    agg.expansion_lengths.push(new_since_rollout_start);
                    new_since_rollout_start = 0;
                }
            }
            StepKind::Real => {
                // A stage boundary also ends any dangling rollout (without
                // recording it: the plan was executed, not abandoned).
                new_since_rollout_start = 0;
                if let Some(rank) = &record.rank_inputs {
                    let n = rank.child_visits.len();
                    rank_counts_visits.resize(n.max(rank_counts_visits.len()), 0);
                    rank_counts_mean.resize(n.max(rank_counts_mean.len()), 0);
                    rank_counts_max.resize(n.max(rank_counts_max.len()), 0);
                    rank_counts_visits[rank_of(&rank.child_visits, rank.chosen)] += 1;
                    rank_counts_mean[rank_of(&rank.child_mean, rank.chosen)] += 1;
                    rank_counts_max[rank_of(&rank.child_max, rank.chosen)] += 1;
                    real_steps += 1;
                }
            }
        }
    }
    agg.delta_max_per_stage = stage_max
        .into_iter()
        .filter(|(_, m)| m.is_finite())
        .collect();
    let share = |counts: &[usize]| -> Vec<f64> {
        counts
            .iter()
            .map(|&c| c as f64 / real_steps.max(1) as f64)
            .collect()
    };
    agg.rank_share_visits = share(&rank_counts_visits);
    agg.rank_share_mean = share(&rank_counts_mean);
    agg.rank_share_max = share(&rank_counts_max);
    agg
}

/// Fixed-width histogram used by the emitted CSVs.
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    if values.is_empty() {
        return Vec::new();
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut out: Vec<(f64, f64, usize)> = (0..bins)
        .map(|i| (lo + i as f64 * width, lo + (i + 1) as f64 * width, 0))
        .collect();
    for &v in values {
        let mut idx = ((v - lo) / width) as usize;
        if idx >= bins {
            idx = bins - 1;
        }
        out[idx].2 += 1;
    }
    out
}

/// Read a JSONL trace, aggregate it, and emit the histogram CSVs next to
/// `out_prefix`: reset-vs-continue rollout quality, expansion-length
/// percentages, real-action rank shares, and per-stage maximum deltas.
pub fn analyze_trace_file(trace_path: &Path, out_prefix: &Path) -> Result<StageAggregates> {
    let file = std::fs::File::open(trace_path)?;
    let (records, skipped) = read_trace(std::io::BufReader::new(file))?;
    let mut agg = analyze_records(&records);
    agg.skipped_lines = skipped;

    if let Some(parent) = out_prefix.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let with_suffix = |suffix: &str| {
        let mut name = out_prefix.file_name().unwrap_or_default().to_os_string();
        name.push(suffix);
        out_prefix.with_file_name(name)
    };

    let mut f = std::fs::File::create(with_suffix("_reset_td.csv"))?;
    writeln!(f, "bin_lo,bin_hi,reset_count,noreset_count")?;
    let all: Vec<f64> = agg
        .reset_deltas
        .iter()
        .chain(agg.noreset_deltas.iter())
        .cloned()
        .collect();
    for (lo, hi, _) in histogram(&all, 20) {
        let c_reset = agg
            .reset_deltas
            .iter()
            .filter(|&&v| v >= lo && (v < hi || hi == all.iter().cloned().fold(f64::NEG_INFINITY, f64::max)))
            .count();
        let c_none = agg
            .noreset_deltas
            .iter()
            .filter(|&&v| v >= lo && v < hi)
            .count();
        writeln!(f, "{lo},{hi},{c_reset},{c_none}")?;
    }

    let mut f = std::fs::File::create(with_suffix("_expansion.csv"))?;
    writeln!(f, "length,count,percent")?;
    let total = agg.expansion_lengths.len().max(1);
    let max_len = agg.expansion_lengths.iter().cloned().max().unwrap_or(0);
    for len in 0..=max_len {
        let count = agg.expansion_lengths.iter().filter(|&&l| l == len).count();
        writeln!(f, "{len},{count},{}", 100.0 * count as f64 / total as f64)?;
    }

    let mut f = std::fs::File::create(with_suffix("_rank.csv"))?;
    writeln!(f, "statistic,rank,share")?;
    for (name, shares) in [
        ("visit_count", &agg.rank_share_visits),
        ("mean_return", &agg.rank_share_mean),
        ("max_return", &agg.rank_share_max),
    ] {
        for (rank, share) in shares.iter().enumerate() {
            writeln!(f, "{name},{rank},{share}")?;
        }
    }

    let mut f = std::fs::File::create(with_suffix("_dmax.csv"))?;
    writeln!(f, "stage,delta_max")?;
    for (stage, dmax) in &agg.delta_max_per_stage {
        writeln!(f, "{stage},{dmax}")?;
    }

    Ok(agg)
}
