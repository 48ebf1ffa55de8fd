//! CSV artifacts.

use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::filter::BoundSchedule;
use crate::pipeline::{MonteCarloSummary, TrialOutput};
use crate::reconstruct::{region_rows, RegionPartition};

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

/// `trial, i, j, channel, component` for every firing generator, plus the forced first instant
/// as `channel = -1`.
pub fn write_trigger_log(dir: &Path, trials: &[TrialOutput]) -> Result<PathBuf> {
    let path = dir.join("triggers.csv");
    let mut w = writer(&path)?;
    w.write_record(["trial", "i", "j", "channel", "component"])?;
    for t in trials {
        let mut firings = t.etm.firings.iter().peekable();
        for idx in &t.etm.trigger_log {
            let mut any = false;
            while let Some(f) = firings.next_if(|f| f.idx == *idx) {
                any = true;
                w.write_record([
                    t.trial.to_string(),
                    idx.i.to_string(),
                    idx.j.to_string(),
                    f.channel.to_string(),
                    f.component.to_string(),
                ])?;
            }
            if !any {
                w.write_record([t.trial.to_string(), idx.i.to_string(), idx.j.to_string(), "-1".into(), "-1".into()])?;
            }
        }
    }
    w.flush()?;
    Ok(path)
}

/// `i, j, s, component, sent, received` for every transmitted codeword of the first trial.
pub fn write_codewords(dir: &Path, trial: &TrialOutput) -> Result<PathBuf> {
    let path = dir.join("codewords.csv");
    let mut w = writer(&path)?;
    w.write_record(["i", "j", "s", "component", "sent", "received"])?;
    for tx in &trial.communication.transmissions {
        w.write_record([
            tx.idx.i.to_string(),
            tx.idx.j.to_string(),
            tx.channel.to_string(),
            tx.component.to_string(),
            tx.sent.to_string(),
            tx.received.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(path)
}

/// `l, k, region_id, stack_depth` over the state grid.
pub fn write_regions(dir: &Path, partition: &RegionPartition) -> Result<PathBuf> {
    let path = dir.join("regions.csv");
    let mut w = writer(&path)?;
    w.write_record(["l", "k", "region_id", "stack_depth"])?;
    for (l, k, region, depth) in region_rows(partition) {
        w.serialize((l, k, region, depth))?;
    }
    w.flush()?;
    Ok(path)
}

/// `trial, step, l, k, estimate_*, trace_bound, trace_empirical` for the exported trials.
pub fn write_estimates(
    dir: &Path,
    schedule: &BoundSchedule,
    mc: &MonteCarloSummary,
    state_dim: usize,
) -> Result<PathBuf> {
    let path = dir.join("estimates.csv");
    let mut w = writer(&path)?;
    let mut header: Vec<String> = ["trial", "step", "l", "k"].iter().map(|s| s.to_string()).collect();
    header.extend((0..state_dim).map(|g| format!("estimate_{g}")));
    header.extend(["trace_bound".to_string(), "trace_empirical".to_string()]);
    w.write_record(&header)?;
    for t in &mc.exported {
        for (idx, est) in t.filter.updated.iter() {
            let cell = schedule.cell(idx);
            let mut row = vec![t.trial.to_string(), cell.step.to_string(), idx.i.to_string(), idx.j.to_string()];
            row.extend(est.iter().map(|v| v.to_string()));
            row.push(cell.xi_u.trace().to_string());
            row.push(mc.error_second_moment[idx].trace().to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(path)
}
