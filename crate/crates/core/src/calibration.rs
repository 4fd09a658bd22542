//! Percentile thresholds. Candidates come from normal-only validation
//! scores; the final one maximizes F1 on a labeled calibration split, or is
//! the 95th-percentile candidate when no labeled split is available.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AadError, Result};
use crate::metrics::{confusion, precision_recall_f1, predict};

/// Linear interpolation between closest ranks: index `p/100 · (n − 1)` into
/// the ascending sort.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    percentile_sorted(&sorted, p)
}

fn percentile_sorted(sorted: &[f64], p: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(AadError::EmptyInput);
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(AadError::InvalidParameter(format!("percentile {p} not in [0, 100]")));
    }
    let idx = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = idx.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = idx - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCandidate {
    pub percentile: f64,
    pub threshold: f64,
    pub source: String,
}

/// One candidate per grid point, thresholds non-decreasing in percentile.
pub fn sweep_thresholds(val_scores: &[f64], grid: &[f64], source: &str) -> Result<Vec<ThresholdCandidate>> {
    let mut sorted = val_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    grid.iter()
        .map(|&p| {
            Ok(ThresholdCandidate {
                percentile: p,
                threshold: percentile_sorted(&sorted, p)?,
                source: source.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub percentile: f64,
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionMode {
    /// Maximum F1 on a labeled calibration split.
    F1,
    /// No labeled split: the default percentile candidate.
    Default,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub threshold: f64,
    pub percentile: f64,
    /// F1 at the chosen candidate; `None` in default mode.
    pub f1: Option<f64>,
    pub mode: SelectionMode,
    /// Empty in default mode.
    pub sweep: Vec<SweepRow>,
}

/// Percentile used when no labeled calibration data exists.
pub const DEFAULT_PERCENTILE: f64 = 95.0;

/// Highest F1 over the candidates; ties go to the lowest percentile.
pub fn select_by_f1(scores: &[f64], labels: &[u8], candidates: &[ThresholdCandidate]) -> Result<CalibrationResult> {
    if scores.len() != labels.len() {
        return Err(AadError::LengthMismatch { left: scores.len(), right: labels.len() });
    }
    if !(labels.contains(&0) && labels.contains(&1)) {
        return Err(AadError::DegenerateLabels);
    }
    if candidates.is_empty() {
        return Err(AadError::EmptyInput);
    }
    let mut ordered: Vec<&ThresholdCandidate> = candidates.iter().collect();
    ordered.sort_by(|a, b| a.percentile.total_cmp(&b.percentile));
    let sweep: Vec<SweepRow> = ordered
        .iter()
        .map(|c| {
            let cm = confusion(labels, &predict(scores, c.threshold))?;
            let (precision, recall, f1) = precision_recall_f1(&cm);
            Ok(SweepRow { percentile: c.percentile, threshold: c.threshold, precision, recall, f1 })
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, row) in sweep.iter().enumerate() {
        if row.f1 > sweep[best].f1 {
            best = i;
        }
    }
    Ok(CalibrationResult {
        threshold: sweep[best].threshold,
        percentile: sweep[best].percentile,
        f1: Some(sweep[best].f1),
        mode: SelectionMode::F1,
        sweep,
    })
}

/// Default-mode result: the candidate at `DEFAULT_PERCENTILE`, or the
/// highest grid point below it when the grid lacks it.
pub fn select_default(candidates: &[ThresholdCandidate]) -> Result<CalibrationResult> {
    let pick = candidates
        .iter()
        .filter(|c| c.percentile <= DEFAULT_PERCENTILE)
        .max_by(|a, b| a.percentile.total_cmp(&b.percentile))
        .or_else(|| candidates.iter().min_by(|a, b| a.percentile.total_cmp(&b.percentile)))
        .ok_or(AadError::EmptyInput)?;
    Ok(CalibrationResult {
        threshold: pick.threshold,
        percentile: pick.percentile,
        f1: None,
        mode: SelectionMode::Default,
        sweep: Vec::new(),
    })
}

/// Text report: `key = value` header lines, then a tab-separated sweep table.
pub fn report_text(result: &CalibrationResult, detector: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "detector = {detector}");
    let _ = writeln!(s, "mode = {}", match result.mode {
        SelectionMode::F1 => "f1",
        SelectionMode::Default => "default",
    });
    let _ = writeln!(s, "threshold = {:?}", result.threshold);
    let _ = writeln!(s, "percentile = {:?}", result.percentile);
    if let Some(f1) = result.f1 {
        let _ = writeln!(s, "f1 = {f1:?}");
    }
    if !result.sweep.is_empty() {
        let _ = writeln!(s, "# percentile\tthreshold\tprecision\trecall\tf1");
        for r in &result.sweep {
            let _ = writeln!(s, "{:?}\t{:?}\t{:?}\t{:?}\t{:?}", r.percentile, r.threshold, r.precision, r.recall, r.f1);
        }
    }
    s
}

pub fn write_report(path: impl AsRef<Path>, result: &CalibrationResult, detector: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, report_text(result, detector)).map_err(|e| AadError::io(path, e))
}

/// Reads the threshold (and detector name) back from a report file.
pub fn read_report_threshold(path: impl AsRef<Path>) -> Result<(String, f64)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| AadError::io(path, e))?;
    let header: String = text.lines().take_while(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n");
    let kv = crate::config::parse_kv(&header)?;
    let bad = |d: &str| AadError::Format { what: "calibration report", detail: d.to_string() };
    let detector = kv.get("detector").ok_or_else(|| bad("missing detector"))?.clone();
    let threshold = kv
        .get("threshold")
        .ok_or_else(|| bad("missing threshold"))?
        .parse::<f64>()
        .map_err(|e| bad(&e.to_string()))?;
    Ok((detector, threshold))
}
