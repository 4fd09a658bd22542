//! Confusion counts, precision/recall/F1, ROC AUC and wall-time measurement.
//! Anomaly is the positive class; every 0/0 ratio is reported as 0.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{AadError, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// `score > threshold` → 1.
pub fn predict(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s > threshold)).collect()
}

pub fn confusion(labels: &[u8], predictions: &[u8]) -> Result<ConfusionMatrix> {
    if labels.len() != predictions.len() {
        return Err(AadError::LengthMismatch { left: labels.len(), right: predictions.len() });
    }
    if labels.is_empty() {
        return Err(AadError::EmptyInput);
    }
    let mut cm = ConfusionMatrix::default();
    for (&l, &p) in labels.iter().zip(predictions) {
        match (l != 0, p != 0) {
            (true, true) => cm.tp += 1,
            (false, true) => cm.fp += 1,
            (false, false) => cm.tn += 1,
            (true, false) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

/// Harmonic mean of two rates; 0 when both are 0.
pub fn f1_from(precision: f64, recall: f64) -> f64 {
    ratio(2.0 * precision * recall, precision + recall)
}

pub fn precision_recall_f1(cm: &ConfusionMatrix) -> (f64, f64, f64) {
    let p = ratio(cm.tp as f64, (cm.tp + cm.fp) as f64);
    let r = ratio(cm.tp as f64, (cm.tp + cm.fn_) as f64);
    (p, r, f1_from(p, r))
}

/// Rank-statistic AUC: probability a random positive outscores a random
/// negative, ties credited one half. Uses midranks over the sorted scores.
pub fn roc_auc(labels: &[u8], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(AadError::LengthMismatch { left: labels.len(), right: scores.len() });
    }
    let n_pos = labels.iter().filter(|&&l| l != 0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(AadError::SingleClassInput);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based midrank of the tie group i..=j
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k] != 0).count();
        rank_sum_pos += midrank * pos_in_group as f64;
        i = j + 1;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Runs `f` and returns its result with the elapsed monotonic wall time.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

/// Rounds to millisecond resolution for reporting.
pub fn round_ms(seconds: f64) -> f64 {
    (seconds * 1000.0).round() / 1000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub train_time_s: f64,
    pub inference_time_s: f64,
    pub roc_auc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: ConfusionMatrix,
    pub threshold: f64,
}

impl EvalReport {
    pub fn evaluate(
        method: &str,
        labels: &[u8],
        scores: &[f64],
        threshold: f64,
        train_time_s: f64,
        inference_time_s: f64,
    ) -> Result<Self> {
        let cm = confusion(labels, &predict(scores, threshold))?;
        let (precision, recall, f1) = precision_recall_f1(&cm);
        Ok(Self {
            method: method.to_string(),
            train_time_s: round_ms(train_time_s),
            inference_time_s: round_ms(inference_time_s),
            roc_auc: roc_auc(labels, scores)?,
            precision,
            recall,
            f1,
            confusion: cm,
            threshold,
        })
    }
}

pub fn reports_to_json(reports: &[EvalReport]) -> String {
    serde_json::to_string_pretty(reports).expect("reports serialize")
}

pub fn reports_from_json(text: &str) -> Result<Vec<EvalReport>> {
    serde_json::from_str(text).map_err(|e| AadError::Format { what: "report JSON", detail: e.to_string() })
}

/// Aligned plain-text table with the benchmark columns.
pub fn reports_to_table(reports: &[EvalReport]) -> String {
    let header = ["Method", "Train Time (s)", "ROC AUC", "Precision", "Recall", "F1-Score", "Inference Time (s)"];
    let rows: Vec<[String; 7]> = reports
        .iter()
        .map(|r| {
            [
                r.method.clone(),
                format!("{:.3}", r.train_time_s),
                format!("{:.4}", r.roc_auc),
                format!("{:.4}", r.precision),
                format!("{:.4}", r.recall),
                format!("{:.4}", r.f1),
                format!("{:.3}", r.inference_time_s),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..7)
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap())
        .collect();
    let mut s = String::new();
    let line = |cells: Vec<&str>, s: &mut String| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(s, "{}", padded.join("  ").trim_end());
    };
    line(header.to_vec(), &mut s);
    let _ = writeln!(s, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * 6));
    for r in &rows {
        line(r.iter().map(String::as_str).collect(), &mut s);
    }
    s
}

/// Confusion matrix as a small text block.
pub fn confusion_text(method: &str, cm: &ConfusionMatrix) -> String {
    format!(
        "{method}\n              pred normal  pred anomaly\nnormal        {:>11}  {:>12}\nanomaly       {:>11}  {:>12}\n",
        cm.tn, cm.fp, cm.fn_, cm.tp
    )
}
