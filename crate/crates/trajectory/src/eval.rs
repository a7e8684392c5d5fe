//! Evaluation metrics and per-fold reporting.
//!
//! Binary metrics operate on parallel score/label slices. Thresholded
//! metrics use tau = 0.5 with `score >= tau` counting as a predicted
//! positive. Ranking metrics that are undefined on degenerate label sets
//! return None and are serialized as absent fields, never as zeros.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const THRESHOLD: f64 = 0.5;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
}

/// Confusion-matrix metrics at tau = 0.5. Precision is 0 when nothing is
/// predicted positive; recall is 0 when nothing is positive; F1 is 0 when
/// either is 0.
pub fn threshold_metrics(scores: &[f64], labels: &[bool]) -> ThresholdMetrics {
    assert_eq!(scores.len(), labels.len(), "scores and labels must align");
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut tn = 0usize;
    let mut fn_ = 0usize;
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= THRESHOLD, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let total = scores.len();
    let accuracy = if total == 0 {
        0.0
    } else {
        (tp + tn) as f64 / total as f64
    };
    ThresholdMetrics {
        precision,
        recall,
        f1,
        accuracy,
        true_positives: tp,
        false_positives: fp,
        true_negatives: tn,
        false_negatives: fn_,
    }
}

/// ROC-AUC via the rank-sum formulation: the probability that a uniformly
/// chosen positive outscores a uniformly chosen negative, with ties counted
/// half. None when either class is empty.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    // Average ranks over tie groups.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("NaN score"));
    let mut ranks = vec![0.0f64; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share the mean rank.
        let mean_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mean_rank;
        }
        i = j + 1;
    }
    let pos_rank_sum: f64 = labels
        .iter()
        .zip(&ranks)
        .filter(|(&y, _)| y)
        .map(|(_, &r)| r)
        .sum();
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Area under the precision-recall curve by step interpolation: walk the
/// ranking from the highest score down, adding precision * delta-recall at
/// every recall increase. Ties are processed as one block. None when there
/// are no positives.
pub fn au_pr(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&y| y).count();
    if n_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("NaN score"));
    let mut area = 0.0f64;
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut prev_recall = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            if labels[idx] {
                tp += 1;
            }
        }
        seen += j - i + 1;
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / seen as f64;
        if recall > prev_recall {
            area += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
        i = j + 1;
    }
    Some(area)
}

/// Maximum recall attainable at precision >= 0.8 anywhere along the
/// ranking; 0 when no prefix reaches that precision. None without
/// positives.
pub fn rp80(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&y| y).count();
    if n_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("NaN score"));
    let mut best = 0.0f64;
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            if labels[idx] {
                tp += 1;
            }
        }
        seen += j - i + 1;
        let precision = tp as f64 / seen as f64;
        if precision >= 0.8 {
            best = best.max(tp as f64 / n_pos as f64);
        }
        i = j + 1;
    }
    Some(best)
}

/// Recall@k for one multi-label sample: fraction of true labels among the
/// k highest-scored classes. Score ties break toward the lower class
/// index. None when the sample has no true labels.
pub fn recall_at_k(scores: &[f64], truth: &[bool], k: usize) -> Option<f64> {
    assert_eq!(scores.len(), truth.len());
    let n_true = truth.iter().filter(|&&y| y).count();
    if n_true == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("NaN score")
            .then(a.cmp(&b))
    });
    let hits = order
        .iter()
        .take(k)
        .filter(|&&idx| truth[idx])
        .count();
    Some(hits as f64 / n_true as f64)
}

/// Mean recall@k over samples, skipping samples without true labels. None
/// when every sample is empty.
pub fn mean_recall_at_k(scores: &[Vec<f64>], truth: &[Vec<bool>], k: usize) -> Option<f64> {
    assert_eq!(scores.len(), truth.len());
    let mut sum = 0.0;
    let mut n = 0usize;
    for (s, t) in scores.iter().zip(truth) {
        if let Some(r) = recall_at_k(s, t, k) {
            sum += r;
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Micro-averaged AU-PR over a multi-label batch: flatten every
/// (sample, class) pair into one binary problem.
pub fn micro_au_pr(scores: &[Vec<f64>], truth: &[Vec<bool>]) -> Option<f64> {
    assert_eq!(scores.len(), truth.len());
    let mut flat_scores = Vec::new();
    let mut flat_truth = Vec::new();
    for (s, t) in scores.iter().zip(truth) {
        assert_eq!(s.len(), t.len());
        flat_scores.extend_from_slice(s);
        flat_truth.extend_from_slice(t);
    }
    au_pr(&flat_scores, &flat_truth)
}

/// One fold's evaluation, serialized as a JSON line. Ranking metrics stay
/// absent when undefined.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub task: String,
    pub fold: usize,
    pub config_fingerprint: String,
    pub n_samples: usize,
    pub n_positive: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<ThresholdMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roc_auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub au_pr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rp80: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall_at_10: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall_at_20: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall_at_30: Option<f64>,
    /// Samples skipped by recall@k for having no true labels.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall_excluded_samples: Option<usize>,
}

impl MetricsReport {
    /// Binary-task report from raw scores.
    pub fn binary(
        task: &str,
        fold: usize,
        config_fingerprint: &str,
        scores: &[f64],
        labels: &[bool],
    ) -> Self {
        MetricsReport {
            schema_version: REPORT_SCHEMA_VERSION,
            task: task.to_string(),
            fold,
            config_fingerprint: config_fingerprint.to_string(),
            n_samples: labels.len(),
            n_positive: labels.iter().filter(|&&y| y).count(),
            threshold: Some(threshold_metrics(scores, labels)),
            roc_auc: roc_auc(scores, labels),
            au_pr: au_pr(scores, labels),
            rp80: rp80(scores, labels),
            recall_at_10: None,
            recall_at_20: None,
            recall_at_30: None,
            recall_excluded_samples: None,
        }
    }

    /// Multi-label report: micro AU-PR plus recall@{10,20,30}.
    pub fn multilabel(
        task: &str,
        fold: usize,
        config_fingerprint: &str,
        scores: &[Vec<f64>],
        truth: &[Vec<bool>],
    ) -> Self {
        MetricsReport {
            schema_version: REPORT_SCHEMA_VERSION,
            task: task.to_string(),
            fold,
            config_fingerprint: config_fingerprint.to_string(),
            n_samples: truth.len(),
            n_positive: truth
                .iter()
                .filter(|t| t.iter().any(|&y| y))
                .count(),
            threshold: None,
            roc_auc: None,
            au_pr: micro_au_pr(scores, truth),
            rp80: None,
            recall_at_10: mean_recall_at_k(scores, truth, 10),
            recall_at_20: mean_recall_at_k(scores, truth, 20),
            recall_at_30: mean_recall_at_k(scores, truth, 30),
            recall_excluded_samples: Some(
                truth.iter().filter(|t| t.iter().all(|&y| !y)).count(),
            ),
        }
    }

    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self).map_err(|e| Error::Format(e.to_string()))?)
    }
}

pub fn write_reports(path: &Path, reports: &[MetricsReport]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in reports {
        writeln!(out, "{}", r.to_json_line()?)?;
    }
    Ok(())
}

pub fn read_reports(path: &Path) -> Result<Vec<MetricsReport>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let report: MetricsReport =
            serde_json::from_str(&line).map_err(|e| Error::Format(e.to_string()))?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "report schema version {} unsupported (expected {})",
                report.schema_version, REPORT_SCHEMA_VERSION
            )));
        }
        out.push(report);
    }
    Ok(out)
}

/// Mean and (population) standard deviation of one metric across folds,
/// over the folds where it is defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n_folds: usize,
}

pub fn summarize<F: Fn(&MetricsReport) -> Option<f64>>(
    reports: &[MetricsReport],
    metric: F,
) -> Option<Summary> {
    let values: Vec<f64> = reports.iter().filter_map(&metric).collect();
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some(Summary {
        mean,
        std: var.sqrt(),
        n_folds: values.len(),
    })
}
