//! Suffix similarity (Damerau-Levenshtein) and remaining-time error metrics.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("prediction and ground-truth vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty prediction set")]
    EmptyPredictionSet,
}

/// Which Damerau-Levenshtein formulation to use. The restricted (optimal
/// string alignment) variant never edits a substring twice; the full variant
/// allows it and needs an alphabet-indexed table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DlVariant {
    #[default]
    Restricted,
    Full,
}

/// Restricted (OSA) Damerau-Levenshtein distance over label index sequences:
/// insertions, deletions, substitutions and adjacent transpositions.
pub fn dl_distance(s1: &[usize], s2: &[usize]) -> usize {
    let (n, m) = (s1.len(), s2.len());
    if n == 0 {
        return m;
    }
    if m == 0 {
        return n;
    }
    // rows i-2, i-1, i of the DP table
    let mut prev2 = vec![0usize; m + 1];
    let mut prev1: Vec<usize> = (0..=m).collect();
    let mut cur = vec![0usize; m + 1];
    for i in 1..=n {
        cur[0] = i;
        for j in 1..=m {
            let cost = usize::from(s1[i - 1] != s2[j - 1]);
            let mut d = (prev1[j] + 1).min(cur[j - 1] + 1).min(prev1[j - 1] + cost);
            if i > 1 && j > 1 && s1[i - 1] == s2[j - 2] && s1[i - 2] == s2[j - 1] {
                d = d.min(prev2[j - 2] + 1);
            }
            cur[j] = d;
        }
        std::mem::swap(&mut prev2, &mut prev1);
        std::mem::swap(&mut prev1, &mut cur);
    }
    prev1[m]
}

/// Unrestricted Damerau-Levenshtein distance (alphabet-indexed DP).
pub fn dl_distance_full(s1: &[usize], s2: &[usize]) -> usize {
    let (n, m) = (s1.len(), s2.len());
    if n == 0 {
        return m;
    }
    if m == 0 {
        return n;
    }
    let max_dist = n + m;
    let alphabet = s1.iter().chain(s2.iter()).max().unwrap() + 1;
    let mut last_row = vec![0usize; alphabet];
    // table padded with a -1 row/column holding max_dist
    let mut d = vec![vec![0usize; m + 2]; n + 2];
    d[0][0] = max_dist;
    for i in 0..=n {
        d[i + 1][0] = max_dist;
        d[i + 1][1] = i;
    }
    for j in 0..=m {
        d[0][j + 1] = max_dist;
        d[1][j + 1] = j;
    }
    for i in 1..=n {
        let mut last_match_col = 0usize;
        for j in 1..=m {
            let i1 = last_row[s2[j - 1]];
            let j1 = last_match_col;
            let cost = if s1[i - 1] == s2[j - 1] {
                last_match_col = j;
                0
            } else {
                1
            };
            d[i + 1][j + 1] = (d[i][j] + cost)
                .min(d[i + 1][j] + 1)
                .min(d[i][j + 1] + 1)
                .min(d[i1][j1] + (i - i1 - 1) + 1 + (j - j1 - 1));
        }
        last_row[s1[i - 1]] = i;
    }
    d[n + 1][m + 1]
}

pub fn dl_distance_with(variant: DlVariant, s1: &[usize], s2: &[usize]) -> usize {
    match variant {
        DlVariant::Restricted => dl_distance(s1, s2),
        DlVariant::Full => dl_distance_full(s1, s2),
    }
}

/// Similarity d = 1 - DL / max(|s1|, |s2|). Two empty sequences are defined
/// as identical (d = 1): both predict the case is already over.
pub fn similarity(s_pred: &[usize], s_true: &[usize]) -> f64 {
    similarity_with(DlVariant::Restricted, s_pred, s_true)
}

pub fn similarity_with(variant: DlVariant, s_pred: &[usize], s_true: &[usize]) -> f64 {
    let longest = s_pred.len().max(s_true.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - dl_distance_with(variant, s_pred, s_true) as f64 / longest as f64
}

/// Mean absolute error between predicted and true remaining times, in days.
pub fn mae(pred_times: &[f64], true_times: &[f64]) -> Result<f64, MetricsError> {
    if pred_times.len() != true_times.len() {
        return Err(MetricsError::LengthMismatch(pred_times.len(), true_times.len()));
    }
    if pred_times.is_empty() {
        return Err(MetricsError::LengthMismatch(0, 0));
    }
    let sum: f64 = pred_times
        .iter()
        .zip(true_times)
        .map(|(p, t)| (p - t).abs())
        .sum();
    Ok(sum / pred_times.len() as f64)
}

/// One evaluated prefix: predicted vs ground-truth suffix labels plus the
/// remaining-time pair, identified by case id and prefix length k.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationInput {
    pub case_id: String,
    pub prefix_len: usize,
    pub predicted_labels: Vec<usize>,
    pub true_labels: Vec<usize>,
    pub predicted_remaining_days: f64,
    pub true_remaining_days: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub case_id: String,
    pub prefix_len: usize,
    pub similarity: f64,
    pub absolute_error_days: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub mean_similarity: f64,
    pub mae_days: f64,
    pub per_prefix_rows: Vec<EvaluationRow>,
    /// number of evaluated rows per prefix length k
    pub counts_by_prefix_len: BTreeMap<usize, usize>,
}

impl EvaluationReport {
    pub fn n(&self) -> usize {
        self.per_prefix_rows.len()
    }
}

pub fn evaluate(inputs: &[EvaluationInput]) -> Result<EvaluationReport, MetricsError> {
    evaluate_with(DlVariant::Restricted, inputs)
}

pub fn evaluate_with(
    variant: DlVariant,
    inputs: &[EvaluationInput],
) -> Result<EvaluationReport, MetricsError> {
    if inputs.is_empty() {
        return Err(MetricsError::EmptyPredictionSet);
    }
    let mut rows = Vec::with_capacity(inputs.len());
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for input in inputs {
        rows.push(EvaluationRow {
            case_id: input.case_id.clone(),
            prefix_len: input.prefix_len,
            similarity: similarity_with(variant, &input.predicted_labels, &input.true_labels),
            absolute_error_days: (input.predicted_remaining_days - input.true_remaining_days)
                .abs(),
        });
        *counts.entry(input.prefix_len).or_insert(0) += 1;
    }
    let n = rows.len() as f64;
    Ok(EvaluationReport {
        mean_similarity: rows.iter().map(|r| r.similarity).sum::<f64>() / n,
        mae_days: rows.iter().map(|r| r.absolute_error_days).sum::<f64>() / n,
        per_prefix_rows: rows,
        counts_by_prefix_len: counts,
    })
}
