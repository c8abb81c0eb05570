//! Group-fairness and ranking-accuracy metrics: demographic parity,
//! equalized odds, AUROC and AUPRC. All functions are pure.

use crate::error::{Error, Result};

/// Scores with labels, subgroup ids and the decision threshold that turns
/// scores into hard predictions.
#[derive(Debug, Clone)]
pub struct ScoredPredictions {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
    pub groups: Vec<usize>,
    pub num_groups: usize,
    pub threshold: f64,
}

impl ScoredPredictions {
    pub fn new(
        scores: Vec<f64>,
        labels: Vec<u8>,
        groups: Vec<usize>,
        num_groups: usize,
        threshold: f64,
    ) -> Result<Self> {
        if scores.len() != labels.len() || scores.len() != groups.len() {
            return Err(Error::InvalidArgument(format!(
                "scores/labels/groups lengths differ: {} / {} / {}",
                scores.len(),
                labels.len(),
                groups.len()
            )));
        }
        if !(0.0 < threshold && threshold < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "threshold must lie in (0, 1), got {threshold}"
            )));
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
        }
        if let Some(&g) = groups.iter().find(|&&g| g >= num_groups) {
            return Err(Error::InvalidArgument(format!(
                "group id {g} out of range for {num_groups} groups"
            )));
        }
        Ok(ScoredPredictions {
            scores,
            labels,
            groups,
            num_groups,
            threshold,
        })
    }

    fn predicted_positive(&self, i: usize) -> bool {
        self.scores[i] >= self.threshold
    }
}

/// Per-group decision rates behind a fairness evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct FairnessReport {
    pub demographic_parity: f64,
    pub equalized_odds: f64,
    pub positive_rates: Vec<f64>,
    pub true_positive_rates: Vec<f64>,
    pub false_positive_rates: Vec<f64>,
}

fn spread(rates: &[f64]) -> f64 {
    let max = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = rates.iter().cloned().fold(f64::INFINITY, f64::min);
    max - min
}

/// Largest gap in predicted-positive rates across subgroups
/// (max over ordered group pairs, which equals max rate minus min rate).
pub fn demographic_parity(p: &ScoredPredictions) -> Result<f64> {
    Ok(spread(&positive_rates(p)?))
}

pub fn positive_rates(p: &ScoredPredictions) -> Result<Vec<f64>> {
    let mut positives = vec![0usize; p.num_groups];
    let mut totals = vec![0usize; p.num_groups];
    for i in 0..p.scores.len() {
        totals[p.groups[i]] += 1;
        if p.predicted_positive(i) {
            positives[p.groups[i]] += 1;
        }
    }
    if let Some(g) = totals.iter().position(|&t| t == 0) {
        return Err(Error::EmptyGroup {
            group: g.to_string(),
        });
    }
    Ok(positives
        .iter()
        .zip(&totals)
        .map(|(&pos, &tot)| pos as f64 / tot as f64)
        .collect())
}

/// TPR gap plus FPR gap across subgroups; every group needs at least one
/// positive and one negative sample for its rates to exist.
pub fn equalized_odds(p: &ScoredPredictions) -> Result<f64> {
    let (tpr, fpr) = class_conditional_rates(p)?;
    Ok(spread(&tpr) + spread(&fpr))
}

pub fn class_conditional_rates(p: &ScoredPredictions) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = p.num_groups;
    let (mut tp, mut pos, mut fp, mut neg) = (vec![0usize; m], vec![0usize; m], vec![0usize; m], vec![0usize; m]);
    for i in 0..p.scores.len() {
        let g = p.groups[i];
        let predicted = p.predicted_positive(i);
        if p.labels[i] == 1 {
            pos[g] += 1;
            if predicted {
                tp[g] += 1;
            }
        } else {
            neg[g] += 1;
            if predicted {
                fp[g] += 1;
            }
        }
    }
    for g in 0..m {
        if pos[g] == 0 {
            return Err(Error::UndefinedRate {
                group: g.to_string(),
                label: 1,
            });
        }
        if neg[g] == 0 {
            return Err(Error::UndefinedRate {
                group: g.to_string(),
                label: 0,
            });
        }
    }
    let tpr = tp.iter().zip(&pos).map(|(&t, &p)| t as f64 / p as f64).collect();
    let fpr = fp.iter().zip(&neg).map(|(&f, &n)| f as f64 / n as f64).collect();
    Ok((tpr, fpr))
}

/// Full per-group fairness summary at the prediction threshold.
pub fn fairness_report(p: &ScoredPredictions) -> Result<FairnessReport> {
    let positive_rates = positive_rates(p)?;
    let (true_positive_rates, false_positive_rates) = class_conditional_rates(p)?;
    Ok(FairnessReport {
        demographic_parity: spread(&positive_rates),
        equalized_odds: spread(&true_positive_rates) + spread(&false_positive_rates),
        positive_rates,
        true_positive_rates,
        false_positive_rates,
    })
}

/// Probability that a random positive outscores a random negative, ties
/// counted one half (rank / Mann-Whitney formulation).
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(
            "scores and labels lengths differ".into(),
        ));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUROC needs at least one positive and one negative label".into(),
        ));
    }
    // average ranks over tied scores
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; tied block [i, j] shares the average rank
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let n_pos_f = n_pos as f64;
    Ok((rank_sum_pos - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

/// Average precision: the descending-score sweep sum of
/// (R_k - R_{k-1}) * P_k over distinct thresholds.
pub fn auprc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(
            "scores and labels lengths differ".into(),
        ));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    if n_pos == 0 {
        return Err(Error::UndefinedMetric(
            "AUPRC needs at least one positive label".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
    let mut area = 0.0;
    let mut tp = 0usize;
    let mut predicted = 0usize;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            predicted += 1;
            if labels[idx] == 1 {
                tp += 1;
            }
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / predicted as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    Ok(area)
}
