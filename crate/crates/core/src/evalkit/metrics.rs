use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::Domain(format!("score {s} is not a number")));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    Ok((pos, labels.len() - pos))
}

fn both_classes(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    let (p, n) = check(scores, labels)?;
    if p == 0 || n == 0 {
        return Err(Error::UndefinedMetric(format!(
            "needs both classes, got {p} positive and {n} negative"
        )));
    }
    Ok((p, n))
}

/// Indices sorted by ascending score.
fn ascending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    idx
}

/// Area under the ROC curve, with tied scores counted as half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (p, n) = both_classes(scores, labels)?;
    let idx = ascending(scores);
    let mut neg_below = 0.0;
    let mut acc = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        let (mut tp, mut tn) = (0.0, 0.0);
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            if labels[idx[j]] {
                tp += 1.0;
            } else {
                tn += 1.0;
            }
            j += 1;
        }
        acc += tp * (neg_below + 0.5 * tn);
        neg_below += tn;
        i = j;
    }
    Ok(acc / (p as f64 * n as f64))
}

/// ROC points `(fpr, tpr)` from the strictest threshold to the loosest,
/// one per distinct score, starting at (0, 0).
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>> {
    let (p, n) = both_classes(scores, labels)?;
    let idx = ascending(scores);
    let mut pts = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut j = idx.len();
    while j > 0 {
        let s = scores[idx[j - 1]];
        while j > 0 && scores[idx[j - 1]] == s {
            if labels[idx[j - 1]] {
                tp += 1;
            } else {
                fp += 1;
            }
            j -= 1;
        }
        pts.push((fp as f64 / n as f64, tp as f64 / p as f64));
    }
    Ok(pts)
}

/// Average precision: Σ (R_k − R_{k−1}) P_k over distinct score thresholds.
pub fn auprc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (p, _) = check(scores, labels)?;
    if p == 0 {
        return Err(Error::UndefinedMetric("average precision needs a positive".into()));
    }
    let idx = ascending(scores);
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut j = idx.len();
    while j > 0 {
        let s = scores[idx[j - 1]];
        while j > 0 && scores[idx[j - 1]] == s {
            if labels[idx[j - 1]] {
                tp += 1;
            }
            seen += 1;
            j -= 1;
        }
        let recall = tp as f64 / p as f64;
        ap += (recall - prev_recall) * (tp as f64 / seen as f64);
        prev_recall = recall;
    }
    Ok(ap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub fp: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fn_ + self.tn + self.fp
    }

    pub fn sen(&self) -> f64 {
        self.tp as f64 / (self.tp + self.fn_) as f64
    }

    pub fn spe(&self) -> f64 {
        self.tn as f64 / (self.tn + self.fp) as f64
    }

    pub fn acc(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    pub fn bac(&self) -> f64 {
        (self.sen() + self.spe()) / 2.0
    }
}

/// Threshold-dependent rates. Prediction is `score ≥ threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub threshold: f64,
    pub acc: f64,
    pub bac: f64,
    pub sen: f64,
    pub spe: f64,
    pub confusion: Confusion,
}

pub fn confusion_at(scores: &[f64], labels: &[bool], threshold: f64) -> Confusion {
    let mut c = Confusion::default();
    for (&s, &l) in scores.iter().zip(labels) {
        match (l, s >= threshold) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fp += 1,
        }
    }
    c
}

pub fn rates_at_threshold(scores: &[f64], labels: &[bool], threshold: f64) -> Result<Rates> {
    both_classes(scores, labels)?;
    let c = confusion_at(scores, labels, threshold);
    Ok(Rates {
        threshold,
        acc: c.acc(),
        bac: c.bac(),
        sen: c.sen(),
        spe: c.spe(),
        confusion: c,
    })
}

/// Operating point at a specificity target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SenAtSpe {
    pub target: f64,
    pub sen: f64,
    pub spe: f64,
    pub threshold: f64,
    /// False when no finite threshold reaches the target.
    pub reachable: bool,
}

/// Smallest threshold whose specificity reaches `target`, and the
/// sensitivity obtained there.
pub fn sen_at_spe(scores: &[f64], labels: &[bool], target: f64) -> Result<SenAtSpe> {
    let (_, n) = both_classes(scores, labels)?;
    if !(0.0..=1.0).contains(&target) {
        return Err(Error::Domain(format!("specificity target {target} outside [0, 1]")));
    }
    let mut neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| !l)
        .map(|(&s, _)| s)
        .collect();
    neg.sort_by(f64::total_cmp);
    // Negatives that must fall strictly below the threshold.
    let k = ((target * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let (threshold, reachable) = if k == 0 {
        (scores.iter().copied().fold(f64::INFINITY, f64::min), true)
    } else {
        let th = neg[k - 1].next_up();
        (th, th.is_finite())
    };
    if !reachable {
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let c = confusion_at(scores, labels, f64::INFINITY);
        return Ok(SenAtSpe {
            target,
            sen: 0.0,
            spe: c.spe(),
            threshold: max,
            reachable: false,
        });
    }
    let c = confusion_at(scores, labels, threshold);
    Ok(SenAtSpe {
        target,
        sen: c.sen(),
        spe: c.spe(),
        threshold,
        reachable: true,
    })
}

/// Count matrix with rows = true class and columns = predicted class.
pub fn confusion_matrix_multiclass(preds: &[usize], labels: &[usize], n_classes: usize) -> Result<Vec<Vec<u64>>> {
    if preds.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let mut m = vec![vec![0u64; n_classes]; n_classes];
    for (&p, &l) in preds.iter().zip(labels) {
        if p >= n_classes || l >= n_classes {
            return Err(Error::Domain(format!(
                "class index {} outside 0..{n_classes}",
                p.max(l)
            )));
        }
        m[l][p] += 1;
    }
    Ok(m)
}

/// Element-wise sum of equally sized count matrices.
pub fn sum_matrices(ms: &[Vec<Vec<u64>>]) -> Vec<Vec<u64>> {
    let Some(first) = ms.first() else {
        return Vec::new();
    };
    let mut out = vec![vec![0u64; first.len()]; first.len()];
    for m in ms {
        for (r, row) in m.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                out[r][c] += v;
            }
        }
    }
    out
}

/// Mean per-class recall over classes with support.
pub fn multiclass_bac(m: &[Vec<u64>]) -> f64 {
    let recalls: Vec<f64> = m
        .iter()
        .enumerate()
        .filter_map(|(i, row)| {
            let n: u64 = row.iter().sum();
            (n > 0).then(|| row[i] as f64 / n as f64)
        })
        .collect();
    if recalls.is_empty() {
        0.0
    } else {
        recalls.iter().sum::<f64>() / recalls.len() as f64
    }
}

pub fn multiclass_accuracy(m: &[Vec<u64>]) -> f64 {
    let total: u64 = m.iter().flatten().sum();
    let diag: u64 = (0..m.len()).map(|i| m[i][i]).sum();
    if total == 0 {
        0.0
    } else {
        diag as f64 / total as f64
    }
}
