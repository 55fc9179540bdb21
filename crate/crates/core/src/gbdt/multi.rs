use super::boost::{fit_columns, BoostedEnsemble, GbdtConfig};
use super::tree::Columns;
use crate::error::{Error, Result};

/// One-vs-rest heads; classes absent from training have no head and are
/// never predicted.
#[derive(Debug, Clone, PartialEq)]
pub struct OneVsRest {
    pub heads: Vec<Option<BoostedEnsemble>>,
}

pub fn fit_one_vs_rest(rows: &[Vec<f64>], y: &[usize], n_classes: usize, cfg: &GbdtConfig) -> Result<OneVsRest> {
    if y.len() != rows.len() {
        return Err(Error::Shape(format!("{} labels for {} rows", y.len(), rows.len())));
    }
    if let Some(bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(Error::Domain(format!("class {bad} outside 0..{n_classes}")));
    }
    let mut counts = vec![0usize; n_classes];
    for &c in y {
        counts[c] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(Error::SingleClass(format!("{present} class present")));
    }
    let x = Columns::from_rows(rows)?;
    let mut heads = Vec::with_capacity(n_classes);
    for (c, &n) in counts.iter().enumerate() {
        if n == 0 {
            heads.push(None);
            continue;
        }
        let yc: Vec<bool> = y.iter().map(|&v| v == c).collect();
        heads.push(Some(fit_columns(&x, &yc, cfg)?));
    }
    Ok(OneVsRest { heads })
}

impl OneVsRest {
    pub fn n_classes(&self) -> usize {
        self.heads.len()
    }

    pub fn predict_scores(&self, x: &[f64]) -> Result<Vec<Option<f64>>> {
        self.heads
            .iter()
            .map(|h| h.as_ref().map(|m| m.predict_score(x)).transpose())
            .collect()
    }

    /// Class with the highest head score; ties go to the lower index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let s = self.predict_scores(x)?;
        let mut best: Option<(usize, f64)> = None;
        for (c, v) in s.iter().enumerate() {
            if let Some(v) = *v {
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((c, v));
                }
            }
        }
        Ok(best.expect("at least two heads").0)
    }
}

/// Independent binary heads, one per label column.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLabel {
    pub heads: Vec<Option<BoostedEnsemble>>,
    pub thresholds: Vec<f64>,
}

pub fn fit_multilabel(rows: &[Vec<f64>], labels: &[Vec<bool>], cfg: &GbdtConfig) -> Result<MultiLabel> {
    if labels.len() != rows.len() {
        return Err(Error::Shape(format!("{} label rows for {} rows", labels.len(), rows.len())));
    }
    let k = labels.first().map_or(0, |r| r.len());
    if k == 0 || labels.iter().any(|r| r.len() != k) {
        return Err(Error::Shape("label matrix must be rectangular and nonempty".into()));
    }
    let x = Columns::from_rows(rows)?;
    let mut heads = Vec::with_capacity(k);
    for j in 0..k {
        let yj: Vec<bool> = labels.iter().map(|r| r[j]).collect();
        let pos = yj.iter().filter(|&&v| v).count();
        if pos == 0 || pos == yj.len() {
            log::warn!("label column {j} has a single value; head skipped");
            heads.push(None);
            continue;
        }
        heads.push(Some(fit_columns(&x, &yj, cfg)?));
    }
    Ok(MultiLabel {
        heads,
        thresholds: vec![0.5; k],
    })
}

impl MultiLabel {
    pub fn predict_scores(&self, x: &[f64]) -> Result<Vec<Option<f64>>> {
        self.heads
            .iter()
            .map(|h| h.as_ref().map(|m| m.predict_score(x)).transpose())
            .collect()
    }

    /// Thresholded flags; skipped heads never fire.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<bool>> {
        Ok(self
            .predict_scores(x)?
            .iter()
            .zip(&self.thresholds)
            .map(|(s, &t)| s.is_some_and(|s| s >= t))
            .collect())
    }
}

/// Combined any-artifact detector over the five per-type probabilities in
/// (chew, elec, eyem, musc, shiv) order.
pub fn fit_combined_binary(probs: &[Vec<f64>], y: &[bool], cfg: &GbdtConfig) -> Result<BoostedEnsemble> {
    if let Some(r) = probs.iter().find(|r| r.len() != 5) {
        return Err(Error::Shape(format!("combined input rows need 5 columns, got {}", r.len())));
    }
    super::boost::fit_boosted_binary(probs, y, cfg)
}
