use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Annotated artifact seconds per type for one patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientSummary {
    pub patient_id: String,
    pub durations: [f64; 5],
}

impl PatientSummary {
    pub fn total(&self) -> f64 {
        self.durations.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Vec<String>>,
    pub totals: Vec<[f64; 5]>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// Index of the fold holding `patient`.
    pub fn fold_of(&self, patient: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.iter().any(|p| p == patient))
    }

    /// Largest `(max − min) / mean` over types with nonzero totals.
    pub fn relative_spread(&self) -> f64 {
        (0..5)
            .filter_map(|t| {
                let v: Vec<f64> = self.totals.iter().map(|f| f[t]).collect();
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                (mean > 0.0).then(|| {
                    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
                    (max - min) / mean
                })
            })
            .fold(0.0, f64::max)
    }
}

/// Sum over types of the squared deviation of fold totals from their mean,
/// each type scaled by its overall mean so types weigh alike.
fn imbalance(totals: &[[f64; 5]], scale: &[f64; 5]) -> f64 {
    let k = totals.len() as f64;
    (0..5)
        .map(|t| {
            if scale[t] <= 0.0 {
                return 0.0;
            }
            let mean = totals.iter().map(|f| f[t]).sum::<f64>() / k;
            totals
                .iter()
                .map(|f| ((f[t] - mean) / scale[t]).powi(2))
                .sum::<f64>()
        })
        .sum()
}

/// Greedy patient-disjoint fold assignment: patients in decreasing order of
/// total artifact time each go to the fold that leaves the per-type totals
/// most even; ties go to the fold with fewer patients, then the lower index.
pub fn make_patient_folds(patients: &[PatientSummary], k: usize, seed: u64) -> Result<FoldPlan> {
    if k == 0 {
        return Err(Error::Config("fold count must be positive".into()));
    }
    if patients.len() < k {
        return Err(Error::Config(format!(
            "{} patients cannot fill {k} folds",
            patients.len()
        )));
    }
    let ids: BTreeSet<&str> = patients.iter().map(|p| p.patient_id.as_str()).collect();
    if ids.len() != patients.len() {
        return Err(Error::Config("duplicate patient ids".into()));
    }
    let mut order: Vec<&PatientSummary> = patients.iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.sort_by(|a, b| b.total().total_cmp(&a.total()));
    let mut scale = [0.0; 5];
    for p in patients {
        for t in 0..5 {
            scale[t] += p.durations[t] / k as f64;
        }
    }
    let mut folds: Vec<Vec<String>> = vec![Vec::new(); k];
    let mut totals = vec![[0.0; 5]; k];
    for p in order {
        let mut best: Option<(f64, usize, usize)> = None;
        for f in 0..k {
            let mut trial = totals.clone();
            for t in 0..5 {
                trial[f][t] += p.durations[t];
            }
            let cost = imbalance(&trial, &scale);
            let key = (cost, folds[f].len(), f);
            let better = match best {
                None => true,
                Some((c, n, i)) => {
                    cost < c - 1e-12 || ((cost - c).abs() <= 1e-12 && (key.1, key.2) < (n, i))
                }
            };
            if better {
                best = Some(key);
            }
        }
        let (_, _, f) = best.expect("k > 0");
        folds[f].push(p.patient_id.clone());
        for t in 0..5 {
            totals[f][t] += p.durations[t];
        }
    }
    for f in &mut folds {
        f.sort();
    }
    Ok(FoldPlan { folds, totals })
}

/// Errors if any patient appears in both sets.
pub fn check_disjoint<'a>(
    train: impl IntoIterator<Item = &'a str>,
    test: impl IntoIterator<Item = &'a str>,
) -> Result<()> {
    let train: BTreeSet<&str> = train.into_iter().collect();
    let shared: Vec<&str> = test.into_iter().filter(|p| train.contains(p)).collect();
    if shared.is_empty() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "patients {shared:?} appear in both training and test data"
        )))
    }
}
