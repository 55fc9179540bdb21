use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::boost::{fit_columns, GbdtConfig};
use super::tree::Columns;
use crate::error::{Error, Result};
use crate::evalkit::confusion_at;

/// Axes of the hyperparameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtGrid {
    pub depths: Vec<usize>,
    pub trees: Vec<usize>,
    pub learning_rates: Vec<f64>,
}

impl Default for GbdtGrid {
    fn default() -> Self {
        GbdtGrid {
            depths: vec![3, 4, 6],
            trees: vec![100, 300],
            learning_rates: vec![0.05, 0.1],
        }
    }
}

impl GbdtGrid {
    /// Cartesian product applied on top of `base`.
    pub fn expand(&self, base: &GbdtConfig) -> Vec<GbdtConfig> {
        let mut out = Vec::new();
        for &d in &self.depths {
            for &t in &self.trees {
                for &lr in &self.learning_rates {
                    out.push(GbdtConfig {
                        max_depth: d,
                        n_trees: t,
                        learning_rate: lr,
                        ..base.clone()
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub config: GbdtConfig,
    pub bac: Option<f64>,
    pub error: Option<String>,
}

/// Row indices of an inner train/validation split: whole groups go to
/// validation until it holds `1 − inner_split` of the rows, falling back to a
/// stratified row split when that leaves a side without both classes.
pub fn inner_split_indices(
    y: &[bool],
    groups: &[String],
    inner_split: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(inner_split > 0.0 && inner_split < 1.0) {
        return Err(Error::Config(format!("inner split {inner_split} outside (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ok = |idx: &[usize]| idx.iter().any(|&i| y[i]) && idx.iter().any(|&i| !y[i]);
    let mut by_group: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        by_group.entry(g.as_str()).or_default().push(i);
    }
    let target = ((1.0 - inner_split) * y.len() as f64).round() as usize;
    if by_group.len() >= 2 {
        let mut keys: Vec<&str> = by_group.keys().copied().collect();
        keys.shuffle(&mut rng);
        let (mut tr, mut va) = (Vec::new(), Vec::new());
        for (k, g) in keys.iter().enumerate() {
            if va.len() < target && k + 1 < keys.len() {
                va.extend_from_slice(&by_group[g]);
            } else {
                tr.extend_from_slice(&by_group[g]);
            }
        }
        if ok(&tr) && ok(&va) {
            tr.sort_unstable();
            va.sort_unstable();
            return Ok((tr, va));
        }
    }
    let (mut tr, mut va) = (Vec::new(), Vec::new());
    for class in [false, true] {
        let mut rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        if rows.len() < 2 {
            return Err(Error::SingleClass("too few rows of one class for an inner split".into()));
        }
        rows.shuffle(&mut rng);
        let nv = (((1.0 - inner_split) * rows.len() as f64).round() as usize).clamp(1, rows.len() - 1);
        va.extend_from_slice(&rows[..nv]);
        tr.extend_from_slice(&rows[nv..]);
    }
    tr.sort_unstable();
    va.sort_unstable();
    Ok((tr, va))
}

/// Fits every grid point on the inner training part, scores balanced
/// accuracy at 0.5 on the held-out part, and returns the best configuration
/// (ties: fewer trees, then shallower). Configurations differing only in
/// tree count share one fit, evaluated at each prefix length.
pub fn grid_search(
    rows: &[Vec<f64>],
    y: &[bool],
    groups: &[String],
    grid: &[GbdtConfig],
    inner_split: f64,
    seed: u64,
) -> Result<(GbdtConfig, Vec<GridRow>)> {
    if grid.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    if y.len() != rows.len() || groups.len() != rows.len() {
        return Err(Error::Shape("rows, labels and groups differ in length".into()));
    }
    let (tr, va) = inner_split_indices(y, groups, inner_split, seed)?;
    let sub = |idx: &[usize]| -> Vec<Vec<f64>> { idx.iter().map(|&i| rows[i].clone()).collect() };
    let xtr = Columns::from_rows(&sub(&tr))?;
    let ytr: Vec<bool> = tr.iter().map(|&i| y[i]).collect();
    let xva = sub(&va);
    let yva: Vec<bool> = va.iter().map(|&i| y[i]).collect();

    let mut results: Vec<GridRow> = grid
        .iter()
        .map(|c| GridRow {
            config: c.clone(),
            bac: None,
            error: None,
        })
        .collect();
    // Group configurations that differ only in n_trees.
    let key = |c: &GbdtConfig| {
        let mut k = c.clone();
        k.n_trees = 0;
        serde_json::to_string(&k).expect("config serializes")
    };
    let mut families: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, c) in grid.iter().enumerate() {
        families.entry(key(c)).or_default().push(i);
    }
    for members in families.values() {
        let max_trees = members.iter().map(|&i| grid[i].n_trees).max().unwrap_or(0);
        let mut cfg = grid[members[0]].clone();
        cfg.n_trees = max_trees;
        match fit_columns(&xtr, &ytr, &cfg) {
            Ok(model) => {
                for &i in members {
                    let k = grid[i].n_trees;
                    let scores: Vec<f64> = xva
                        .iter()
                        .map(|r| model.margin_with_trees(r, k).map(super::boost::sigmoid))
                        .collect::<Result<_>>()?;
                    results[i].bac = Some(confusion_at(&scores, &yva, 0.5).bac());
                }
            }
            Err(e) => {
                for &i in members {
                    results[i].error = Some(e.to_string());
                }
            }
        }
    }
    let best = results
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.bac.map(|b| (i, b)))
        .min_by(|(i, a), (j, b)| {
            b.total_cmp(a)
                .then(grid[*i].n_trees.cmp(&grid[*j].n_trees))
                .then(grid[*i].max_depth.cmp(&grid[*j].max_depth))
                .then(i.cmp(j))
        })
        .map(|(i, _)| i);
    match best {
        Some(i) => Ok((grid[i].clone(), results)),
        None => Err(Error::Config(format!(
            "no grid configuration could be fitted: {}",
            results[0].error.clone().unwrap_or_default()
        ))),
    }
}
