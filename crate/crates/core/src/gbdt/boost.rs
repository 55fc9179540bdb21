use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow, Columns, GrowParams, Tree, TreeNode};
use crate::dataio::{BundleKind, ModelBundle};
use crate::error::{Error, Result};
use crate::numcore::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    /// `[negative, positive]` sample weights; balanced inverse frequency
    /// when absent.
    pub class_weights: Option<[f64; 2]>,
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig {
            n_trees: 100,
            max_depth: 4,
            learning_rate: 0.1,
            min_samples_leaf: 1,
            class_weights: None,
            subsample: 1.0,
            seed: 0,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config(format!("learning rate {} outside (0, 1]", self.learning_rate)));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::Config(format!("subsample {} outside (0, 1]", self.subsample)));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Config("min_samples_leaf must be at least 1".into()));
        }
        if let Some(w) = self.class_weights {
            if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::Config(format!("class weights {w:?} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostedEnsemble {
    pub base_score: f64,
    pub trees: Vec<Tree>,
    pub n_features: usize,
    pub config: GbdtConfig,
    pub class_weights: [f64; 2],
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Logistic loss of margin `f` for label `y`: `ln(1 + e^f) − y·f`.
pub fn logistic_loss(y: bool, f: f64) -> f64 {
    let softplus = f.max(0.0) + (-f.abs()).exp().ln_1p();
    softplus - if y { f } else { 0.0 }
}

/// Weighted mean logistic loss.
pub fn weighted_logistic_loss(y: &[bool], margins: &[f64], w: &[f64]) -> f64 {
    let sw: f64 = w.iter().sum();
    y.iter()
        .zip(margins)
        .zip(w)
        .map(|((&y, &f), &w)| w * logistic_loss(y, f))
        .sum::<f64>()
        / sw
}

/// Inverse-frequency `[negative, positive]` weights averaging one.
pub fn balanced_weights(y: &[bool]) -> Result<[f64; 2]> {
    let pos = y.iter().filter(|&&v| v).count();
    let neg = y.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass(format!("{pos} positive and {neg} negative labels")));
    }
    let inv = [1.0 / neg as f64, 1.0 / pos as f64];
    let m = (inv[0] + inv[1]) / 2.0;
    Ok(inv.map(|v| v / m))
}

impl BoostedEnsemble {
    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::Shape(format!(
                "{} features supplied, model expects {}",
                x.len(),
                self.n_features
            )));
        }
        Ok(())
    }

    /// Log-odds using the first `k` trees.
    pub fn margin_with_trees(&self, x: &[f64], k: usize) -> Result<f64> {
        self.check(x)?;
        Ok(self.base_score + self.trees.iter().take(k).map(|t| t.predict(x)).sum::<f64>())
    }

    pub fn predict_margin(&self, x: &[f64]) -> Result<f64> {
        self.margin_with_trees(x, self.trees.len())
    }

    /// Probability of the positive class.
    pub fn predict_score(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.predict_margin(x)?))
    }

    pub fn predict_scores(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.predict_score(r)).collect()
    }

    /// Copy keeping only the first `k` trees.
    pub fn truncated(&self, k: usize) -> Self {
        let mut e = self.clone();
        e.trees.truncate(k);
        e.config.n_trees = e.trees.len();
        e
    }

    pub fn max_depth(&self) -> usize {
        self.trees.iter().map(Tree::depth).max().unwrap_or(0)
    }

    pub fn to_bundle(&self) -> Result<ModelBundle> {
        let config = serde_json::json!({
            "gbdt": self.config,
            "n_features": self.n_features,
        });
        let mut b = ModelBundle::new(BundleKind::BoostedEnsemble, config);
        b.push("base_score", Tensor::vector(vec![self.base_score]));
        b.push("class_weights", Tensor::vector(self.class_weights.to_vec()));
        let mut offsets = vec![0.0];
        let mut flat = Vec::new();
        for t in &self.trees {
            for n in &t.nodes {
                let feature = if n.is_leaf() { -1.0 } else { n.feature as f64 };
                flat.extend_from_slice(&[feature, n.threshold, n.left as f64, n.right as f64, n.value]);
            }
            offsets.push((flat.len() / 5) as f64);
        }
        let n_nodes = flat.len() / 5;
        b.push("tree_offsets", Tensor::vector(offsets));
        b.push("nodes", Tensor::new(vec![n_nodes, 5], flat)?);
        Ok(b)
    }

    pub fn from_bundle(b: &ModelBundle) -> Result<Self> {
        if b.kind != BundleKind::BoostedEnsemble {
            return Err(Error::Bundle("bundle does not hold a boosted ensemble".into()));
        }
        let config: GbdtConfig = serde_json::from_value(b.config["gbdt"].clone())
            .map_err(|e| Error::Bundle(format!("ensemble config: {e}")))?;
        let n_features = b.config["n_features"]
            .as_u64()
            .ok_or_else(|| Error::Bundle("missing n_features".into()))? as usize;
        let base = b.tensor("base_score")?.data();
        let cw = b.tensor("class_weights")?.data();
        if base.len() != 1 || cw.len() != 2 {
            return Err(Error::Bundle("bad base score or class weights".into()));
        }
        let offsets = b.tensor("tree_offsets")?.data();
        let nodes = b.tensor("nodes")?;
        if nodes.shape().len() != 2 || nodes.shape()[1] != 5 {
            return Err(Error::Bundle("node table must be [n, 5]".into()));
        }
        let flat = nodes.data();
        let n_nodes = nodes.shape()[0];
        let as_index = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 && v < 1e15 {
                Ok(v as usize)
            } else {
                Err(Error::Bundle(format!("bad index {v}")))
            }
        };
        let mut trees = Vec::new();
        for win in offsets.windows(2) {
            let (a, z) = (as_index(win[0])?, as_index(win[1])?);
            if a >= z || z > n_nodes {
                return Err(Error::Bundle("bad tree offsets".into()));
            }
            let mut tn = Vec::with_capacity(z - a);
            for k in a..z {
                let r = &flat[5 * k..5 * k + 5];
                let node = if r[0] == -1.0 {
                    TreeNode {
                        feature: usize::MAX,
                        threshold: r[1],
                        left: 0,
                        right: 0,
                        value: r[4],
                    }
                } else {
                    let feature = as_index(r[0])?;
                    let (left, right) = (as_index(r[2])?, as_index(r[3])?);
                    // Children must come later in the node list, which also
                    // rules out cycles.
                    let here = k - a;
                    if feature >= n_features || left <= here || right <= here || left >= z - a || right >= z - a {
                        return Err(Error::Bundle("corrupt tree node".into()));
                    }
                    TreeNode {
                        feature,
                        threshold: r[1],
                        left,
                        right,
                        value: r[4],
                    }
                };
                tn.push(node);
            }
            trees.push(Tree { nodes: tn });
        }
        if offsets.first() != Some(&0.0) || offsets.last().map(|&v| v as usize) != Some(n_nodes) {
            return Err(Error::Bundle("tree offsets do not cover the node table".into()));
        }
        Ok(BoostedEnsemble {
            base_score: base[0],
            trees,
            n_features,
            config,
            class_weights: [cw[0], cw[1]],
        })
    }
}

/// Fits a logistic-loss boosted ensemble. Each round fits a least-squares
/// tree to the weighted residuals `y − p`, sets each leaf to the Newton step
/// `Σ w(y − p) / Σ w p(1 − p)` times the learning rate, and halves a leaf's
/// step until it does not raise the training loss of the rows it holds.
pub fn fit_boosted_binary(rows: &[Vec<f64>], y: &[bool], cfg: &GbdtConfig) -> Result<BoostedEnsemble> {
    let x = Columns::from_rows(rows)?;
    fit_columns(&x, y, cfg)
}

pub(crate) fn fit_columns(x: &Columns, y: &[bool], cfg: &GbdtConfig) -> Result<BoostedEnsemble> {
    cfg.validate()?;
    if y.len() != x.n_rows {
        return Err(Error::Shape(format!("{} labels for {} rows", y.len(), x.n_rows)));
    }
    let cw = match cfg.class_weights {
        Some(w) => {
            balanced_weights(y)?;
            w
        }
        None => balanced_weights(y)?,
    };
    let n = x.n_rows;
    let w: Vec<f64> = y.iter().map(|&v| cw[v as usize]).collect();
    let sw_pos: f64 = y.iter().zip(&w).filter(|(y, _)| **y).map(|(_, w)| w).sum();
    let sw_neg: f64 = w.iter().sum::<f64>() - sw_pos;
    let base = (sw_pos / sw_neg).ln();
    let mut f = vec![base; n];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_sample = ((cfg.subsample * n as f64).round() as usize).clamp(2.min(n), n);
    let params = GrowParams {
        max_depth: cfg.max_depth,
        min_samples_leaf: cfg.min_samples_leaf,
    };
    let mut trees = Vec::with_capacity(cfg.n_trees);
    let mut r = vec![0.0; n];
    let mut h = vec![0.0; n];
    for _ in 0..cfg.n_trees {
        for i in 0..n {
            let p = sigmoid(f[i]);
            r[i] = if y[i] { 1.0 - p } else { -p };
            h[i] = p * (1.0 - p);
        }
        let in_sample = if n_sample < n {
            let mut m = vec![false; n];
            for i in sample(&mut rng, n, n_sample) {
                m[i] = true;
            }
            m
        } else {
            vec![true; n]
        };
        let (mut tree, _) = grow(x, &in_sample, &r, &w, &params);
        // Route every row, not just the sample, to its leaf.
        let mut leaf_of = vec![0usize; n];
        let mut num = vec![0.0; tree.nodes.len()];
        let mut den = vec![0.0; tree.nodes.len()];
        for i in 0..n {
            let mut k = 0;
            loop {
                let nd = &tree.nodes[k];
                if nd.is_leaf() {
                    break;
                }
                k = if x.cols[nd.feature][i] <= nd.threshold { nd.left } else { nd.right };
            }
            leaf_of[i] = k;
            if in_sample[i] {
                num[k] += w[i] * r[i];
                den[k] += w[i] * h[i];
            }
        }
        let mut before = vec![0.0; tree.nodes.len()];
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); tree.nodes.len()];
        for i in 0..n {
            before[leaf_of[i]] += w[i] * logistic_loss(y[i], f[i]);
            members[leaf_of[i]].push(i);
        }
        for k in 0..tree.nodes.len() {
            if !tree.nodes[k].is_leaf() {
                continue;
            }
            let mut step = if den[k] > 1e-300 {
                cfg.learning_rate * num[k] / den[k]
            } else {
                0.0
            };
            if !step.is_finite() {
                step = 0.0;
            }
            let mut accepted = 0.0;
            for _ in 0..40 {
                if step == 0.0 {
                    break;
                }
                let after: f64 = members[k]
                    .iter()
                    .map(|&i| w[i] * logistic_loss(y[i], f[i] + step))
                    .sum();
                if after <= before[k] {
                    accepted = step;
                    break;
                }
                step *= 0.5;
            }
            tree.nodes[k].value = accepted;
        }
        for i in 0..n {
            f[i] += tree.nodes[leaf_of[i]].value;
        }
        trees.push(tree);
    }
    Ok(BoostedEnsemble {
        base_score: base,
        trees,
        n_features: x.n_features(),
        config: cfg.clone(),
        class_weights: cw,
    })
}
