//! Regression trees grown level by level with exact greedy splits over
//! presorted feature columns.

use crate::error::{Error, Result};

const LEAF: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeNode {
    /// Split feature, `usize::MAX` for leaves.
    pub feature: usize,
    /// Rows with `x[feature] <= threshold` go left.
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    /// Leaf output (already scaled by the learning rate).
    pub value: f64,
}

impl TreeNode {
    fn leaf(value: f64) -> Self {
        TreeNode {
            feature: LEAF,
            threshold: 0.0,
            left: 0,
            right: 0,
            value,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.feature == LEAF
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            let n = &self.nodes[i];
            if n.is_leaf() {
                return i;
            }
            i = if x[n.feature] <= n.threshold { n.left } else { n.right };
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.nodes[self.leaf_index(x)].value
    }

    pub fn depth(&self) -> usize {
        fn d(t: &Tree, i: usize) -> usize {
            let n = &t.nodes[i];
            if n.is_leaf() {
                0
            } else {
                1 + d(t, n.left).max(d(t, n.right))
            }
        }
        d(self, 0)
    }

    /// `(feature, threshold)` of every split in breadth-first order.
    pub fn splits(&self) -> Vec<(usize, f64)> {
        self.nodes
            .iter()
            .filter(|n| !n.is_leaf())
            .map(|n| (n.feature, n.threshold))
            .collect()
    }
}

/// Feature matrix stored by column with per-column ascending row order.
#[derive(Debug, Clone)]
pub struct Columns {
    pub(crate) cols: Vec<Vec<f64>>,
    pub(crate) order: Vec<Vec<u32>>,
    pub(crate) n_rows: usize,
}

impl Columns {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.len());
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::Empty("feature matrix".into()));
        }
        let mut cols = vec![Vec::with_capacity(n_rows); n_cols];
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n_cols {
                return Err(Error::Shape(format!("row {i} has {} features, expected {n_cols}", r.len())));
            }
            for (c, &v) in r.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite { column: c });
                }
                cols[c].push(v);
            }
        }
        let order = cols
            .iter()
            .map(|col| {
                let mut o: Vec<u32> = (0..n_rows as u32).collect();
                o.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                o
            })
            .collect();
        Ok(Columns { cols, order, n_rows })
    }

    pub fn n_features(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.cols.iter().map(|c| c[i]).collect()
    }
}

/// Weighted least-squares split gain of residual sums:
/// `S_L²/W_L + S_R²/W_R − S²/W`.
pub fn split_gain(sw_l: f64, swr_l: f64, sw: f64, swr: f64) -> f64 {
    let (sw_r, swr_r) = (sw - sw_l, swr - swr_l);
    swr_l * swr_l / sw_l + swr_r * swr_r / sw_r - swr * swr / sw
}

/// Threshold strictly separating `a < b`, so that `a <= t < b`.
pub fn midpoint(a: f64, b: f64) -> f64 {
    let m = a * 0.5 + b * 0.5;
    if m >= b || m < a {
        a
    } else {
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

#[derive(Clone, Copy, Default)]
struct Acc {
    cnt: usize,
    sw: f64,
    swr: f64,
    last: f64,
}

/// Minimum gain for a split to be taken.
pub const MIN_GAIN: f64 = 1e-12;

pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

/// Grows one tree on the rows flagged in `in_sample`, fitting residuals `r`
/// with weights `w`. Leaf values are left at zero for the caller to fill.
/// Returns the tree and, per row in the sample, its leaf index.
pub(crate) fn grow(
    x: &Columns,
    in_sample: &[bool],
    r: &[f64],
    w: &[f64],
    p: &GrowParams,
) -> (Tree, Vec<usize>) {
    let n = x.n_rows;
    let mut node_of: Vec<usize> = (0..n).map(|i| if in_sample[i] { 0 } else { LEAF }).collect();
    let mut nodes = vec![TreeNode::leaf(0.0)];
    let mut totals = vec![Acc::default()];
    for i in 0..n {
        if in_sample[i] {
            totals[0].cnt += 1;
            totals[0].sw += w[i];
            totals[0].swr += w[i] * r[i];
        }
    }
    let mut frontier: Vec<usize> = vec![0];
    let mut slot = vec![0usize; 1];
    for _depth in 0..p.max_depth {
        if frontier.is_empty() {
            break;
        }
        let mut best: Vec<Option<SplitChoice>> = vec![None; frontier.len()];
        let mut accs = vec![Acc::default(); frontier.len()];
        for f in 0..x.n_features() {
            let col = &x.cols[f];
            accs.iter_mut().for_each(|a| *a = Acc::default());
            for &ri in &x.order[f] {
                let i = ri as usize;
                let node = node_of[i];
                if node == LEAF || slot[node] == usize::MAX {
                    continue;
                }
                let s = slot[node];
                let v = col[i];
                let a = &mut accs[s];
                let t = &totals[node];
                if a.cnt >= p.min_samples_leaf
                    && v > a.last
                    && t.cnt - a.cnt >= p.min_samples_leaf
                    && a.sw > 0.0
                    && t.sw - a.sw > 0.0
                {
                    let gain = split_gain(a.sw, a.swr, t.sw, t.swr);
                    if gain > MIN_GAIN && best[s].is_none_or(|b| gain > b.gain) {
                        best[s] = Some(SplitChoice {
                            feature: f,
                            threshold: midpoint(a.last, v),
                            gain,
                        });
                    }
                }
                a.cnt += 1;
                a.sw += w[i];
                a.swr += w[i] * r[i];
                a.last = v;
            }
        }
        let mut next = Vec::new();
        let mut children: Vec<Option<(usize, usize)>> = vec![None; nodes.len()];
        for (s, &node) in frontier.iter().enumerate() {
            if let Some(b) = best[s] {
                let l = nodes.len();
                nodes.push(TreeNode::leaf(0.0));
                nodes.push(TreeNode::leaf(0.0));
                totals.push(Acc::default());
                totals.push(Acc::default());
                nodes[node] = TreeNode {
                    feature: b.feature,
                    threshold: b.threshold,
                    left: l,
                    right: l + 1,
                    value: 0.0,
                };
                children[node] = Some((l, l + 1));
                next.push(l);
                next.push(l + 1);
            }
        }
        if next.is_empty() {
            break;
        }
        for i in 0..n {
            let node = node_of[i];
            if node == LEAF {
                continue;
            }
            if let Some(Some((l, rr))) = children.get(node) {
                let nd = &nodes[node];
                let c = if x.cols[nd.feature][i] <= nd.threshold { *l } else { *rr };
                node_of[i] = c;
                totals[c].cnt += 1;
                totals[c].sw += w[i];
                totals[c].swr += w[i] * r[i];
            }
        }
        slot = vec![usize::MAX; nodes.len()];
        for (s, &node) in next.iter().enumerate() {
            slot[node] = s;
        }
        frontier = next;
    }
    (Tree { nodes }, node_of)
}

/// Best split of the given rows by exhaustive search over features and
/// distinct-value boundaries; ties keep the first feature and the lowest
/// threshold.
pub fn best_split(
    rows: &[Vec<f64>],
    r: &[f64],
    w: &[f64],
    min_samples_leaf: usize,
) -> Result<Option<SplitChoice>> {
    let x = Columns::from_rows(rows)?;
    let in_sample = vec![true; x.n_rows];
    let (tree, _) = grow(
        &x,
        &in_sample,
        r,
        w,
        &GrowParams {
            max_depth: 1,
            min_samples_leaf: min_samples_leaf.max(1),
        },
    );
    let root = tree.nodes[0];
    if root.is_leaf() {
        return Ok(None);
    }
    let mut sw_l = 0.0;
    let mut swr_l = 0.0;
    let (mut sw, mut swr) = (0.0, 0.0);
    for i in 0..x.n_rows {
        sw += w[i];
        swr += w[i] * r[i];
        if x.cols[root.feature][i] <= root.threshold {
            sw_l += w[i];
            swr_l += w[i] * r[i];
        }
    }
    Ok(Some(SplitChoice {
        feature: root.feature,
        threshold: root.threshold,
        gain: split_gain(sw_l, swr_l, sw, swr),
    }))
}
