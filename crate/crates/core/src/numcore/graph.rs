//! Reverse-mode tape.
//!
//! A [`Graph`] records every operation eagerly: values are computed when the
//! op is added and whatever the backward pass needs (im2col buffers, argmax
//! indices, attention weights, normalized activations) is cached on the node.
//! [`Graph::backward`] then walks the tape in reverse.
//!
//! Layouts used by the channel model:
//! * sequences are channels-last `[batch, time, channels]`;
//! * token matrices are `[batch * tokens, width]`, with each window's tokens
//!   stored in consecutive rows (`group` = tokens per window);
//! * linear weights are `[in, out]`, conv weights `[3, c_in, c_out]`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParamStore};
use super::special::{digamma_unchecked, log_gamma_unchecked, trigamma_unchecked};
use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Logits are clamped to this magnitude before exponentiation.
pub const LOGIT_CLAMP: f64 = 30.0;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        cols: Vec<f64>,
    },
    MaxPool {
        x: Var,
        argmax: Vec<u32>,
    },
    Relu {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Reshape {
        x: Var,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        group: usize,
        heads: usize,
        probs: Vec<f64>,
    },
    MeanPool {
        x: Var,
        group: usize,
    },
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
    SumSquares {
        x: Var,
    },
    BmLoss {
        logits: Var,
        dlogits: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
#[derive(Debug)]
pub struct Grads {
    by_node: Vec<Option<Vec<f64>>>,
    params: Vec<(ParamId, usize)>,
}

impl Grads {
    /// Gradient with respect to any node, `None` if it was unreachable or
    /// does not require a gradient.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.by_node.get(v.0).and_then(|g| g.as_deref())
    }

    /// Per-parameter gradients aligned with the store, zero for parameters
    /// the loss does not depend on.
    pub fn param_grads(&self, store: &ParamStore) -> Vec<Tensor> {
        let mut out: Vec<Tensor> = store
            .iter()
            .map(|p| Tensor::zeros(p.value.shape()))
            .collect();
        for &(pid, node) in &self.params {
            if let Some(g) = &self.by_node[node] {
                let dst = out[pid.0].data_mut();
                for (d, s) in dst.iter_mut().zip(g) {
                    *d += s;
                }
            }
        }
        out
    }
}

/// Per-sample targets and weights for the belief-matching loss.
#[derive(Debug, Clone)]
pub struct BmTargets<'a> {
    /// Class index per row (0 = artifact, 1 = background).
    pub labels: &'a [usize],
    /// Weight per row, typically the class weight of the row's label.
    pub weights: &'a [f64],
    /// Dirichlet prior concentrations.
    pub prior: [f64; 2],
}

#[derive(Debug)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<(ParamId, usize)>,
    rng: Option<ChaCha8Rng>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    /// Inference graph: dropout is the identity.
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            params: Vec::new(),
            rng: None,
        }
    }

    /// Training graph: dropout draws masks from `rng`.
    pub fn training(rng: ChaCha8Rng) -> Self {
        Graph {
            nodes: Vec::new(),
            params: Vec::new(),
            rng: Some(rng),
        }
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    /// Hands the dropout generator back so training can continue the stream.
    pub fn into_rng(self) -> Option<ChaCha8Rng> {
        self.rng
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Constant input.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Free variable whose gradient is wanted (used by gradient checks).
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Binds a stored parameter.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.push(store.value(id).clone(), Op::Param, true);
        self.params.push((id, v.0));
        v
    }

    /// `x [n, k] · w [k, m] + b [m]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] {
            return Err(Error::Shape(format!("linear {xs:?} · {ws:?}")));
        }
        let (n, k, m) = (xs[0], xs[1], ws[1]);
        if let Some(b) = b {
            if self.shape(b) != [m] {
                return Err(Error::Shape(format!("linear bias {:?}, want [{m}]", self.shape(b))));
            }
        }
        let mut out = vec![0.0; n * m];
        if let Some(b) = b {
            let bv = self.nodes[b.0].value.data();
            for row in out.chunks_exact_mut(m) {
                row.copy_from_slice(bv);
            }
        }
        gemm(
            n,
            k,
            m,
            self.nodes[x.0].value.data(),
            (k as isize, 1),
            self.nodes[w.0].value.data(),
            (m as isize, 1),
            1.0,
            &mut out,
        );
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        Ok(self.push(Tensor::new(vec![n, m], out)?, Op::Linear { x, w, b }, needs))
    }

    /// Same-padded kernel-3 cross-correlation on `x [B, T, C_in]` with
    /// `w [3, C_in, C_out]`, `b [C_out]`; output `[B, T, C_out]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 3 || ws.len() != 3 || ws[0] != 3 || ws[1] != xs[2] {
            return Err(Error::Shape(format!("conv1d input {xs:?} kernel {ws:?}")));
        }
        let (bsz, t, cin, cout) = (xs[0], xs[1], xs[2], ws[2]);
        if self.shape(b) != [cout] {
            return Err(Error::Shape(format!("conv1d bias {:?}", self.shape(b))));
        }
        let xv = self.nodes[x.0].value.data();
        let kc = 3 * cin;
        let mut cols = vec![0.0; bsz * t * kc];
        for bi in 0..bsz {
            let xb = &xv[bi * t * cin..(bi + 1) * t * cin];
            for ti in 0..t {
                let row = &mut cols[(bi * t + ti) * kc..(bi * t + ti + 1) * kc];
                for tap in 0..3 {
                    let src = ti as isize + tap as isize - 1;
                    if src >= 0 && (src as usize) < t {
                        let s = src as usize;
                        row[tap * cin..(tap + 1) * cin].copy_from_slice(&xb[s * cin..(s + 1) * cin]);
                    }
                }
            }
        }
        let mut out = vec![0.0; bsz * t * cout];
        let bv = self.nodes[b.0].value.data();
        for row in out.chunks_exact_mut(cout) {
            row.copy_from_slice(bv);
        }
        gemm(
            bsz * t,
            kc,
            cout,
            &cols,
            (kc as isize, 1),
            self.nodes[w.0].value.data(),
            (cout as isize, 1),
            1.0,
            &mut out,
        );
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        let cols = if needs { cols } else { Vec::new() };
        Ok(self.push(
            Tensor::new(vec![bsz, t, cout], out)?,
            Op::Conv1d { x, w, b, cols },
            needs,
        ))
    }

    /// Max-pool with size 2 and stride 2 over the time axis of `[B, T, C]`.
    pub fn maxpool(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 || xs[1] % 2 != 0 {
            return Err(Error::Shape(format!("maxpool needs [B, even T, C], got {xs:?}")));
        }
        let (bsz, t, c) = (xs[0], xs[1], xs[2]);
        let half = t / 2;
        let xv = self.nodes[x.0].value.data();
        let mut out = vec![0.0; bsz * half * c];
        let mut argmax = vec![0u32; bsz * half * c];
        for bi in 0..bsz {
            for ti in 0..half {
                let i0 = (bi * t + 2 * ti) * c;
                let i1 = i0 + c;
                let o = (bi * half + ti) * c;
                for ci in 0..c {
                    // First maximal element wins ties.
                    let (idx, v) = if xv[i1 + ci] > xv[i0 + ci] {
                        (i1 + ci, xv[i1 + ci])
                    } else {
                        (i0 + ci, xv[i0 + ci])
                    };
                    out[o + ci] = v;
                    argmax[o + ci] = idx as u32;
                }
            }
        }
        let needs = self.needs(x);
        Ok(self.push(
            Tensor::new(vec![bsz, half, c], out)?,
            Op::MaxPool { x, argmax },
            needs,
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = &self.nodes[x.0].value;
        let out = Tensor::new(v.shape().to_vec(), v.data().iter().map(|a| a.max(0.0)).collect())
            .expect("same shape");
        let needs = self.needs(x);
        self.push(out, Op::Relu { x }, needs)
    }

    /// Elementwise sum of two equally shaped nodes.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!("add {:?} + {:?}", self.shape(a), self.shape(b))));
        }
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let data = av.data().iter().zip(bv.data()).map(|(p, q)| p + q).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add { a, b }, needs))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.nodes[x.0].value.clone().reshape(shape)?;
        let needs = self.needs(x);
        Ok(self.push(out, Op::Reshape { x }, needs))
    }

    /// Row-wise layer normalization of `[n, d]` (or `[d]`).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let d = *shape.last().ok_or_else(|| Error::Shape("layer_norm of scalar".into()))?;
        if d < 2 || self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(Error::Shape(format!("layer_norm over {shape:?}")));
        }
        let xv = self.nodes[x.0].value.data();
        let g = self.nodes[gamma.0].value.data();
        let bt = self.nodes[beta.0].value.data();
        let rows = xv.len() / d;
        let mut out = vec![0.0; xv.len()];
        let mut xhat = vec![0.0; xv.len()];
        let mut inv_std = vec![0.0; rows];
        for r in 0..rows {
            let row = &xv[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let h = (row[j] - mean) * is;
                xhat[r * d + j] = h;
                out[r * d + j] = g[j] * h + bt[j];
            }
        }
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            needs,
        ))
    }

    /// Scaled dot-product attention over groups of `group` consecutive rows
    /// with `heads` heads; `q`, `k`, `v` are `[N, d]` projections and the
    /// result is the concatenation of per-head outputs, `[N, d]`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, group: usize, heads: usize) -> Result<Var> {
        let s = self.shape(q).to_vec();
        if s.len() != 2 || self.shape(k) != s.as_slice() || self.shape(v) != s.as_slice() {
            return Err(Error::Shape("attention q/k/v shapes differ".into()));
        }
        let (n, d) = (s[0], s[1]);
        if heads == 0 || d % heads != 0 {
            return Err(Error::Config(format!("width {d} not divisible by {heads} heads")));
        }
        if group == 0 || n % group != 0 {
            return Err(Error::Shape(format!("{n} rows not divisible into groups of {group}")));
        }
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (qv, kv, vv) = (
            self.nodes[q.0].value.data(),
            self.nodes[k.0].value.data(),
            self.nodes[v.0].value.data(),
        );
        let n_groups = n / group;
        let mut probs = vec![0.0; n_groups * heads * group * group];
        let mut out = vec![0.0; n * d];
        let mut scores = vec![0.0; group];
        for g in 0..n_groups {
            for h in 0..heads {
                let pbase = (g * heads + h) * group * group;
                for i in 0..group {
                    let qi = &qv[(g * group + i) * d + h * dh..][..dh];
                    let mut mx = f64::NEG_INFINITY;
                    for (j, sc) in scores.iter_mut().enumerate() {
                        let kj = &kv[(g * group + j) * d + h * dh..][..dh];
                        *sc = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                        mx = mx.max(*sc);
                    }
                    let mut z = 0.0;
                    for sc in scores.iter_mut() {
                        *sc = (*sc - mx).exp();
                        z += *sc;
                    }
                    let prow = &mut probs[pbase + i * group..pbase + (i + 1) * group];
                    for (p, sc) in prow.iter_mut().zip(&scores) {
                        *p = sc / z;
                    }
                    let orow = &mut out[(g * group + i) * d + h * dh..][..dh];
                    for (j, p) in prow.iter().enumerate() {
                        let vj = &vv[(g * group + j) * d + h * dh..][..dh];
                        for (o, val) in orow.iter_mut().zip(vj) {
                            *o += p * val;
                        }
                    }
                }
            }
        }
        let needs = self.needs(q) || self.needs(k) || self.needs(v);
        Ok(self.push(
            Tensor::new(vec![n, d], out)?,
            Op::Attention {
                q,
                k,
                v,
                group,
                heads,
                probs,
            },
            needs,
        ))
    }

    /// Attention weights cached by an attention node, laid out
    /// `[groups, heads, group, group]`.
    pub fn attention_weights(&self, a: Var) -> Option<&[f64]> {
        match &self.nodes[a.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// Mean over each group of `group` consecutive rows: `[N, d] -> [N/group, d]`.
    pub fn mean_pool(&mut self, x: Var, group: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 || group == 0 || s[0] % group != 0 {
            return Err(Error::Shape(format!("mean_pool {s:?} by {group}")));
        }
        let (n, d) = (s[0], s[1]);
        let xv = self.nodes[x.0].value.data();
        let mut out = vec![0.0; n / group * d];
        for (r, row) in xv.chunks_exact(d).enumerate() {
            let o = &mut out[(r / group) * d..][..d];
            for (a, b) in o.iter_mut().zip(row) {
                *a += b;
            }
        }
        let inv = 1.0 / group as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        let needs = self.needs(x);
        Ok(self.push(Tensor::new(vec![n / group, d], out)?, Op::MeanPool { x, group }, needs))
    }

    /// Inverted dropout; identity on inference graphs.
    pub fn dropout(&mut self, x: Var, p: f64) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout probability {p}")));
        }
        let len = self.nodes[x.0].value.len();
        let mask: Vec<f64> = match self.rng.as_mut() {
            Some(rng) if p > 0.0 => {
                let keep = 1.0 / (1.0 - p);
                (0..len)
                    .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
                    .collect()
            }
            _ => vec![1.0; len],
        };
        let v = &self.nodes[x.0].value;
        let data = v.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let out = Tensor::new(v.shape().to_vec(), data)?;
        let needs = self.needs(x);
        Ok(self.push(out, Op::Dropout { x, mask }, needs))
    }

    /// Scalar `Σ x²`.
    pub fn sum_squares(&mut self, x: Var) -> Var {
        let s = self.nodes[x.0].value.data().iter().map(|v| v * v).sum();
        let needs = self.needs(x);
        self.push(Tensor::scalar(s), Op::SumSquares { x }, needs)
    }

    /// Belief-matching loss over a `[m, 2]` logit matrix:
    /// `-(1/m) Σ w_i · l_EB(y_i, exp(clamp(z_i)))`.
    pub fn bm_loss(&mut self, logits: Var, targets: &BmTargets<'_>) -> Result<Var> {
        let s = self.shape(logits).to_vec();
        if s.len() != 2 || s[1] != 2 {
            return Err(Error::Shape(format!("bm_loss expects [m, 2] logits, got {s:?}")));
        }
        let m = s[0];
        if m == 0 {
            return Err(Error::Empty("bm_loss batch".into()));
        }
        if targets.labels.len() != m || targets.weights.len() != m {
            return Err(Error::Shape("bm_loss targets length".into()));
        }
        if targets.prior.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::Domain("prior concentrations must be positive".into()));
        }
        let z = self.nodes[logits.0].value.data();
        let mut total = 0.0;
        let mut dlogits = vec![0.0; m * 2];
        for i in 0..m {
            let y = targets.labels[i];
            if y > 1 {
                return Err(Error::Domain(format!("label {y} outside {{0, 1}}")));
            }
            let zi = [z[2 * i], z[2 * i + 1]];
            let alpha = zi.map(|v| v.clamp(-LOGIT_CLAMP, LOGIT_CLAMP).exp());
            let (elbo, dalpha) = elbo_and_grad(y, alpha, targets.prior);
            let w = targets.weights[i];
            total -= w * elbo;
            for c in 0..2 {
                let inside = zi[c].abs() < LOGIT_CLAMP;
                dlogits[2 * i + c] = if inside {
                    -w * dalpha[c] * alpha[c] / m as f64
                } else {
                    0.0
                };
            }
        }
        let needs = self.needs(logits);
        Ok(self.push(
            Tensor::scalar(total / m as f64),
            Op::BmLoss { logits, dlogits },
            needs,
        ))
    }

    /// Reverse pass from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Grads> {
        if self.nodes[root.0].value.len() != 1 {
            return Err(Error::Shape(format!(
                "backward root must be scalar, got {:?}",
                self.shape(root)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);
        for idx in (0..=root.0).rev() {
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            self.propagate(node, &gout, &mut grads);
            grads[idx] = Some(gout);
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if !n.needs_grad {
                grads[i] = None;
            }
        }
        Ok(Grads {
            by_node: grads,
            params: self.params.clone(),
        })
    }

    fn accumulate<'a>(&self, grads: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
        if !self.needs(v) {
            return None;
        }
        let len = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
    }

    fn propagate(&self, node: &Node, gout: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::Linear { x, w, b } => {
                let xs = self.shape(*x);
                let (n, k) = (xs[0], xs[1]);
                let m = self.shape(*w)[1];
                if let Some(gx) = self.accumulate(grads, *x) {
                    // dX = dY · Wᵀ
                    gemm(
                        n,
                        m,
                        k,
                        gout,
                        (m as isize, 1),
                        self.nodes[w.0].value.data(),
                        (1, m as isize),
                        1.0,
                        gx,
                    );
                }
                if let Some(gw) = self.accumulate(grads, *w) {
                    // dW = Xᵀ · dY
                    gemm(
                        k,
                        n,
                        m,
                        self.nodes[x.0].value.data(),
                        (1, k as isize),
                        gout,
                        (m as isize, 1),
                        1.0,
                        gw,
                    );
                }
                if let Some(b) = b {
                    if let Some(gb) = self.accumulate(grads, *b) {
                        for row in gout.chunks_exact(m) {
                            for (a, r) in gb.iter_mut().zip(row) {
                                *a += r;
                            }
                        }
                    }
                }
            }
            Op::Conv1d { x, w, b, cols } => {
                let xs = self.shape(*x);
                let (bsz, t, cin) = (xs[0], xs[1], xs[2]);
                let cout = self.shape(*w)[2];
                let kc = 3 * cin;
                if let Some(gw) = self.accumulate(grads, *w) {
                    gemm(
                        kc,
                        bsz * t,
                        cout,
                        cols,
                        (1, kc as isize),
                        gout,
                        (cout as isize, 1),
                        1.0,
                        gw,
                    );
                }
                if let Some(gb) = self.accumulate(grads, *b) {
                    for row in gout.chunks_exact(cout) {
                        for (a, r) in gb.iter_mut().zip(row) {
                            *a += r;
                        }
                    }
                }
                if self.needs(*x) {
                    let mut gcols = vec![0.0; bsz * t * kc];
                    gemm(
                        bsz * t,
                        cout,
                        kc,
                        gout,
                        (cout as isize, 1),
                        self.nodes[w.0].value.data(),
                        (1, cout as isize),
                        0.0,
                        &mut gcols,
                    );
                    let gx = self.accumulate(grads, *x).expect("needs grad");
                    for bi in 0..bsz {
                        for ti in 0..t {
                            let row = &gcols[(bi * t + ti) * kc..][..kc];
                            for tap in 0..3 {
                                let src = ti as isize + tap as isize - 1;
                                if src >= 0 && (src as usize) < t {
                                    let dst = &mut gx[(bi * t + src as usize) * cin..][..cin];
                                    for (d, s) in dst.iter_mut().zip(&row[tap * cin..(tap + 1) * cin]) {
                                        *d += s;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Op::MaxPool { x, argmax } => {
                if let Some(gx) = self.accumulate(grads, *x) {
                    for (g, &i) in gout.iter().zip(argmax) {
                        gx[i as usize] += g;
                    }
                }
            }
            Op::Relu { x } => {
                let xv = self.nodes[x.0].value.data();
                if let Some(gx) = self.accumulate(grads, *x) {
                    for ((d, g), v) in gx.iter_mut().zip(gout).zip(xv) {
                        if *v > 0.0 {
                            *d += g;
                        }
                    }
                }
            }
            Op::Add { a, b } => {
                for v in [*a, *b] {
                    if let Some(gv) = self.accumulate(grads, v) {
                        for (d, g) in gv.iter_mut().zip(gout) {
                            *d += g;
                        }
                    }
                }
            }
            Op::Reshape { x } => {
                if let Some(gx) = self.accumulate(grads, *x) {
                    for (d, g) in gx.iter_mut().zip(gout) {
                        *d += g;
                    }
                }
            }
            Op::Dropout { x, mask } => {
                if let Some(gx) = self.accumulate(grads, *x) {
                    for ((d, g), m) in gx.iter_mut().zip(gout).zip(mask) {
                        *d += g * m;
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let d = self.shape(*gamma)[0];
                let g = self.nodes[gamma.0].value.data().to_vec();
                if let Some(gg) = self.accumulate(grads, *gamma) {
                    for (row_g, row_h) in gout.chunks_exact(d).zip(xhat.chunks_exact(d)) {
                        for j in 0..d {
                            gg[j] += row_g[j] * row_h[j];
                        }
                    }
                }
                if let Some(gb) = self.accumulate(grads, *beta) {
                    for row_g in gout.chunks_exact(d) {
                        for (a, r) in gb.iter_mut().zip(row_g) {
                            *a += r;
                        }
                    }
                }
                if let Some(gx) = self.accumulate(grads, *x) {
                    let mut dh = vec![0.0; d];
                    for (r, is) in inv_std.iter().enumerate() {
                        let row_g = &gout[r * d..(r + 1) * d];
                        let row_h = &xhat[r * d..(r + 1) * d];
                        let mut s1 = 0.0;
                        let mut s2 = 0.0;
                        for j in 0..d {
                            dh[j] = row_g[j] * g[j];
                            s1 += dh[j];
                            s2 += dh[j] * row_h[j];
                        }
                        let dst = &mut gx[r * d..(r + 1) * d];
                        for j in 0..d {
                            dst[j] += is / d as f64 * (d as f64 * dh[j] - s1 - row_h[j] * s2);
                        }
                    }
                }
            }
            Op::Attention {
                q,
                k,
                v,
                group,
                heads,
                probs,
            } => self.attention_backward(*q, *k, *v, *group, *heads, probs, gout, grads),
            Op::MeanPool { x, group } => {
                let d = self.shape(*x)[1];
                let inv = 1.0 / *group as f64;
                if let Some(gx) = self.accumulate(grads, *x) {
                    for (r, row) in gx.chunks_exact_mut(d).enumerate() {
                        let src = &gout[(r / group) * d..][..d];
                        for (a, s) in row.iter_mut().zip(src) {
                            *a += s * inv;
                        }
                    }
                }
            }
            Op::SumSquares { x } => {
                let xv = self.nodes[x.0].value.data();
                if let Some(gx) = self.accumulate(grads, *x) {
                    for (d, v) in gx.iter_mut().zip(xv) {
                        *d += 2.0 * v * gout[0];
                    }
                }
            }
            Op::BmLoss { logits, dlogits } => {
                if let Some(gz) = self.accumulate(grads, *logits) {
                    for (d, s) in gz.iter_mut().zip(dlogits) {
                        *d += s * gout[0];
                    }
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        q: Var,
        k: Var,
        v: Var,
        group: usize,
        heads: usize,
        probs: &[f64],
        gout: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let d = self.shape(q)[1];
        let n = self.shape(q)[0];
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (qv, kv, vv) = (
            self.nodes[q.0].value.data(),
            self.nodes[k.0].value.data(),
            self.nodes[v.0].value.data(),
        );
        let mut gq = vec![0.0; n * d];
        let mut gk = vec![0.0; n * d];
        let mut gv = vec![0.0; n * d];
        let mut dp = vec![0.0; group];
        for g in 0..n / group {
            for h in 0..heads {
                let pbase = (g * heads + h) * group * group;
                for i in 0..group {
                    let go = &gout[(g * group + i) * d + h * dh..][..dh];
                    let prow = &probs[pbase + i * group..pbase + (i + 1) * group];
                    // dP_ij = dO_i · V_j ; dV_j += P_ij dO_i
                    for j in 0..group {
                        let r = (g * group + j) * d + h * dh;
                        let vj = &vv[r..r + dh];
                        dp[j] = go.iter().zip(vj).map(|(a, b)| a * b).sum();
                        let p = prow[j];
                        for (dst, a) in gv[r..r + dh].iter_mut().zip(go) {
                            *dst += p * a;
                        }
                    }
                    let dot: f64 = prow.iter().zip(&dp).map(|(p, x)| p * x).sum();
                    let qi_off = (g * group + i) * d + h * dh;
                    for j in 0..group {
                        let ds = prow[j] * (dp[j] - dot) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        let kj_off = (g * group + j) * d + h * dh;
                        for c in 0..dh {
                            gq[qi_off + c] += ds * kv[kj_off + c];
                            gk[kj_off + c] += ds * qv[qi_off + c];
                        }
                    }
                }
            }
        }
        for (var, local) in [(q, gq), (k, gk), (v, gv)] {
            if let Some(dst) = self.accumulate(grads, var) {
                for (a, b) in dst.iter_mut().zip(&local) {
                    *a += b;
                }
            }
        }
    }
}

/// `l_EB(y, α) = ψ(α_y) − ψ(α₀) − KL(Dir(α) ‖ Dir(β))` and its gradient with
/// respect to α.
pub(crate) fn elbo_and_grad(y: usize, alpha: [f64; 2], prior: [f64; 2]) -> (f64, [f64; 2]) {
    let a0 = alpha[0] + alpha[1];
    let b0 = prior[0] + prior[1];
    let psi = alpha.map(digamma_unchecked);
    let psi0 = digamma_unchecked(a0);
    let tri = alpha.map(trigamma_unchecked);
    let tri0 = trigamma_unchecked(a0);
    let kl = dirichlet_kl_unchecked(alpha, prior);
    let elbo = psi[y] - psi0 - kl;
    let mut grad = [0.0; 2];
    for j in 0..2 {
        let d_expect = if j == y { tri[j] } else { 0.0 } - tri0;
        let d_kl = (alpha[j] - prior[j]) * tri[j] - (a0 - b0) * tri0;
        grad[j] = d_expect - d_kl;
    }
    (elbo, grad)
}

pub(crate) fn dirichlet_kl_unchecked(alpha: [f64; 2], beta: [f64; 2]) -> f64 {
    let a0 = alpha[0] + alpha[1];
    let b0 = beta[0] + beta[1];
    let psi0 = digamma_unchecked(a0);
    let mut kl = log_gamma_unchecked(a0) - log_gamma_unchecked(b0);
    for k in 0..2 {
        kl += log_gamma_unchecked(beta[k]) - log_gamma_unchecked(alpha[k]);
        kl += (alpha[k] - beta[k]) * (digamma_unchecked(alpha[k]) - psi0);
    }
    kl
}
