//! Value-level entry points in the conventional `[channels, time]` layout.
//! Each call builds a throwaway inference graph.

use super::graph::Graph;
use super::tensor::Tensor;
use crate::error::{Error, Result};

fn to_channels_last(x: &Tensor) -> Result<Tensor> {
    if x.shape().len() != 2 {
        return Err(Error::Shape(format!("expected [C, T], got {:?}", x.shape())));
    }
    let (c, t) = (x.shape()[0], x.shape()[1]);
    x.transpose2()?.reshape(&[1, t, c])
}

fn from_channels_last(x: &Tensor) -> Result<Tensor> {
    let (t, c) = (x.shape()[1], x.shape()[2]);
    x.clone().reshape(&[t, c])?.transpose2()
}

/// Kernel-3 same-padded cross-correlation: `x [C_in, T]`,
/// `w [C_out, C_in, 3]`, `b [C_out]` → `[C_out, T]`.
pub fn conv1d(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let ws = w.shape();
    if ws.len() != 3 || ws[2] != 3 {
        return Err(Error::Shape(format!("kernel must be [C_out, C_in, 3], got {ws:?}")));
    }
    if x.shape().len() != 2 || x.shape()[0] != ws[1] {
        return Err(Error::Shape(format!(
            "input {:?} does not match kernel {ws:?}",
            x.shape()
        )));
    }
    let (cout, cin) = (ws[0], ws[1]);
    // [C_out, C_in, 3] -> [3, C_in, C_out]
    let mut wk = vec![0.0; 3 * cin * cout];
    for o in 0..cout {
        for i in 0..cin {
            for tap in 0..3 {
                wk[(tap * cin + i) * cout + o] = w.data()[(o * cin + i) * 3 + tap];
            }
        }
    }
    let mut g = Graph::new();
    let xv = g.input(to_channels_last(x)?);
    let wv = g.input(Tensor::new(vec![3, cin, cout], wk)?);
    let bv = g.input(b.clone());
    let y = g.conv1d(xv, wv, bv)?;
    from_channels_last(g.value(y))
}

/// Size-2 stride-2 max pooling of `[C, T]`.
pub fn maxpool1d(x: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let xv = g.input(to_channels_last(x)?);
    let y = g.maxpool(xv)?;
    from_channels_last(g.value(y))
}

/// Row-wise layer normalization of a vector.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    let mut g = Graph::new();
    let xv = g.input(x.clone());
    let gv = g.input(gamma.clone());
    let bv = g.input(beta.clone());
    let y = g.layer_norm(xv, gv, bv, eps)?;
    Ok(g.value(y).clone())
}

/// Query/key/value/output projections of one attention block. Weights are
/// `[d, d]` in `x · W` orientation.
#[derive(Debug, Clone)]
pub struct AttentionWeights {
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
}

impl AttentionWeights {
    /// Identity projections with zero biases.
    pub fn identity(d: usize) -> Self {
        let mut eye = Tensor::zeros(&[d, d]);
        for i in 0..d {
            eye.data_mut()[i * d + i] = 1.0;
        }
        let z = Tensor::zeros(&[d]);
        AttentionWeights {
            wq: eye.clone(),
            bq: z.clone(),
            wk: eye.clone(),
            bk: z.clone(),
            wv: eye.clone(),
            bv: z.clone(),
            wo: eye,
            bo: z,
        }
    }
}

/// Multi-head self-attention of `tokens [n, d]`: the same tokens serve as
/// query, key and value.
pub fn multi_head_self_attention(
    tokens: &Tensor,
    w: &AttentionWeights,
    heads: usize,
) -> Result<Tensor> {
    if tokens.shape().len() != 2 {
        return Err(Error::Shape(format!("tokens must be [n, d], got {:?}", tokens.shape())));
    }
    let (n, d) = (tokens.shape()[0], tokens.shape()[1]);
    if heads == 0 || d % heads != 0 {
        return Err(Error::Config(format!("width {d} not divisible by {heads} heads")));
    }
    let mut g = Graph::new();
    let x = g.input(tokens.clone());
    let proj = |g: &mut Graph, wt: &Tensor, bt: &Tensor| -> Result<_> {
        let wv = g.input(wt.clone());
        let bv = g.input(bt.clone());
        g.linear(x, wv, Some(bv))
    };
    let q = proj(&mut g, &w.wq, &w.bq)?;
    let k = proj(&mut g, &w.wk, &w.bk)?;
    let v = proj(&mut g, &w.wv, &w.bv)?;
    let a = g.attention(q, k, v, n, heads)?;
    let wo = g.input(w.wo.clone());
    let bo = g.input(w.bo.clone());
    let y = g.linear(a, wo, Some(bo))?;
    Ok(g.value(y).clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv1d_hand_example() {
        let x = Tensor::new(vec![1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = Tensor::new(vec![1, 1, 3], vec![1.0, 0.0, -1.0]).unwrap();
        let y = conv1d(&x, &w, &Tensor::zeros(&[1])).unwrap();
        assert_eq!(y.data(), &[-2.0, -2.0, -2.0, 3.0]);
    }

    #[test]
    fn conv1d_identity_kernel_and_shape() {
        let x = Tensor::new(vec![1, 5], vec![0.3, -1.0, 2.0, 7.0, 1.5]).unwrap();
        let w = Tensor::new(vec![1, 1, 3], vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(conv1d(&x, &w, &Tensor::zeros(&[1])).unwrap().data(), x.data());

        let x = Tensor::zeros(&[1, 64]);
        let w = Tensor::zeros(&[8, 1, 3]);
        assert_eq!(conv1d(&x, &w, &Tensor::zeros(&[8])).unwrap().shape(), &[8, 64]);
    }

    #[test]
    fn conv1d_channel_mismatch() {
        let x = Tensor::zeros(&[2, 8]);
        let w = Tensor::zeros(&[4, 3, 3]);
        assert!(matches!(conv1d(&x, &w, &Tensor::zeros(&[4])), Err(Error::Shape(_))));
    }

    #[test]
    fn maxpool_examples() {
        let x = Tensor::new(vec![1, 4], vec![1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!(maxpool1d(&x).unwrap().data(), &[3.0, 5.0]);
        let x = Tensor::filled(&[2, 6], 1.25);
        let y = maxpool1d(&x).unwrap();
        assert_eq!(y.shape(), &[2, 3]);
        assert!(y.data().iter().all(|v| *v == 1.25));
        let mut x = Tensor::zeros(&[1, 64]);
        for _ in 0..5 {
            x = maxpool1d(&x).unwrap();
        }
        assert_eq!(x.shape(), &[1, 2]);
        assert!(matches!(maxpool1d(&Tensor::zeros(&[1, 5])), Err(Error::Shape(_))));
    }

    #[test]
    fn layer_norm_closed_form() {
        let y = layer_norm(
            &Tensor::vector(vec![1.0, -1.0]),
            &Tensor::filled(&[2], 1.0),
            &Tensor::zeros(&[2]),
            1e-5,
        )
        .unwrap();
        let e = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((y.data()[0] - e).abs() < 1e-15);
        assert!((y.data()[0] - 0.999995).abs() < 1e-6);
        assert!((y.data()[1] + e).abs() < 1e-15);

        let beta = Tensor::vector(vec![0.1, 0.2, 0.3]);
        let y = layer_norm(&Tensor::filled(&[3], 4.0), &Tensor::filled(&[3], 2.0), &beta, 1e-5)
            .unwrap();
        assert_eq!(y.data(), beta.data());
    }

    #[test]
    fn attention_single_token_identity() {
        let t = Tensor::new(vec![1, 8], (0..8).map(|i| i as f64 * 0.5 - 1.0).collect()).unwrap();
        let y = multi_head_self_attention(&t, &AttentionWeights::identity(8), 8).unwrap();
        for (a, b) in y.data().iter().zip(t.data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn attention_identical_tokens() {
        let row: Vec<f64> = (0..16).map(|i| (i as f64).sin()).collect();
        let t = Tensor::new(vec![2, 16], [row.clone(), row].concat()).unwrap();
        let y = multi_head_self_attention(&t, &AttentionWeights::identity(16), 8).unwrap();
        assert_eq!(&y.data()[..16], &y.data()[16..]);
    }

    #[test]
    fn attention_head_divisibility() {
        let t = Tensor::zeros(&[2, 10]);
        let err = multi_head_self_attention(&t, &AttentionWeights::identity(10), 8).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
