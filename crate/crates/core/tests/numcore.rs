use eegart::numcore::{
    conv1d, digamma, layer_norm, log_gamma, maxpool1d, multi_head_self_attention, trigamma,
    AttentionWeights, BmTargets, Graph, ParamStore, Tensor, Var,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

type Build = dyn Fn(&mut Graph, &[Var]) -> Var;

/// Scalar objective `Σ out²` of the built expression.
fn objective(inputs: &[Tensor], build: &Build) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let out = build(&mut g, &vars);
    let root = g.sum_squares(out);
    g.value(root).data()[0]
}

/// Compares reverse-mode gradients of `Σ out²` against central
/// differences for every input entry.
fn gradcheck(inputs: Vec<Tensor>, build: &Build) {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let out = build(&mut g, &vars);
    let root = g.sum_squares(out);
    let grads = g.backward(root).unwrap();
    let h = 1e-6;
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads.wrt(*v).expect("gradient reaches every input").to_vec();
        for j in 0..inputs[k].len() {
            let mut plus = inputs.clone();
            plus[k].data_mut()[j] += h;
            let mut minus = inputs.clone();
            minus[k].data_mut()[j] -= h;
            let fd = (objective(&plus, build) - objective(&minus, build)) / (2.0 * h);
            let a = analytic[j];
            let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-3);
            assert!(err < 1e-5, "input {k} entry {j}: analytic {a} vs fd {fd}");
        }
    }
}

#[test]
fn grad_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    gradcheck(
        vec![random(&[4, 3], &mut rng), random(&[3, 5], &mut rng), random(&[5], &mut rng)],
        &|g, v| g.linear(v[0], v[1], Some(v[2])).unwrap(),
    );
}

#[test]
fn grad_conv_relu_pool() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    gradcheck(
        vec![random(&[2, 8, 3], &mut rng), random(&[3, 3, 4], &mut rng), random(&[4], &mut rng)],
        &|g, v| {
            let y = g.conv1d(v[0], v[1], v[2]).unwrap();
            let y = g.relu(y);
            g.maxpool(y).unwrap()
        },
    );
}

#[test]
fn grad_layer_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    gradcheck(
        vec![random(&[3, 6], &mut rng), random(&[6], &mut rng), random(&[6], &mut rng)],
        &|g, v| g.layer_norm(v[0], v[1], v[2], 1e-5).unwrap(),
    );
}

#[test]
fn grad_attention_and_pool() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    gradcheck(
        vec![random(&[6, 4], &mut rng), random(&[6, 4], &mut rng), random(&[6, 4], &mut rng)],
        &|g, v| {
            let a = g.attention(v[0], v[1], v[2], 3, 2).unwrap();
            g.mean_pool(a, 3).unwrap()
        },
    );
}

#[test]
fn grad_add_reshape() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    gradcheck(
        vec![random(&[2, 6], &mut rng), random(&[2, 6], &mut rng)],
        &|g, v| {
            let s = g.add(v[0], v[1]).unwrap();
            g.reshape(s, &[3, 4]).unwrap()
        },
    );
}

#[test]
fn grad_bm_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let logits = random(&[5, 2], &mut rng);
    let labels = [0, 1, 1, 0, 1];
    let weights = [1.5, 0.5, 0.5, 1.5, 0.5];
    let loss = |z: &Tensor, track: bool| {
        let mut g = Graph::new();
        let v = if track { g.variable(z.clone()) } else { g.input(z.clone()) };
        let l = g
            .bm_loss(
                v,
                &BmTargets {
                    labels: &labels,
                    weights: &weights,
                    prior: [1.0, 1.0],
                },
            )
            .unwrap();
        let val = g.value(l).data()[0];
        let grad = track.then(|| g.backward(l).unwrap().wrt(v).unwrap().to_vec());
        (val, grad)
    };
    let (_, grad) = loss(&logits, true);
    let grad = grad.unwrap();
    for j in 0..10 {
        let mut p = logits.clone();
        p.data_mut()[j] += 1e-6;
        let mut m = logits.clone();
        m.data_mut()[j] -= 1e-6;
        let fd = (loss(&p, false).0 - loss(&m, false).0) / 2e-6;
        assert!((grad[j] - fd).abs() < 1e-7, "entry {j}: {} vs {fd}", grad[j]);
    }
}

#[test]
fn bm_loss_rejects_bad_targets() {
    let mut g = Graph::new();
    let z = g.input(Tensor::zeros(&[2, 2]));
    let bad_label = BmTargets {
        labels: &[0, 2],
        weights: &[1.0, 1.0],
        prior: [1.0, 1.0],
    };
    assert!(g.bm_loss(z, &bad_label).is_err());
    let short = BmTargets {
        labels: &[0],
        weights: &[1.0],
        prior: [1.0, 1.0],
    };
    assert!(g.bm_loss(z, &short).is_err());
    let bad_prior = BmTargets {
        labels: &[0, 1],
        weights: &[1.0, 1.0],
        prior: [0.0, 1.0],
    };
    assert!(g.bm_loss(z, &bad_prior).is_err());
}

#[test]
fn param_grads_follow_store_order() {
    let mut store = ParamStore::new();
    let a = store.add("a", Tensor::vector(vec![1.0, 2.0]));
    let b = store.add("b", Tensor::vector(vec![3.0]));
    let mut g = Graph::new();
    let av = g.param(&store, a);
    let root = g.sum_squares(av);
    let grads = g.backward(root).unwrap().param_grads(&store);
    assert_eq!(grads[a.index()].data(), &[2.0, 4.0]);
    // Unused parameters get zero gradients.
    assert_eq!(grads[b.index()].data(), &[0.0]);
}

#[test]
fn conv1d_matches_naive_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (cin, cout, t) = (3, 4, 11);
    let x = random(&[cin, t], &mut rng);
    let w = random(&[cout, cin, 3], &mut rng);
    let b = random(&[cout], &mut rng);
    let y = conv1d(&x, &w, &b).unwrap();
    assert_eq!(y.shape(), &[cout, t]);
    for o in 0..cout {
        for ti in 0..t {
            let mut s = b.data()[o];
            for i in 0..cin {
                for tap in 0..3 {
                    let src = ti as isize + tap as isize - 1;
                    if (0..t as isize).contains(&src) {
                        s += w.data()[(o * cin + i) * 3 + tap] * x.data()[i * t + src as usize];
                    }
                }
            }
            assert!((y.data()[o * t + ti] - s).abs() < 1e-12);
        }
    }
}

#[test]
fn maxpool_takes_pairwise_max() {
    let x = Tensor::new(vec![2, 4], vec![1.0, 3.0, -2.0, -5.0, 0.0, 0.0, 7.0, 8.0]).unwrap();
    let y = maxpool1d(&x).unwrap();
    assert_eq!(y.shape(), &[2, 2]);
    assert_eq!(y.data(), &[3.0, -2.0, 0.0, 8.0]);
}

#[test]
fn layer_norm_standardizes() {
    let x = Tensor::vector(vec![1.0, 2.0, 3.0, 4.0]);
    let y = layer_norm(&x, &Tensor::filled(&[4], 1.0), &Tensor::zeros(&[4]), 0.0).unwrap();
    let sd = 1.25f64.sqrt();
    for (a, v) in y.data().iter().zip([1.0, 2.0, 3.0, 4.0]) {
        assert!((a - (v - 2.5) / sd).abs() < 1e-12);
    }
}

#[test]
fn attention_matches_naive_softmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (n, d, heads) = (5, 4, 2);
    let x = random(&[n, d], &mut rng);
    let y = multi_head_self_attention(&x, &AttentionWeights::identity(d), heads).unwrap();
    let dh = d / heads;
    for h in 0..heads {
        for i in 0..n {
            let row = |r: usize| &x.data()[r * d + h * dh..r * d + (h + 1) * dh];
            let s: Vec<f64> = (0..n)
                .map(|j| row(i).iter().zip(row(j)).map(|(a, b)| a * b).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let z: f64 = s.iter().map(|v| v.exp()).sum();
            for c in 0..dh {
                let want: f64 = (0..n).map(|j| s[j].exp() / z * row(j)[c]).sum();
                assert!((y.data()[i * d + h * dh + c] - want).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn special_function_values() {
    assert!((digamma(1.0).unwrap() + EULER_GAMMA).abs() < 1e-13);
    assert!((digamma(0.5).unwrap() + EULER_GAMMA + 2.0 * 2f64.ln()).abs() < 1e-13);
    let pi2 = std::f64::consts::PI.powi(2);
    assert!((trigamma(1.0).unwrap() - pi2 / 6.0).abs() < 1e-13);
    assert!((trigamma(0.5).unwrap() - pi2 / 2.0).abs() < 1e-12);
    assert!((log_gamma(0.5).unwrap() - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    let mut fact = 1.0f64;
    for n in 1..30 {
        assert!((log_gamma(n as f64 + 1.0).unwrap() - fact.ln()).abs() < 1e-11 * fact.ln().max(1.0));
        fact *= (n + 1) as f64;
    }
    assert!(digamma(0.0).is_err() && trigamma(-1.0).is_err() && log_gamma(f64::NAN).is_err());
}

proptest! {
    #[test]
    fn digamma_recurrence(x in 1e-3f64..50.0) {
        let lhs = digamma(x + 1.0).unwrap();
        let rhs = digamma(x).unwrap() + 1.0 / x;
        prop_assert!((lhs - rhs).abs() < 1e-11 * rhs.abs().max(1.0));
    }

    #[test]
    fn trigamma_recurrence(x in 1e-2f64..50.0) {
        let lhs = trigamma(x + 1.0).unwrap();
        let rhs = trigamma(x).unwrap() - 1.0 / (x * x);
        prop_assert!((lhs - rhs).abs() < 1e-10 * rhs.abs().max(1.0));
    }

    #[test]
    fn digamma_is_derivative_of_log_gamma(x in 0.1f64..40.0) {
        let h = 1e-5 * x.max(1.0);
        let fd = (log_gamma(x + h).unwrap() - log_gamma(x - h).unwrap()) / (2.0 * h);
        prop_assert!((fd - digamma(x).unwrap()).abs() < 1e-6 * digamma(x).unwrap().abs().max(1.0));
    }

    #[test]
    fn log_gamma_recurrence(x in 1e-3f64..100.0) {
        let lhs = log_gamma(x + 1.0).unwrap();
        let rhs = log_gamma(x).unwrap() + x.ln();
        prop_assert!((lhs - rhs).abs() < 1e-11 * rhs.abs().max(1.0));
    }

    #[test]
    fn reshape_round_trip(r in 1usize..6, c in 1usize..6) {
        let t = Tensor::new(vec![r, c], (0..r * c).map(|v| v as f64).collect()).unwrap();
        let back = t.clone().reshape(&[c, r]).unwrap().reshape(&[r, c]).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert!(t.clone().reshape(&[r * c + 1]).is_err());
        let tt = t.transpose2().unwrap().transpose2().unwrap();
        prop_assert_eq!(tt, t);
    }
}
