//! Reference implementations shared by the integration tests. They favour
//! obviousness over speed.
#![allow(dead_code)]

pub mod features;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// AUC by counting every positive/negative pair, ties as one half.
pub fn auc_pairs(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Average precision as the mean over positives of the precision at the
/// positive's own score.
pub fn ap_direct(scores: &[f64], labels: &[bool]) -> f64 {
    let n_pos = labels.iter().filter(|&&l| l).count() as f64;
    let mut sum = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        let above = scores.iter().filter(|&&s| s >= si).count() as f64;
        let tp = scores
            .iter()
            .zip(labels)
            .filter(|(&s, &l)| l && s >= si)
            .count() as f64;
        sum += tp / above;
    }
    sum / n_pos
}

/// Sensitivity and specificity of `score >= threshold`.
pub fn sen_spe(scores: &[f64], labels: &[bool], threshold: f64) -> (f64, f64) {
    let (mut tp, mut p, mut tn, mut n) = (0.0, 0.0, 0.0, 0.0);
    for (&s, &l) in scores.iter().zip(labels) {
        if l {
            p += 1.0;
            if s >= threshold {
                tp += 1.0;
            }
        } else {
            n += 1.0;
            if s < threshold {
                tn += 1.0;
            }
        }
    }
    (tp / p, tn / n)
}

/// Random scored labels with both classes present; scores are quantized so
/// ties occur.
pub fn random_case(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>) {
    let n = rng.gen_range(2..60);
    let levels = rng.gen_range(2..40) as f64;
    loop {
        let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        if labels.iter().any(|&l| l) && labels.iter().any(|&l| !l) {
            let scores = (0..n).map(|_| (rng.gen::<f64>() * levels).floor() / levels).collect();
            return (scores, labels);
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Exhaustive best split: every feature, every boundary between distinct
/// sorted values, weighted least-squares gain summed from scratch. Returns
/// (feature, left-membership, gain); ties keep the first found.
pub fn brute_force_split(rows: &[Vec<f64>], r: &[f64], w: &[f64]) -> Option<(usize, Vec<bool>, f64)> {
    let n = rows.len();
    let tot_w: f64 = w.iter().sum();
    let tot_s: f64 = w.iter().zip(r).map(|(a, b)| a * b).sum();
    let mut best: Option<(usize, Vec<bool>, f64)> = None;
    for f in 0..rows[0].len() {
        let mut vals: Vec<f64> = rows.iter().map(|x| x[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for cut in vals.windows(2) {
            let left: Vec<bool> = rows.iter().map(|x| x[f] <= cut[0]).collect();
            let (mut wl, mut sl) = (0.0, 0.0);
            for i in 0..n {
                if left[i] {
                    wl += w[i];
                    sl += w[i] * r[i];
                }
            }
            let (wr, sr) = (tot_w - wl, tot_s - sl);
            let gain = sl * sl / wl + sr * sr / wr - tot_s * tot_s / tot_w;
            if best.as_ref().is_none_or(|b| gain > b.2) {
                best = Some((f, left, gain));
            }
        }
    }
    best
}

/// Random `n × d` instance with residuals and positive weights.
pub fn split_instance(seed: u64, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let mut g = rng(seed);
    let rows = (0..n).map(|_| (0..d).map(|_| g.gen_range(-1.0..1.0)).collect()).collect();
    let r = (0..n).map(|_| g.gen_range(-1.0..1.0)).collect();
    let w = (0..n).map(|_| g.gen_range(0.2..2.0)).collect();
    (rows, r, w)
}

/// Two noisy Gaussian blobs; positives are shifted along every feature.
pub fn blobs(seed: u64, n: usize, d: usize, shift: f64) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut g = rng(seed);
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let pos = i % 3 == 0;
        rows.push(
            (0..d)
                .map(|_| g.gen_range(-1.0..1.0) + if pos { shift } else { 0.0 })
                .collect(),
        );
        y.push(pos);
    }
    (rows, y)
}

/// Outcome counts of a bundle fuzzing run.
#[derive(Debug, Default)]
pub struct FuzzReport {
    pub cases: usize,
    pub rejected: usize,
    pub panics: Vec<String>,
}

fn small_channel_model() -> eegart::bmnet::ChannelModel {
    let cfg = eegart::bmnet::ChannelModelConfig {
        conv_filters: vec![2, 2, 2, 4, 8],
        d_model: 8,
        heads: 2,
        ffn_hidden: 16,
        fc1: 4,
        ..eegart::bmnet::ChannelModelConfig::with_window(1)
    };
    eegart::bmnet::build_model(&cfg, 1).expect("small model")
}

fn small_ensemble() -> eegart::gbdt::BoostedEnsemble {
    let (rows, y) = blobs(3, 60, 3, 1.0);
    let cfg = eegart::gbdt::GbdtConfig {
        n_trees: 5,
        max_depth: 3,
        ..Default::default()
    };
    eegart::gbdt::fit_boosted_binary(&rows, &y, &cfg).expect("small ensemble")
}

/// Parses `bytes` as a bundle and, if that succeeds, rebuilds and exercises
/// the model it claims to hold. Returns whether anything was rejected.
fn load_and_use(bytes: &[u8]) -> bool {
    use eegart::dataio::{BundleKind, ModelBundle};
    let Ok(b) = ModelBundle::from_bytes(bytes) else {
        return true;
    };
    match b.kind {
        BundleKind::ChannelModel => match eegart::bmnet::ChannelModel::from_bundle(&b) {
            Ok(m) => m.predict_proba(&vec![1.0; m.window_samples()]).is_err(),
            Err(_) => true,
        },
        BundleKind::BoostedEnsemble => match eegart::gbdt::BoostedEnsemble::from_bundle(&b) {
            Ok(m) => m.predict_score(&[0.5, -0.5, 2.0]).is_err(),
            Err(_) => true,
        },
    }
}

fn with_crc(mut body: Vec<u8>) -> Vec<u8> {
    let crc = crc32fast::hash(&body);
    body.extend_from_slice(&crc.to_le_bytes());
    body
}

/// Feeds `n` corrupted variants of a small channel model and a small boosted
/// ensemble to the loaders: truncations, byte flips, and flips or manifest
/// edits with the checksum recomputed so they reach the deeper checks.
pub fn fuzz_bundles(seed: u64, n: usize) -> FuzzReport {
    use eegart::dataio::ModelBundle;
    let mut g = rng(seed);
    let sources: Vec<ModelBundle> = vec![
        small_channel_model().to_bundle().unwrap(),
        small_ensemble().to_bundle().unwrap(),
    ];
    let clean: Vec<Vec<u8>> = sources.iter().map(|b| b.to_bytes().unwrap()).collect();
    let mut report = FuzzReport::default();
    for case in 0..n {
        let k = case % 2;
        let src = &clean[k];
        let bytes = match g.gen_range(0..5) {
            0 => src[..g.gen_range(0..src.len())].to_vec(),
            1 => {
                let mut v = src.clone();
                for _ in 0..g.gen_range(1..4) {
                    let i = g.gen_range(0..v.len());
                    v[i] ^= 1 << g.gen_range(0..8);
                }
                v
            }
            2 => {
                // Flip bytes in the body and re-sign it.
                let mut body = src[..src.len() - 4].to_vec();
                for _ in 0..g.gen_range(1..4) {
                    let i = g.gen_range(6..body.len());
                    body[i] = g.gen();
                }
                with_crc(body)
            }
            3 => {
                // Rewrite one manifest number with something hostile.
                let mut b = sources[k].clone();
                let hostile = [
                    serde_json::json!(0),
                    serde_json::json!(-1),
                    serde_json::json!(3),
                    serde_json::json!(1_000_000_000u64),
                    serde_json::json!(u64::MAX),
                    serde_json::json!(3.5),
                    serde_json::json!(1e300),
                ];
                let v = hostile[g.gen_range(0..hostile.len())].clone();
                mutate_json(&mut b.config, v, &mut g);
                match b.to_bytes() {
                    Ok(v) => v,
                    Err(_) => continue,
                }
            }
            _ => {
                // Declare a tensor larger than the blob behind it.
                let mut body = src[..src.len() - 4].to_vec();
                let cut = g.gen_range(1..=64.min(body.len() - 20)) * 8;
                body.truncate(body.len() - cut);
                with_crc(body)
            }
        };
        report.cases += 1;
        match std::panic::catch_unwind(|| load_and_use(&bytes)) {
            Ok(true) => report.rejected += 1,
            Ok(false) => {}
            Err(p) => {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                report.panics.push(format!("case {case}: {msg}"));
            }
        }
    }
    report
}

fn mutate_json(v: &mut serde_json::Value, x: serde_json::Value, g: &mut ChaCha8Rng) {
    fn walk(v: &serde_json::Value, at: String, out: &mut Vec<String>) {
        match v {
            serde_json::Value::Number(_) => out.push(at),
            serde_json::Value::Array(a) => {
                for (i, e) in a.iter().enumerate() {
                    walk(e, format!("{at}/{i}"), out);
                }
            }
            serde_json::Value::Object(o) => {
                for (k, e) in o {
                    walk(e, format!("{at}/{k}"), out);
                }
            }
            _ => {}
        }
    }
    let mut paths = Vec::new();
    walk(v, String::new(), &mut paths);
    if paths.is_empty() {
        return;
    }
    let at = &paths[g.gen_range(0..paths.len())];
    *v.pointer_mut(at).expect("path exists") = x;
}
