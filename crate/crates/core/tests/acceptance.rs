//! Acceptance run: one PASS/FAIL/SKIP line per criterion. Pass criterion
//! numbers as arguments to run a subset, e.g.
//! `cargo test --test acceptance -- 2 8`.

mod common;

use std::collections::HashMap;
use std::f64::consts::LN_2;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use eegart::bmnet::{
    build_model, dirichlet_kl, sample_loss, ChannelModel, ChannelModelConfig, LabeledWindow, WindowLabel,
    UNIFORM_PRIOR,
};
use eegart::dataio::{load_annotations, load_recording, ArtifactEvent, ArtifactType, EegRecording, ModelBundle};
use eegart::dsp::{design_filter, FilterSpec, PreprocessConfig};
use eegart::evalkit::{auprc, check_disjoint, make_patient_folds, rates_at_threshold, roc_auc, PatientSummary};
use eegart::gbdt::{balanced_weights, best_split, fit_boosted_binary, weighted_logistic_loss, BoostedEnsemble, GbdtConfig};
use eegart::numcore::{BmTargets, Graph};
use eegart::segfeat::SegmentLabels;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Verdict;

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn main() {
    let criteria: [(u32, &str, Check); 10] = [
        (1, "published numbers on the gated corpus", c1_gated_reproduction),
        (2, "BM-loss gradients of the 1 s model match central differences", c2_gradients),
        (3, "BM loss closed forms", c3_closed_forms),
        (4, "filter responses from coefficients", c4_filters),
        (5, "metric oracles", c5_metrics),
        (6, "feature contract", c6_features),
        (7, "GBDT splits and monotone training loss", c7_gbdt),
        (8, "end-to-end synthetic run", c8_end_to_end),
        (9, "fold hygiene", c9_folds),
        (10, "persistence and corruption handling", c10_persistence),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, title, check) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let v = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::Fail(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        let (tag, detail) = match v {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("{tag} criterion {n}: {title} [{secs:.1} s] {detail}");
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn read_csv(path: &Path) -> Result<Vec<HashMap<String, String>>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap_or_default().split(',').map(String::from).collect();
    Ok(lines
        .map(|l| header.iter().cloned().zip(l.split(',').map(String::from)).collect())
        .collect())
}

fn field(row: &HashMap<String, String>, key: &str) -> Result<f64, String> {
    row.get(key)
        .ok_or_else(|| format!("missing column {key}"))?
        .parse()
        .map_err(|_| format!("column {key} is not numeric"))
}

/// Environment variable naming an experiment directory produced by the full
/// pipeline on the access-gated clinical corpus.
const GATED_ENV: &str = "EEGART_GATED_EXPERIMENT";

fn c1_gated_reproduction() -> Verdict {
    let Some(dir) = std::env::var_os(GATED_ENV) else {
        return Verdict::Skip(format!("set {GATED_ENV} to an experiment directory built from the clinical corpus"));
    };
    let reports = PathBuf::from(dir).join("reports");
    let run = || -> Result<String, String> {
        let binary = read_csv(&reports.join("binary.csv"))?;
        let chew = binary
            .iter()
            .find(|r| r.get("type").map(String::as_str) == Some("chew") && r.get("L").map(String::as_str) == Some("3"))
            .ok_or("binary.csv has no chew L=3 row")?;
        let bac = field(chew, "bac")?;
        let combined = read_csv(&reports.join("combined.csv"))?;
        let l5 = combined
            .iter()
            .find(|r| r.get("window_len_s").map(String::as_str) == Some("5"))
            .ok_or("combined.csv has no L=5 row")?;
        let sen = field(l5, "sen95")?;
        let ok = (bac - 0.941).abs() <= 0.03 && (sen - 0.604).abs() <= 0.05;
        let msg = format!("chew L=3 BAC {bac:.3} (0.941 ± 0.03), combined L=5 SEN@95 {sen:.3} (0.604 ± 0.05)");
        if ok {
            Ok(msg)
        } else {
            Err(msg)
        }
    };
    match run() {
        Ok(m) => Verdict::Pass(m),
        Err(m) => Verdict::Fail(m),
    }
}

fn random_batch(seed: u64, n: usize, len: usize) -> Vec<LabeledWindow> {
    let mut g = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| LabeledWindow {
            samples: (0..len).map(|_| g.gen_range(-80.0..80.0)).collect(),
            label: if i % 2 == 0 { WindowLabel::Artifact } else { WindowLabel::Background },
            artifact_type: ArtifactType::Musc,
            channel: "FP1".into(),
            patient_id: "p".into(),
            start_s: 0.0,
        })
        .collect()
}

fn c2_gradients() -> Verdict {
    let start = Instant::now();
    let mut model = build_model(&ChannelModelConfig::with_window(1), 17).unwrap();
    let batch = random_batch(18, 6, model.window_samples());
    let weights = [1.3, 0.7];
    let loss_of = |m: &ChannelModel| eegart::bmnet::bm_loss(&batch, m, UNIFORM_PRIOR, weights).unwrap();

    let windows: Vec<&[f64]> = batch.iter().map(|w| w.samples.as_slice()).collect();
    let labels: Vec<usize> = batch.iter().map(eegart::bmnet::class_index).collect();
    let w: Vec<f64> = labels.iter().map(|&c| weights[c]).collect();
    let mut g = Graph::new();
    let z = model.forward_graph(&mut g, &windows, true).unwrap();
    let root = g
        .bm_loss(
            z,
            &BmTargets {
                labels: &labels,
                weights: &w,
                prior: UNIFORM_PRIOR,
            },
        )
        .unwrap();
    let grads = g.backward(root).unwrap().param_grads(model.params());

    // Tensors up to 512 entries are checked in full; larger ones at the entry
    // with the largest gradient plus 511 random entries. ReLU and max-pool kinks make the
    // loss piecewise smooth, so a step that straddles one is detected by the
    // one-sided differences disagreeing and retried with a smaller step.
    // Roundoff in a central difference is about 1e-10 here, so gradients
    // below the floor are compared absolutely.
    let floor = 1e-5;
    let base = loss_of(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let ids: Vec<_> = model.params().ids().collect();
    let (mut checked, mut retried, mut worst, mut worst_at) = (0usize, 0usize, 0.0f64, String::new());
    for (k, id) in ids.into_iter().enumerate() {
        let gk = grads[k].data().to_vec();
        let n = gk.len();
        let entries: Vec<usize> = if n <= 512 {
            (0..n).collect()
        } else {
            let top = (0..n).max_by(|&a, &b| gk[a].abs().total_cmp(&gk[b].abs())).unwrap();
            std::iter::once(top).chain((0..511).map(|_| rng.gen_range(0..n))).collect()
        };
        for i in entries {
            let orig = model.params().value(id).data()[i];
            // (one-sided disagreement, central difference) of the best step.
            let mut best = (f64::INFINITY, f64::NAN);
            for (attempt, h) in [1e-5, 1e-6, 1e-7].into_iter().enumerate() {
                model.params_mut().value_mut(id).data_mut()[i] = orig + h;
                let up = loss_of(&model);
                model.params_mut().value_mut(id).data_mut()[i] = orig - h;
                let down = loss_of(&model);
                model.params_mut().value_mut(id).data_mut()[i] = orig;
                let (fwd, bwd) = ((up - base) / h, (base - down) / h);
                let gap = (fwd - bwd).abs() / fwd.abs().max(bwd.abs()).max(floor);
                if gap < best.0 {
                    best = (gap, (up - down) / (2.0 * h));
                }
                if gap <= 1e-4 {
                    break;
                }
                if attempt == 0 {
                    retried += 1;
                }
            }
            let fd = best.1;
            let rel = (fd - gk[i]).abs() / fd.abs().max(gk[i].abs()).max(floor);
            checked += 1;
            if rel > worst {
                worst = rel;
                worst_at = format!("{}[{i}] analytic {:.6e} fd {fd:.6e}", model.params().name(id), gk[i]);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-3 && secs < 60.0,
        format!(
            "{checked} entries over {} tensors ({} parameters), {retried} needed a smaller step, worst rel err {worst:.2e} at {worst_at}, {secs:.1} s",
            grads.len(),
            model.params().n_scalars()
        ),
    )
}

fn c3_closed_forms() -> Verdict {
    let l11: Vec<f64> = (0..2).map(|y| sample_loss(y, [1.0, 1.0], 1.0, UNIFORM_PRIOR).unwrap()).collect();
    let l21 = sample_loss(0, [2.0, 1.0], 1.0, UNIFORM_PRIOR).unwrap();
    let kl = dirichlet_kl([2.0, 1.0], [1.0, 1.0]).unwrap();
    let errs = [
        (l11[0] - 1.0).abs(),
        (l11[1] - 1.0).abs(),
        (l21 - LN_2).abs(),
        (kl - (LN_2 - 0.5)).abs(),
    ];
    let worst = errs.iter().copied().fold(0.0, f64::max);
    verdict(
        worst <= 1e-10,
        format!("loss(1,1) = {:.15}, loss(2,1) = {l21:.15}, KL = {kl:.15}, worst error {worst:.1e}", l11[0]),
    )
}

/// `|H(e^{jω})|` in dB from the section coefficients, evaluated with plain
/// trigonometry.
fn db_from_coefficients(f: &eegart::dsp::BiquadCascade, freq: f64) -> f64 {
    let w = 2.0 * std::f64::consts::PI * freq / f.sample_rate_hz;
    let mut mag = f.gain.abs();
    for s in &f.sections {
        let (c1, s1, c2, s2) = (w.cos(), w.sin(), (2.0 * w).cos(), (2.0 * w).sin());
        let nr = s.b0 + s.b1 * c1 + s.b2 * c2;
        let ni = -(s.b1 * s1 + s.b2 * s2);
        let dr = 1.0 + s.a1 * c1 + s.a2 * c2;
        let di = -(s.a1 * s1 + s.a2 * s2);
        mag *= ((nr * nr + ni * ni) / (dr * dr + di * di)).sqrt();
    }
    20.0 * mag.log10()
}

fn c4_filters() -> Verdict {
    let start = Instant::now();
    let cfg = PreprocessConfig::default();
    let mut lines = Vec::new();
    let mut ok = true;
    for fs in [250.0, 256.0, 512.0] {
        let hp = design_filter(&FilterSpec::highpass(cfg.highpass_order, cfg.highpass_hz, fs)).unwrap();
        let notch = design_filter(&FilterSpec::notch(cfg.notch_order, cfg.notch_hz, cfg.notch_half_width_hz, fs)).unwrap();
        let (h1, h025) = (db_from_coefficients(&hp, 1.0), db_from_coefficients(&hp, 0.25));
        let (n60, n50) = (db_from_coefficients(&notch, 60.0), db_from_coefficients(&notch, 50.0));
        ok &= (h1 + 3.01).abs() <= 0.2 && h025 <= -40.0 && n60 <= -40.0 && n50 >= -1.0;
        lines.push(format!(
            "fs {fs}: HP {h1:.3} dB @1 Hz, {h025:.1} dB @0.25 Hz; notch {n60:.1} dB @60 Hz, {n50:.3} dB @50 Hz"
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(ok && secs < 1.0, format!("{}; {:.4} s", lines.join("; "), secs))
}

fn c5_metrics() -> Verdict {
    let mut r = common::rng(1);
    let (mut auc_err, mut ap_err, mut bac_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let (s, l) = common::random_case(&mut r);
        auc_err = auc_err.max((roc_auc(&s, &l).unwrap() - common::auc_pairs(&s, &l)).abs());
        ap_err = ap_err.max((auprc(&s, &l).unwrap() - common::ap_direct(&s, &l)).abs());
        let mut ths: Vec<f64> = s.clone();
        ths.extend([-0.5, 0.5, 1.5]);
        for th in ths {
            let rates = rates_at_threshold(&s, &l, th).unwrap();
            let (sen, spe) = common::sen_spe(&s, &l, th);
            bac_err = bac_err
                .max((rates.bac - (rates.sen + rates.spe) / 2.0).abs())
                .max((rates.sen - sen).abs())
                .max((rates.spe - spe).abs());
        }
    }
    verdict(
        auc_err <= 1e-9 && ap_err <= 1e-12 && bac_err <= 1e-12,
        format!("1000 cases: AUC err {auc_err:.1e}, AUPRC err {ap_err:.1e}, BAC identity err {bac_err:.1e}"),
    )
}

fn c6_features() -> Verdict {
    use common::features::{features, MONTAGE_21, MONTAGE_8};
    let names = eegart::segfeat::feature_names();
    let mut problems = Vec::new();
    if names.len() != 74 {
        problems.push(format!("{} feature names", names.len()));
    }
    let m19: Vec<&str> = eegart::dataio::STANDARD_MONTAGE.to_vec();
    for montage in [&m19[..], &MONTAGE_21[..], &MONTAGE_8[..]] {
        for l in [1, 3, 5] {
            let f = features(montage, l);
            if f.len() != 74 {
                problems.push(format!("{} channels L={l}: {} values", montage.len(), f.len()));
                continue;
            }
            for r in 0..7 {
                let s: f64 = f[r * 10 + 5..r * 10 + 10].iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    problems.push(format!("{} channels L={l} region {r}: histogram sums to {s}", montage.len()));
                }
            }
        }
    }
    if let Err(e) = common::features::check_golden() {
        problems.push(e);
    }
    verdict(
        problems.is_empty(),
        if problems.is_empty() {
            "74 values in frozen order for 19/21/8 channels at L = 1, 3, 5; histograms sum to 1; golden file matches".into()
        } else {
            problems.join("; ")
        },
    )
}

fn c7_gbdt() -> Verdict {
    let mut split_fail = Vec::new();
    for seed in 0..50 {
        let (rows, r, w) = common::split_instance(seed, 200, 5);
        let got = best_split(&rows, &r, &w, 1).unwrap();
        let want = common::brute_force_split(&rows, &r, &w);
        let same = match (got, want) {
            (Some(g), Some((f, left, gain))) => {
                let mine: Vec<bool> = rows.iter().map(|x| x[g.feature] <= g.threshold).collect();
                g.feature == f && mine == left && (g.gain - gain).abs() <= 1e-9 * gain.max(1.0)
            }
            (None, None) => true,
            _ => false,
        };
        if !same {
            split_fail.push(seed);
        }
    }
    let mut rises = 0;
    let mut drop = (0.0, 0.0);
    for seed in 0..5 {
        let (rows, y) = common::blobs(seed, 300, 5, 0.6);
        let m = fit_boosted_binary(
            &rows,
            &y,
            &GbdtConfig {
                n_trees: 100,
                max_depth: 3,
                ..GbdtConfig::default()
            },
        )
        .unwrap();
        let cw = balanced_weights(&y).unwrap();
        let w: Vec<f64> = y.iter().map(|&v| cw[v as usize]).collect();
        let mut prev = f64::INFINITY;
        for k in 0..=m.trees.len() {
            let f: Vec<f64> = rows.iter().map(|x| m.margin_with_trees(x, k).unwrap()).collect();
            let l = weighted_logistic_loss(&y, &f, &w);
            if l > prev + 1e-12 {
                rises += 1;
            }
            if k == 0 {
                drop.0 = l;
            }
            drop.1 = l;
            prev = l;
        }
    }
    verdict(
        split_fail.is_empty() && rises == 0,
        format!(
            "50 instances 200×5: {} split mismatches; 5 fits × 100 rounds: {rises} loss increases (last fit {:.4} → {:.4})",
            split_fail.len(),
            drop.0,
            drop.1
        ),
    )
}

fn c9_folds() -> Verdict {
    let mut worst = 0.0f64;
    let mut problems = Vec::new();
    for seed in 0..20 {
        let mut r = common::rng(1000 + seed);
        let ps: Vec<PatientSummary> = (0..100)
            .map(|i| PatientSummary {
                patient_id: format!("p{i:03}"),
                durations: std::array::from_fn(|_| r.gen_range(0.0..120.0)),
            })
            .collect();
        let plan = make_patient_folds(&ps, 5, seed).unwrap();
        worst = worst.max(plan.relative_spread());
        let mut all: Vec<&String> = plan.folds.iter().flatten().collect();
        all.sort();
        all.dedup();
        if all.len() != 100 || plan.folds.iter().map(Vec::len).sum::<usize>() != 100 {
            problems.push(format!("seed {seed}: folds do not partition the cohort"));
        }
        for (f, test) in plan.folds.iter().enumerate() {
            let train = plan
                .folds
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, m)| m.iter().map(String::as_str));
            if check_disjoint(train, test.iter().map(String::as_str)).is_err() {
                problems.push(format!("seed {seed} fold {f}: train and test share a patient"));
            }
        }
    }
    verdict(
        problems.is_empty() && worst <= 0.3,
        format!("20 cohorts of 100 patients, 5 folds: worst relative spread {worst:.3}; {}", if problems.is_empty() { "all disjoint".to_string() } else { problems.join("; ") }),
    )
}

fn c10_persistence() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let mut problems = Vec::new();

    let m = build_model(&ChannelModelConfig::with_window(3), 23).unwrap();
    let p = dir.path().join("channel.eegm");
    eegart::dataio::save_model(&m.to_bundle().unwrap(), &p).unwrap();
    let back = ChannelModel::from_bundle(&eegart::dataio::load_model(&p).unwrap()).unwrap();
    let batch = random_batch(24, 8, m.window_samples());
    let windows: Vec<&[f64]> = batch.iter().map(|w| w.samples.as_slice()).collect();
    let a = m.predict_proba_batch(&windows).unwrap();
    let b = back.predict_proba_batch(&windows).unwrap();
    if a.iter().zip(&b).any(|(x, y)| x.to_bits() != y.to_bits()) {
        problems.push("channel model predictions differ after reload".to_string());
    }

    let (rows, y) = common::blobs(25, 300, 6, 0.8);
    let e = fit_boosted_binary(&rows, &y, &GbdtConfig::default()).unwrap();
    let p = dir.path().join("ensemble.eegm");
    eegart::dataio::save_model(&e.to_bundle().unwrap(), &p).unwrap();
    let back = BoostedEnsemble::from_bundle(&eegart::dataio::load_model(&p).unwrap()).unwrap();
    let a = e.predict_scores(&rows).unwrap();
    let b = back.predict_scores(&rows).unwrap();
    if a.iter().zip(&b).any(|(x, y)| x.to_bits() != y.to_bits()) {
        problems.push("ensemble predictions differ after reload".to_string());
    }
    let bytes = std::fs::read(&p).unwrap();
    if ModelBundle::from_bytes(&bytes).unwrap().to_bytes().unwrap() != bytes {
        problems.push("bundle bytes change on re-encoding".to_string());
    }

    let report = common::fuzz_bundles(2024, 1000);
    if !report.panics.is_empty() {
        problems.push(format!("{} crashes, first {}", report.panics.len(), report.panics[0]));
    }
    verdict(
        problems.is_empty(),
        format!(
            "bitwise reload of channel model and ensemble; fuzz {} mutations, {} rejected, {} crashes{}",
            report.cases,
            report.rejected,
            report.panics.len(),
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
        ),
    )
}

// ---------------------------------------------------------------------------
// End-to-end run

const E2E_SEED: &str = "7";
const E2E_TYPES: [ArtifactType; 2] = [ArtifactType::Eyem, ArtifactType::Musc];
const E2E_BUDGET: Duration = Duration::from_secs(30 * 60);

fn mean_square(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64
}

/// Power above roughly 20 Hz: the second difference has gain
/// `16 sin⁴(πf/fs)`, about −50 dB at 2 Hz and −2 dB at 40 Hz for 256 Hz data.
fn high_band_power(x: &[f64]) -> f64 {
    let d: Vec<f64> = x.windows(3).map(|w| w[2] - 2.0 * w[1] + w[0]).collect();
    mean_square(&d)
}

/// Power below roughly 4 Hz: a 1/8 s moving average, then a least-squares
/// line removed so slow drift does not count.
fn low_band_power(x: &[f64], fs: f64) -> f64 {
    let k = ((fs / 8.0).round() as usize).max(1);
    if x.len() <= k {
        return 0.0;
    }
    let mut s: Vec<f64> = x.windows(k).map(|w| w.iter().sum::<f64>() / k as f64).collect();
    let n = s.len() as f64;
    let tm = (n - 1.0) / 2.0;
    let ym = s.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in s.iter().enumerate() {
        sxy += (i as f64 - tm) * (v - ym);
        sxx += (i as f64 - tm).powi(2);
    }
    let slope = sxy / sxx.max(1e-12);
    for (i, v) in s.iter_mut().enumerate() {
        *v -= ym + slope * (i as f64 - tm);
    }
    mean_square(&s)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Segment scores of the band-power oracle for one recording: per channel,
/// band power divided by that channel's median over the recording, then the
/// maximum over the channels the artifact shows on.
fn oracle_scores(rec: &EegRecording, t: ArtifactType, l: usize) -> Vec<f64> {
    let fs = rec.sample_rate_hz;
    let seg = (l as f64 * fs).round() as usize;
    let n_seg = rec.n_samples() / seg;
    let chans: Vec<usize> = match t {
        ArtifactType::Eyem => ["FP1", "FP2"].iter().filter_map(|c| rec.channel_index(c)).collect(),
        _ => (0..rec.channels.len()).collect(),
    };
    let per_channel: Vec<Vec<f64>> = chans
        .iter()
        .map(|&c| {
            let p: Vec<f64> = (0..n_seg)
                .map(|s| {
                    let x = &rec.samples[c][s * seg..(s + 1) * seg];
                    match t {
                        ArtifactType::Eyem => low_band_power(x, fs),
                        _ => high_band_power(x),
                    }
                })
                .collect();
            let m = median(p.clone()).max(1e-12);
            p.into_iter().map(|v| v / m).collect()
        })
        .collect();
    (0..n_seg)
        .map(|s| per_channel.iter().map(|p| p[s]).fold(0.0, f64::max))
        .collect()
}

/// Balanced accuracy at the best single threshold.
fn best_threshold_bac(scores: &[f64], labels: &[bool]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let p = labels.iter().filter(|&&l| l).count() as f64;
    let n = labels.len() as f64 - p;
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut best = 0.5;
    for (k, &i) in idx.iter().enumerate() {
        if labels[i] {
            tp += 1.0;
        } else {
            fp += 1.0;
        }
        let tie_next = idx.get(k + 1).is_some_and(|&j| scores[j] == scores[i]);
        if !tie_next {
            best = f64::max(best, (tp / p + (n - fp) / n) / 2.0);
        }
    }
    best
}

fn corpus(dir: &Path) -> Vec<(EegRecording, Vec<ArtifactEvent>)> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "eegr"))
        .collect();
    files.sort();
    files
        .iter()
        .map(|p| {
            let rec = load_recording(p).unwrap();
            let ev = load_annotations(&p.with_extension("csv"), &rec).unwrap();
            (rec, ev)
        })
        .collect()
}

fn oracle_bac(data: &[(EegRecording, Vec<ArtifactEvent>)], t: ArtifactType, l: usize) -> f64 {
    let (mut scores, mut labels) = (Vec::new(), Vec::new());
    for (rec, ev) in data {
        for (s, score) in oracle_scores(rec, t, l).into_iter().enumerate() {
            let (a, b) = ((s * l) as f64, ((s + 1) * l) as f64);
            if let Some(y) = SegmentLabels::from_events(ev, a, b).binary(t) {
                scores.push(score);
                labels.push(y);
            }
        }
    }
    best_threshold_bac(&scores, &labels)
}

fn run_step(root: &Path, args: &[&str], log: &mut String) -> Result<(), String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_eegart"));
    cmd.arg("--out").arg(root).args(["--seed", E2E_SEED]);
    for t in E2E_TYPES {
        cmd.args(["--type", t.as_str()]);
    }
    cmd.args([
        "--set",
        "experiment.window_lengths=[1, 5]",
        "--set",
        "train.max_epochs=12",
        "--set",
        "train.patience=3",
        "--set",
        "train.max_train_per_class=1500",
        "--set",
        "train.max_val_per_class=400",
        "--set",
        "grid.depths=[3, 4]",
        "--set",
        "grid.trees=[100]",
        "--set",
        "grid.learning_rates=[0.1]",
    ]);
    cmd.args(args).env("RUST_LOG", "warn").env_remove("EEGART_ROOT");
    let t = Instant::now();
    let out = cmd.output().map_err(|e| format!("cannot run eegart: {e}"))?;
    log.push_str(&format!(
        "$ eegart {} ({:.0} s)\n{}{}",
        args.join(" "),
        t.elapsed().as_secs_f64(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    ));
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("`eegart {}` exited with {:?}", args.join(" "), out.status.code()))
    }
}

fn c8_end_to_end() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("exp");
    let start = Instant::now();
    let mut log = String::new();
    let result = (|| -> Result<String, String> {
        run_step(&root, &["synth"], &mut log)?;
        let data = corpus(&root.join("corpus"));
        let mut oracle = Vec::new();
        for t in E2E_TYPES {
            for l in [1, 5] {
                oracle.push((t, l, oracle_bac(&data, t, l)));
            }
        }
        drop(data);
        let synth_s = start.elapsed();
        let pipeline_start = Instant::now();
        for step in [
            &["preprocess"][..],
            &["train-channel"],
            &["extract-features"],
            &["train-segment", "--mode", "binary"],
            &["train-segment", "--mode", "combined"],
        ] {
            run_step(&root, step, &mut log)?;
        }
        let elapsed = synth_s + pipeline_start.elapsed();

        let reports = root.join("reports");
        let binary = read_csv(&reports.join("binary.csv"))?;
        let mut parts = Vec::new();
        let mut ok = true;
        for (t, l, bac) in &oracle {
            ok &= *bac >= 0.95;
            parts.push(format!("oracle {t} L={l} BAC {bac:.3}"));
        }
        for t in E2E_TYPES {
            for l in [1, 5] {
                let row = binary
                    .iter()
                    .find(|r| r.get("type").map(String::as_str) == Some(t.as_str()) && r.get("L") == Some(&l.to_string()))
                    .ok_or(format!("binary.csv lacks {t} L={l}"))?;
                let bac = field(row, "bac")?;
                ok &= bac >= 0.90;
                parts.push(format!("{t} L={l} BAC {bac:.3}"));
            }
        }
        let combined = read_csv(&reports.join("combined.csv"))?;
        for l in [1, 5] {
            let row = combined
                .iter()
                .find(|r| r.get("window_len_s") == Some(&l.to_string()))
                .ok_or(format!("combined.csv lacks L={l}"))?;
            let sen = field(row, "sen95")?;
            ok &= sen >= 0.80;
            parts.push(format!("combined L={l} SEN@95 {sen:.3}"));
        }
        let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
        ok &= elapsed <= E2E_BUDGET;
        parts.push(format!("runtime {:.1} min on {cores} core(s)", elapsed.as_secs_f64() / 60.0));
        let msg = parts.join(", ");
        if ok {
            Ok(msg)
        } else {
            Err(msg)
        }
    })();
    match result {
        Ok(m) => Verdict::Pass(m),
        Err(m) => {
            let keep = std::env::temp_dir().join("eegart-acceptance-e2e.log");
            let _ = std::fs::write(&keep, &log);
            Verdict::Fail(format!("{m} (step log in {})", keep.display()))
        }
    }
}
