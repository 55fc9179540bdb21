use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::label::LabeledWindow;
use super::loss::{class_index, UNIFORM_PRIOR};
use super::model::{build_model, ChannelModel, ChannelModelConfig, DirichletOutput};
use crate::error::{Error, Result};
use crate::numcore::{AdamConfig, BmTargets, Graph};

/// Optimization settings for the channel detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainRecipe {
    pub lr: f64,
    pub batch_size: usize,
    /// Explicit `[artifact, background]` weights; inverse class frequency
    /// (normalized to mean 1) when absent.
    pub class_weights: Option<[f64; 2]>,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_split: f64,
    pub seed: u64,
    /// Per-class cap on training windows, 0 for no cap.
    pub max_train_per_class: usize,
    /// Per-class cap on validation windows, 0 for no cap.
    pub max_val_per_class: usize,
    /// Training windows re-scored without dropout after every epoch.
    pub probe_size: usize,
}

impl Default for TrainRecipe {
    fn default() -> Self {
        TrainRecipe {
            lr: 1e-4,
            batch_size: 64,
            class_weights: None,
            max_epochs: 30,
            patience: 5,
            validation_split: 0.2,
            seed: 0,
            max_train_per_class: 0,
            max_val_per_class: 0,
            probe_size: 256,
        }
    }
}

impl TrainRecipe {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate {}", self.lr)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size and max_epochs must be positive".into()));
        }
        if !(self.validation_split > 0.0 && self.validation_split < 1.0) {
            return Err(Error::Config(format!(
                "validation split {} outside (0, 1)",
                self.validation_split
            )));
        }
        if let Some(w) = self.class_weights {
            if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::Config(format!("class weights {w:?} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean mini-batch loss with dropout active.
    pub train_loss: f64,
    /// Loss on the fixed probe subset, dropout off, after the epoch.
    pub probe_loss: f64,
    pub val_loss: f64,
    pub val_bac: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub initial_probe_loss: f64,
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub class_weights: [f64; 2],
    pub n_train: [usize; 2],
    pub n_val: [usize; 2],
    pub patient_disjoint: bool,
}

impl TrainLog {
    pub fn best(&self) -> Option<&EpochLog> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,probe_loss,val_loss,val_bac\n");
        for e in &self.epochs {
            s.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6}\n",
                e.epoch, e.train_loss, e.probe_loss, e.val_loss, e.val_bac
            ));
        }
        s
    }
}

fn class_counts(idx: &[usize], windows: &[LabeledWindow]) -> [usize; 2] {
    let mut c = [0; 2];
    for &i in idx {
        c[class_index(&windows[i])] += 1;
    }
    c
}

/// 80/20 split by patient when that leaves both classes on both sides,
/// otherwise a stratified split by window.
fn split(windows: &[LabeledWindow], frac: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>, bool) {
    let mut by_patient: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, w) in windows.iter().enumerate() {
        by_patient.entry(w.patient_id.as_str()).or_default().push(i);
    }
    if by_patient.len() >= 2 {
        let mut patients: Vec<&str> = by_patient.keys().copied().collect();
        patients.shuffle(rng);
        let target = (frac * windows.len() as f64).round() as usize;
        let mut val = Vec::new();
        let mut train = Vec::new();
        for (k, p) in patients.iter().enumerate() {
            let rows = &by_patient[p];
            if val.len() < target && k + 1 < patients.len() {
                val.extend_from_slice(rows);
            } else {
                train.extend_from_slice(rows);
            }
        }
        let (ct, cv) = (class_counts(&train, windows), class_counts(&val, windows));
        if ct.iter().all(|&c| c > 0) && cv.iter().all(|&c| c > 0) {
            train.sort_unstable();
            val.sort_unstable();
            return (train, val, true);
        }
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in 0..2 {
        let mut rows: Vec<usize> = (0..windows.len())
            .filter(|&i| class_index(&windows[i]) == class)
            .collect();
        rows.shuffle(rng);
        let nv = ((frac * rows.len() as f64).round() as usize).clamp(1, rows.len() - 1);
        val.extend_from_slice(&rows[..nv]);
        train.extend_from_slice(&rows[nv..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val, false)
}

fn cap_per_class(idx: Vec<usize>, windows: &[LabeledWindow], cap: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if cap == 0 {
        return idx;
    }
    let mut kept = Vec::new();
    for class in 0..2 {
        let mut rows: Vec<usize> = idx.iter().copied().filter(|&i| class_index(&windows[i]) == class).collect();
        rows.shuffle(rng);
        rows.truncate(cap);
        kept.extend(rows);
    }
    kept.sort_unstable();
    kept
}

/// Inverse class frequency, scaled so the two weights average to one.
pub fn balanced_class_weights(counts: [usize; 2]) -> Result<[f64; 2]> {
    if counts.contains(&0) {
        return Err(Error::SingleClass(format!("class counts {counts:?}")));
    }
    let inv = counts.map(|c| 1.0 / c as f64);
    let mean = (inv[0] + inv[1]) / 2.0;
    Ok(inv.map(|v| v / mean))
}

/// Inference pass returning (weighted mean loss, balanced accuracy at 0.5).
fn evaluate(
    model: &ChannelModel,
    windows: &[LabeledWindow],
    idx: &[usize],
    weights: [f64; 2],
) -> Result<(f64, f64)> {
    let refs: Vec<&[f64]> = idx.iter().map(|&i| windows[i].samples.as_slice()).collect();
    let logits = model.logits(&refs)?;
    let mut loss = 0.0;
    let mut hit = [0usize; 2];
    let mut tot = [0usize; 2];
    for (&i, z) in idx.iter().zip(&logits) {
        let y = class_index(&windows[i]);
        let out = DirichletOutput::from_logits(*z);
        let (elbo, _) = crate::numcore::elbo_and_grad(y, out.alpha, UNIFORM_PRIOR);
        loss -= weights[y] * elbo;
        let pred = if out.p_artifact() >= 0.5 { 0 } else { 1 };
        tot[y] += 1;
        if pred == y {
            hit[y] += 1;
        }
    }
    let rate = |c: usize| if tot[c] == 0 { 0.0 } else { hit[c] as f64 / tot[c] as f64 };
    Ok((loss / idx.len().max(1) as f64, (rate(0) + rate(1)) / 2.0))
}

/// One optimizer step on a mini-batch; returns the batch loss.
pub fn train_step(
    model: &mut ChannelModel,
    batch: &[&LabeledWindow],
    class_weights: [f64; 2],
    adam: &AdamConfig,
    rng: ChaCha8Rng,
) -> Result<(f64, ChaCha8Rng)> {
    let refs: Vec<&[f64]> = batch.iter().map(|w| w.samples.as_slice()).collect();
    let labels: Vec<usize> = batch.iter().map(|w| class_index(w)).collect();
    let weights: Vec<f64> = labels.iter().map(|&c| class_weights[c]).collect();
    let mut g = Graph::training(rng);
    let z = model.forward_graph(&mut g, &refs, true)?;
    let loss = g.bm_loss(
        z,
        &BmTargets {
            labels: &labels,
            weights: &weights,
            prior: UNIFORM_PRIOR,
        },
    )?;
    let value = g.value(loss).data()[0];
    let grads = g.backward(loss)?.param_grads(model.params());
    let rng = g.into_rng().expect("training graph keeps its generator");
    model.params_mut().adam_step(&grads, adam)?;
    Ok((value, rng))
}

/// Trains a channel detector with the belief-matching loss, early-stopping
/// on validation balanced accuracy, and returns the best snapshot.
pub fn train_channel_detector(
    windows: &[LabeledWindow],
    cfg: &ChannelModelConfig,
    recipe: &TrainRecipe,
) -> Result<(ChannelModel, TrainLog)> {
    recipe.validate()?;
    cfg.validate()?;
    let all: Vec<usize> = (0..windows.len()).collect();
    let counts = class_counts(&all, windows);
    if counts.contains(&0) || counts.iter().sum::<usize>() < 4 {
        return Err(Error::SingleClass(format!(
            "need both artifact and background windows, got {counts:?}"
        )));
    }
    let expect = cfg.plan().window_samples();
    if let Some(w) = windows.iter().find(|w| w.samples.len() != expect) {
        return Err(Error::PlanMismatch(format!(
            "window of {} samples, config expects {expect}",
            w.samples.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed);
    let (train_idx, val_idx, patient_disjoint) = split(windows, recipe.validation_split, &mut rng);
    let train_idx = cap_per_class(train_idx, windows, recipe.max_train_per_class, &mut rng);
    let val_idx = cap_per_class(val_idx, windows, recipe.max_val_per_class, &mut rng);
    let n_train = class_counts(&train_idx, windows);
    let n_val = class_counts(&val_idx, windows);
    let weights = match recipe.class_weights {
        Some(w) => w,
        None => balanced_class_weights(n_train)?,
    };
    log::info!(
        "training on {:?} windows (artifact, background), validating on {:?}, weights {:?}",
        n_train,
        n_val,
        weights
    );

    let mut model = build_model(cfg, recipe.seed)?;
    let adam = AdamConfig {
        lr: recipe.lr,
        ..AdamConfig::default()
    };
    let mut probe = train_idx.clone();
    probe.shuffle(&mut rng);
    probe.truncate(recipe.probe_size.max(1));
    probe.sort_unstable();
    let (initial_probe_loss, _) = evaluate(&model, windows, &probe, weights)?;

    let mut dropout_rng = ChaCha8Rng::seed_from_u64(recipe.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order = train_idx.clone();
    let mut epochs = Vec::new();
    let mut best: Option<(f64, f64, usize, ChannelModel)> = None;
    let mut since_best = 0;
    for epoch in 1..=recipe.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut n = 0usize;
        for chunk in order.chunks(recipe.batch_size) {
            let batch: Vec<&LabeledWindow> = chunk.iter().map(|&i| &windows[i]).collect();
            let (l, r) = train_step(&mut model, &batch, weights, &adam, dropout_rng)?;
            dropout_rng = r;
            total += l * batch.len() as f64;
            n += batch.len();
        }
        let (probe_loss, _) = evaluate(&model, windows, &probe, weights)?;
        let (val_loss, val_bac) = evaluate(&model, windows, &val_idx, weights)?;
        let row = EpochLog {
            epoch,
            train_loss: total / n as f64,
            probe_loss,
            val_loss,
            val_bac,
        };
        log::info!(
            "epoch {epoch}: train loss {:.4}, probe loss {:.4}, val loss {:.4}, val BAC {:.4}",
            row.train_loss,
            row.probe_loss,
            row.val_loss,
            row.val_bac
        );
        epochs.push(row);
        let improved = match &best {
            None => true,
            Some((bac, loss, _, _)) => val_bac > *bac || (val_bac == *bac && val_loss < *loss),
        };
        if improved {
            best = Some((val_bac, val_loss, epoch, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if recipe.patience > 0 && since_best >= recipe.patience {
                break;
            }
        }
    }
    let (_, _, best_epoch, best_model) = best.expect("at least one epoch ran");
    Ok((
        best_model,
        TrainLog {
            initial_probe_loss,
            epochs,
            best_epoch,
            class_weights: weights,
            n_train,
            n_val,
            patient_disjoint,
        },
    ))
}
