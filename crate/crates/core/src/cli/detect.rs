use std::path::Path;

use super::channel::{load_channel_model, segment_features};
use super::config::{ExperimentConfig, FeatureSet};
use super::layout::{write_text, Layout};
use super::segment::{binary_name, combined_name};
use crate::dataio::{load_model, load_recording, ArtifactType, EegRecording};
use crate::dsp::{Preprocessor, TARGET_RATE_HZ};
use crate::error::{Error, Result};
use crate::gbdt::BoostedEnsemble;

/// Per-segment outcome of a detection run.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub start_s: f64,
    pub stop_s: f64,
    pub probability: f64,
    pub top_type: ArtifactType,
    pub keep: bool,
}

fn load_segment_model(layout: &Layout, name: &str, what: &str) -> Result<BoostedEnsemble> {
    let p = layout.segment_model(name);
    if !p.exists() {
        return Err(Error::Missing(format!(
            "{what} not found at {} (run `eegart train-segment`)",
            p.display()
        )));
    }
    BoostedEnsemble::from_bundle(&load_model(&p)?)
}

fn to_128(cfg: &ExperimentConfig, rec: EegRecording) -> Result<EegRecording> {
    if rec.sample_rate_hz == TARGET_RATE_HZ {
        // Already preprocessed.
        return Ok(rec);
    }
    let pre = Preprocessor::new(&cfg.preprocess, rec.sample_rate_hz)?;
    let samples = rec.samples.iter().map(|x| pre.run(x)).collect::<Result<Vec<_>>>()?;
    EegRecording::new(rec.patient_id, TARGET_RATE_HZ, rec.channels, samples)
}

/// Scores every `L`-second segment of a raw recording with the trained
/// channel, binary and combined models.
pub fn detect_recording(
    cfg: &ExperimentConfig,
    layout: &Layout,
    rec: EegRecording,
    l: usize,
    threshold: f64,
) -> Result<Vec<Detection>> {
    let types = cfg.types();
    let mut channel = Vec::new();
    let mut binary = Vec::new();
    for &t in &types {
        channel.push(load_channel_model(layout, t, l)?);
        binary.push(load_segment_model(layout, &binary_name(t, l), &format!("binary segment model for ({t}, L={l})"))?);
    }
    let combined = load_segment_model(layout, &combined_name(l), &format!("combined model for L={l}"))?;
    let rec = to_128(cfg, rec)?;
    let feats: Vec<Vec<Vec<f64>>> = channel
        .iter()
        .map(|m| segment_features(&rec, m))
        .collect::<Result<_>>()?;
    let n_seg = feats[0].len();
    let mut out = Vec::with_capacity(n_seg);
    for s in 0..n_seg {
        let mut probs = [0.0; 5];
        let mut top = (types[0], f64::NEG_INFINITY);
        for (k, &t) in types.iter().enumerate() {
            let x: Vec<f64> = match cfg.experiment.feature_set {
                FeatureSet::Specific => feats[k][s].clone(),
                FeatureSet::All => feats.iter().flat_map(|f| f[s].iter().copied()).collect(),
            };
            let p = binary[k].predict_score(&x)?;
            probs[t.index()] = p;
            if p > top.1 {
                top = (t, p);
            }
        }
        let probability = combined.predict_score(&probs)?;
        out.push(Detection {
            start_s: (s * l) as f64,
            stop_s: ((s + 1) * l) as f64,
            probability,
            top_type: top.0,
            keep: probability < threshold,
        });
    }
    Ok(out)
}

pub fn cmd_detect(
    cfg: &ExperimentConfig,
    layout: &Layout,
    recording: &Path,
    threshold: Option<f64>,
    window_len: Option<usize>,
) -> Result<()> {
    let threshold = threshold.unwrap_or(cfg.detect.threshold);
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("threshold {threshold} outside [0, 1]")));
    }
    let l = window_len.unwrap_or(cfg.detect.window_len);
    let rec = load_recording(recording)?;
    let stem = recording
        .file_stem()
        .map_or_else(|| rec.patient_id.clone(), |s| s.to_string_lossy().into_owned());
    let det = detect_recording(cfg, layout, rec, l, threshold)?;
    let mut events = String::from("start_s,stop_s,probability,top_type\n");
    let mut mask = String::from("segment,start_s,stop_s,probability,top_type,keep\n");
    for (i, d) in det.iter().enumerate() {
        if !d.keep {
            events.push_str(&format!("{},{},{:.6},{}\n", d.start_s, d.stop_s, d.probability, d.top_type));
        }
        mask.push_str(&format!(
            "{i},{},{},{:.6},{},{}\n",
            d.start_s,
            d.stop_s,
            d.probability,
            d.top_type,
            u8::from(d.keep)
        ));
    }
    let dir = layout.detect_dir();
    let ev_path = dir.join(format!("{stem}_L{l}_events.csv"));
    let mask_path = dir.join(format!("{stem}_L{l}_mask.csv"));
    write_text(&ev_path, &events)?;
    write_text(&mask_path, &mask)?;
    let kept = det.iter().filter(|d| d.keep).count();
    println!(
        "{stem}: kept {kept} of {} segments at threshold {threshold}; events in {}, mask in {}",
        det.len(),
        ev_path.display(),
        mask_path.display()
    );
    Ok(())
}
