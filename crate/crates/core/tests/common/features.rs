//! Deterministic feature-vector fixtures shared by the segment feature
//! tests and the acceptance run.

use std::f64::consts::PI;
use std::path::PathBuf;

use eegart::bmnet::ChannelScorer;
use eegart::dataio::{ArtifactType, STANDARD_MONTAGE};
use eegart::segfeat::{build_feature_vector, feature_names, map_channels_to_regions};
use eegart::Result;

/// Probability from window RMS: deterministic and cheap.
pub struct RmsScorer(pub usize);

impl ChannelScorer for RmsScorer {
    fn window_samples(&self) -> usize {
        self.0
    }
    fn score_windows(&self, windows: &[&[f64]]) -> Result<Vec<f64>> {
        Ok(windows
            .iter()
            .map(|w| {
                let rms = (w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64).sqrt();
                (rms / 60.0).min(1.0)
            })
            .collect())
    }
}

pub const MONTAGE_21: [&str; 21] = [
    "EEG FP1-REF", "EEG FP2-REF", "EEG F3-REF", "EEG F4-REF", "EEG C3-REF", "EEG C4-REF",
    "EEG P3-REF", "EEG P4-REF", "EEG O1-REF", "EEG O2-REF", "EEG F7-REF", "EEG F8-REF",
    "EEG T3-REF", "EEG T4-REF", "EEG T5-REF", "EEG T6-REF", "EEG A1-REF", "EEG A2-REF",
    "EEG FZ-REF", "EEG CZ-REF", "EEG PZ-REF",
];
pub const MONTAGE_8: [&str; 8] = ["FP1", "FP2", "F7", "T8", "C3", "CZ", "P3", "O1"];

pub fn segment(n_ch: usize, samples: usize) -> Vec<Vec<f64>> {
    (0..n_ch)
        .map(|c| {
            (0..samples)
                .map(|t| {
                    let x = t as f64 / 128.0;
                    (10.0 + 4.0 * c as f64) * (2.0 * PI * (2.0 + c as f64) * x + c as f64).sin()
                        + 5.0 * (2.0 * PI * 11.0 * x).cos()
                })
                .collect()
        })
        .collect()
}

pub fn features(montage: &[&str], l: usize) -> Vec<f64> {
    let seg = segment(montage.len(), 128 * l);
    let refs: Vec<&[f64]> = seg.iter().map(|c| c.as_slice()).collect();
    let map = map_channels_to_regions(montage).unwrap();
    build_feature_vector(&refs, &RmsScorer(128 * l), &map, ArtifactType::Eyem, "s0")
        .unwrap()
        .values
}

pub fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/features_golden.csv")
}

pub fn golden_rows() -> Vec<(String, usize, Vec<f64>)> {
    let m19: Vec<&str> = STANDARD_MONTAGE.to_vec();
    let mut out = Vec::new();
    for (name, montage) in [("m19", &m19[..]), ("m21", &MONTAGE_21[..]), ("m8", &MONTAGE_8[..])] {
        for l in [1, 3, 5] {
            out.push((name.to_string(), l, features(montage, l)));
        }
    }
    out
}

/// Compares freshly computed fixtures with the stored golden file at 1e-12
/// relative tolerance, returning the first mismatch.
pub fn check_golden() -> std::result::Result<(), String> {
    let rows = golden_rows();
    let text = std::fs::read_to_string(golden_path()).map_err(|e| format!("golden file: {e}"))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let names = feature_names();
    if header.len() != names.len() + 2 || header[2..].iter().zip(&names).any(|(a, b)| a != b) {
        return Err("golden header does not match feature_names()".into());
    }
    let stored: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    if stored.len() != rows.len() {
        return Err(format!("{} golden rows, expected {}", stored.len(), rows.len()));
    }
    for ((m, l, f), s) in rows.iter().zip(&stored) {
        if (s[0], s[1]) != (m.as_str(), l.to_string().as_str()) {
            return Err(format!("row order differs at {m} L={l}"));
        }
        for (k, (a, b)) in f.iter().zip(&s[2..]).enumerate() {
            let b: f64 = b.parse().map_err(|_| format!("bad golden value {b:?}"))?;
            if (a - b).abs() > 1e-12 * b.abs().max(1.0) {
                return Err(format!("{m} L={l} feature {k}: {a} vs {b}"));
            }
        }
    }
    let again = golden_rows();
    if rows.iter().zip(&again).any(|(a, b)| a.2.iter().zip(&b.2).any(|(x, y)| x.to_bits() != y.to_bits())) {
        return Err("two builds in one process differ".into());
    }
    Ok(())
}

/// Writes the golden file from the current implementation.
pub fn bless_golden() {
    let mut text = String::from("montage,window_len_s");
    for n in feature_names() {
        text.push(',');
        text.push_str(&n);
    }
    text.push('\n');
    for (m, l, f) in &golden_rows() {
        text.push_str(&format!("{m},{l}"));
        for v in f {
            text.push_str(&format!(",{v:.17e}"));
        }
        text.push('\n');
    }
    std::fs::create_dir_all(golden_path().parent().unwrap()).unwrap();
    std::fs::write(golden_path(), text).unwrap();
}
