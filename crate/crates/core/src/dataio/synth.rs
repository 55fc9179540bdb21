use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::annotations::{sort_events, write_annotations, ArtifactEvent, ArtifactType};
use super::recording::{save_recording_binary, EegRecording, SampleWidth};
use crate::error::{Error, Result};

/// Classic 19-channel 10-20 montage with legacy temporal names.
pub const STANDARD_MONTAGE: [&str; 19] = [
    "FP1", "FP2", "F7", "F3", "FZ", "F4", "F8", "T3", "C3", "CZ", "C4", "T4", "T5", "P3", "PZ",
    "P4", "T6", "O1", "O2",
];

/// Annotation rows to generate per recording, by artifact type. Injections
/// spanning several channels contribute one row per channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EventCounts {
    pub chew: usize,
    pub elec: usize,
    pub eyem: usize,
    pub musc: usize,
    pub shiv: usize,
}

impl Default for EventCounts {
    fn default() -> Self {
        EventCounts {
            chew: 12,
            elec: 4,
            eyem: 40,
            musc: 40,
            shiv: 24,
        }
    }
}

impl EventCounts {
    pub fn none() -> Self {
        EventCounts {
            chew: 0,
            elec: 0,
            eyem: 0,
            musc: 0,
            shiv: 0,
        }
    }

    pub fn get(&self, t: ArtifactType) -> usize {
        match t {
            ArtifactType::Chew => self.chew,
            ArtifactType::Elec => self.elec,
            ArtifactType::Eyem => self.eyem,
            ArtifactType::Musc => self.musc,
            ArtifactType::Shiv => self.shiv,
        }
    }

    pub fn total(&self) -> usize {
        ArtifactType::ALL.iter().map(|&t| self.get(t)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_patients: usize,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub events: EventCounts,
    pub seed: u64,
    pub channels: Vec<String>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_patients: 20,
            duration_s: 600.0,
            sample_rate_hz: 256.0,
            events: EventCounts::default(),
            seed: 0,
            channels: STANDARD_MONTAGE.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_patients == 0 {
            return Err(Error::Config("n_patients must be positive".into()));
        }
        if !(self.duration_s >= 10.0 && self.duration_s.is_finite()) {
            return Err(Error::Config("duration_s must be at least 10 s".into()));
        }
        if !(self.sample_rate_hz >= 128.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::Config("sample_rate_hz must be at least 128".into()));
        }
        if self.channels.is_empty() {
            return Err(Error::Config("at least one channel is required".into()));
        }
        Ok(())
    }

    pub fn patient_id(&self, index: usize) -> String {
        format!("synth{index:03}")
    }
}

/// Per-patient entry of a generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub patient_id: String,
    pub recording: PathBuf,
    pub annotations: PathBuf,
    pub duration_s: f64,
    /// Annotation rows per type, in [`ArtifactType::ALL`] order.
    pub event_counts: [usize; 5],
    /// Summed annotated duration per type (seconds, over channels).
    pub event_seconds: [f64; 5],
}

/// Pink noise via a bank of leaky integrators (Kellet's economy filter).
fn pink_noise(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let w: f64 = StandardNormal.sample(rng);
        b0 = 0.99765 * b0 + w * 0.0990460;
        b1 = 0.96300 * b1 + w * 0.2965164;
        b2 = 0.57000 * b2 + w * 1.0526913;
        out.push(b0 + b1 + b2 + w * 0.1848);
    }
    let mean = out.iter().sum::<f64>() / n as f64;
    let rms = (out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    out.iter().map(|v| (v - mean) / rms.max(1e-12)).collect()
}

fn is_posterior(ch: &str) -> bool {
    matches!(ch, "O1" | "O2" | "P3" | "P4" | "PZ" | "T5" | "T6")
}

fn background(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let fs = spec.sample_rate_hz;
    let n = (spec.duration_s * fs).round() as usize;
    let alpha_f = rng.gen_range(9.0..11.0);
    let line_phase = rng.gen_range(0.0..2.0 * PI);
    spec.channels
        .iter()
        .map(|ch| {
            let mut x = pink_noise(n, rng);
            let amp = rng.gen_range(12.0..18.0);
            let alpha_amp = if is_posterior(&ch.to_ascii_uppercase()) {
                rng.gen_range(8.0..14.0)
            } else {
                rng.gen_range(1.0..3.0)
            };
            let alpha_phase = rng.gen_range(0.0..2.0 * PI);
            let drift_f = rng.gen_range(0.05..0.2);
            let drift_phase = rng.gen_range(0.0..2.0 * PI);
            let mod_f = rng.gen_range(0.05..0.15);
            for (i, v) in x.iter_mut().enumerate() {
                let t = i as f64 / fs;
                let env = 0.7 + 0.3 * (2.0 * PI * mod_f * t).sin();
                *v = amp * *v
                    + alpha_amp * env * (2.0 * PI * alpha_f * t + alpha_phase).sin()
                    + 4.0 * (2.0 * PI * 60.0 * t + line_phase).sin()
                    + 15.0 * (2.0 * PI * drift_f * t + drift_phase).sin();
            }
            x
        })
        .collect()
}

/// Raised-cosine edge taper over `ramp` samples at both ends.
fn taper(i: usize, n: usize, ramp: usize) -> f64 {
    let ramp = ramp.min(n / 2).max(1);
    let k = i.min(n - 1 - i);
    if k >= ramp {
        1.0
    } else {
        0.5 - 0.5 * (PI * k as f64 / ramp as f64).cos()
    }
}

/// Sum of random sinusoids in `[lo, hi]` Hz with unit RMS.
fn band_noise(n: usize, fs: f64, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let comps: Vec<(f64, f64)> = (0..24)
        .map(|_| (rng.gen_range(lo..hi), rng.gen_range(0.0..2.0 * PI)))
        .collect();
    let scale = (2.0 / comps.len() as f64).sqrt();
    (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            scale * comps.iter().map(|(f, p)| (2.0 * PI * f * t + p).sin()).sum::<f64>()
        })
        .collect()
}

struct Injection {
    duration: (f64, f64),
    channels: Vec<String>,
}

fn pick(rng: &mut ChaCha8Rng, pool: &[String], lo: usize, hi: usize) -> Vec<String> {
    let k = rng.gen_range(lo..=hi).min(pool.len());
    let mut v: Vec<String> = pool.choose_multiple(rng, k).cloned().collect();
    v.sort_by_key(|c| pool.iter().position(|p| p == c));
    v
}

fn plan_injection(t: ArtifactType, chans: &[String], rng: &mut ChaCha8Rng) -> Injection {
    let present = |names: &[&str]| -> Vec<String> {
        chans
            .iter()
            .filter(|c| names.iter().any(|n| c.eq_ignore_ascii_case(n)))
            .cloned()
            .collect()
    };
    let or_all = |v: Vec<String>| if v.is_empty() { chans.to_vec() } else { v };
    match t {
        ArtifactType::Eyem => Injection {
            duration: (1.5, 6.0),
            channels: or_all(present(&["FP1", "FP2", "F7", "F8"])),
        },
        ArtifactType::Musc => Injection {
            duration: (2.0, 8.0),
            channels: pick(rng, chans, 2, 6),
        },
        ArtifactType::Chew => {
            let temporal = or_all(present(&["F7", "F8", "T3", "T4", "T5", "T6"]));
            Injection {
                duration: (3.0, 8.0),
                channels: pick(rng, &temporal, 4, 6),
            }
        }
        ArtifactType::Elec => Injection {
            duration: (0.8, 2.0),
            channels: pick(rng, chans, 1, 1),
        },
        ArtifactType::Shiv => Injection {
            duration: (4.0, 10.0),
            channels: pick(rng, chans, 8, chans.len()),
        },
    }
}

fn inject(
    t: ArtifactType,
    signal: &mut [Vec<f64>],
    chans: &[String],
    on: &[String],
    start: usize,
    len: usize,
    fs: f64,
    scale: f64,
    rng: &mut ChaCha8Rng,
) {
    let idx = |name: &str| chans.iter().position(|c| c == name).expect("channel present");
    match t {
        ArtifactType::Eyem => {
            // Train of blink/saccade bumps shared by all affected channels.
            let mut wave = vec![0.0; len];
            let mut pos = 0.0;
            while pos < len as f64 {
                let width = rng.gen_range(0.3..1.0) * fs;
                let amp = rng.gen_range(80.0..150.0) * scale;
                let c = pos + width / 2.0;
                let lo = (c - width / 2.0).max(0.0) as usize;
                let hi = ((c + width / 2.0) as usize).min(len);
                for (i, w) in wave.iter_mut().enumerate().take(hi).skip(lo) {
                    let u = (i as f64 - c) / width;
                    *w += amp * (0.5 + 0.5 * (2.0 * PI * u).cos());
                }
                pos += width * rng.gen_range(0.8..1.1);
            }
            for ch in on {
                let gain = if ch.eq_ignore_ascii_case("F7") || ch.eq_ignore_ascii_case("F8") {
                    0.6
                } else {
                    rng.gen_range(0.9..1.1)
                };
                let x = &mut signal[idx(ch)][start..start + len];
                for (v, w) in x.iter_mut().zip(&wave) {
                    *v += gain * w;
                }
            }
        }
        ArtifactType::Musc => {
            for ch in on {
                let amp = rng.gen_range(30.0..60.0) * scale;
                let noise = band_noise(len, fs, 20.0, 60.0, rng);
                let x = &mut signal[idx(ch)][start..start + len];
                let ramp = (0.1 * fs) as usize;
                for (i, (v, w)) in x.iter_mut().zip(&noise).enumerate() {
                    *v += amp * taper(i, len, ramp) * w;
                }
            }
        }
        ArtifactType::Chew => {
            let rate = rng.gen_range(1.0..3.0);
            for ch in on {
                let amp = rng.gen_range(50.0..90.0) * scale;
                let noise = band_noise(len, fs, 20.0, 50.0, rng);
                let x = &mut signal[idx(ch)][start..start + len];
                for (i, (v, w)) in x.iter_mut().zip(&noise).enumerate() {
                    let phase = (rate * i as f64 / fs).fract();
                    let gate = if phase < 0.4 { (PI * phase / 0.4).sin() } else { 0.0 };
                    *v += amp * gate * (w + 0.8);
                }
            }
        }
        ArtifactType::Elec => {
            let tau = rng.gen_range(0.2..0.5) * fs;
            let amp = rng.gen_range(150.0..300.0) * scale * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let onset = (0.1 * fs) as usize;
            for ch in on {
                let x = &mut signal[idx(ch)][start..start + len];
                for (i, v) in x.iter_mut().enumerate().skip(onset) {
                    *v += amp * (-((i - onset) as f64) / tau).exp();
                }
            }
        }
        ArtifactType::Shiv => {
            let f0 = rng.gen_range(8.5..11.5);
            for ch in on {
                let amp = rng.gen_range(20.0..35.0) * scale;
                let phase = rng.gen_range(0.0..2.0 * PI);
                let x = &mut signal[idx(ch)][start..start + len];
                let ramp = (0.3 * fs) as usize;
                for (i, v) in x.iter_mut().enumerate() {
                    let t = i as f64 / fs;
                    let f = f0 + 0.3 * (2.0 * PI * 0.2 * t).sin();
                    *v += amp * taper(i, len, ramp) * (2.0 * PI * f * t + phase).sin();
                }
            }
        }
    }
}

/// Generates one synthetic patient recording with its annotations.
pub fn synthesize_recording(spec: &SynthSpec, patient: usize) -> Result<(EegRecording, Vec<ArtifactEvent>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(patient as u64 + 1);
    let fs = spec.sample_rate_hz;
    let chans = &spec.channels;
    let mut signal = background(spec, &mut rng);
    let n = signal[0].len();
    let scale = rng.gen_range(0.85..1.15);
    let mut busy: Vec<(f64, f64)> = Vec::new();
    let mut events = Vec::new();
    let gap = 1.0;
    for t in ArtifactType::ALL {
        let mut budget = spec.events.get(t);
        while budget > 0 {
            let mut inj = plan_injection(t, chans, &mut rng);
            inj.channels.truncate(budget);
            let d = rng.gen_range(inj.duration.0..inj.duration.1);
            let mut placed = None;
            for _ in 0..500 {
                let s = rng.gen_range(0.5..(spec.duration_s - d - 0.5).max(0.6));
                let e = s + d;
                if e <= spec.duration_s && busy.iter().all(|&(a, b)| e + gap <= a || s >= b + gap) {
                    placed = Some((s, e));
                    break;
                }
            }
            let Some((s, e)) = placed else {
                log::warn!(
                    "no room left for {t} events in {}; {budget} rows not generated",
                    spec.patient_id(patient)
                );
                break;
            };
            // Snap to sample boundaries so annotations match injected spans.
            let i0 = (s * fs).round() as usize;
            let i1 = ((e * fs).round() as usize).min(n);
            busy.push((s, e));
            inject(t, &mut signal, chans, &inj.channels, i0, i1 - i0, fs, scale, &mut rng);
            for ch in &inj.channels {
                events.push(ArtifactEvent {
                    channel: ch.clone(),
                    start_s: i0 as f64 / fs,
                    stop_s: i1 as f64 / fs,
                    label: t,
                });
            }
            budget -= inj.channels.len();
        }
    }
    sort_events(&mut events);
    let rec = EegRecording::new(spec.patient_id(patient), fs, chans.clone(), signal)?;
    Ok((rec, events))
}

/// Writes `<id>.eegr` (packed f32) and `<id>.csv` annotations for every
/// patient into `dir` and returns the corpus index.
pub fn generate_synthetic_corpus(spec: &SynthSpec, dir: &Path) -> Result<Vec<CorpusEntry>> {
    spec.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(spec.n_patients);
    for p in 0..spec.n_patients {
        let (rec, events) = synthesize_recording(spec, p)?;
        let rpath = dir.join(format!("{}.eegr", rec.patient_id));
        let apath = dir.join(format!("{}.csv", rec.patient_id));
        save_recording_binary(&rec, &rpath, SampleWidth::F32)?;
        write_annotations(&apath, &events)?;
        let mut counts = [0usize; 5];
        let mut secs = [0.0; 5];
        for e in &events {
            counts[e.label.index()] += 1;
            secs[e.label.index()] += e.duration_s();
        }
        entries.push(CorpusEntry {
            patient_id: rec.patient_id.clone(),
            recording: rpath,
            annotations: apath,
            duration_s: rec.duration_s(),
            event_counts: counts,
            event_seconds: secs,
        });
    }
    Ok(entries)
}
