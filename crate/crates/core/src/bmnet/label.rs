use serde::{Deserialize, Serialize};

use crate::dataio::{covered_time, ArtifactEvent, ArtifactType, EegRecording};
use crate::dsp::{extract_windows, WindowPlan};
use crate::error::{Error, Result};

/// Minimum fraction of a window an artifact must cover to label it positive.
pub const POSITIVE_COVERAGE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WindowLabel {
    Artifact,
    Background,
}

/// One single-channel training window.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    pub samples: Vec<f64>,
    pub label: WindowLabel,
    /// Artifact type the window set was built for.
    pub artifact_type: ArtifactType,
    pub channel: String,
    pub patient_id: String,
    pub start_s: f64,
}

impl LabeledWindow {
    pub fn is_artifact(&self) -> bool {
        self.label == WindowLabel::Artifact
    }
}

/// Labels every window of every channel of a 128 Hz recording for one
/// artifact type. Windows covered at least half by `artifact_type` on their
/// channel are positive, windows touching no event of any type on their
/// channel are background, the rest are dropped.
pub fn label_windows(
    recording: &EegRecording,
    events: &[ArtifactEvent],
    plan: &WindowPlan,
    artifact_type: ArtifactType,
) -> Result<Vec<LabeledWindow>> {
    if (recording.sample_rate_hz - plan.sample_rate_hz).abs() > 1e-9 {
        return Err(Error::PlanMismatch(format!(
            "recording at {} Hz, plan expects {} Hz",
            recording.sample_rate_hz, plan.sample_rate_hz
        )));
    }
    let duration = recording.duration_s();
    for e in events {
        if !(0.0 <= e.start_s && e.start_s < e.stop_s && e.stop_s <= duration + 1e-9) {
            return Err(Error::Domain(format!(
                "event {}..{} s outside recording of {duration} s",
                e.start_s, e.stop_s
            )));
        }
        if recording.channel_index(&e.channel).is_none() {
            return Err(Error::Domain(format!("event on unknown channel {}", e.channel)));
        }
    }
    let len_s = plan.window_len_s as f64;
    let mut out = Vec::new();
    for (ci, ch) in recording.channels.iter().enumerate() {
        let on_channel: Vec<&ArtifactEvent> = events
            .iter()
            .filter(|e| e.channel.eq_ignore_ascii_case(ch))
            .collect();
        for (wi, w) in extract_windows(&recording.samples[ci], plan).into_iter().enumerate() {
            let a = wi as f64 * len_s;
            let b = a + len_s;
            let typed = covered_time(
                on_channel.iter().copied().filter(|e| e.label == artifact_type),
                a,
                b,
            );
            let label = if typed >= POSITIVE_COVERAGE * len_s - 1e-9 {
                WindowLabel::Artifact
            } else if on_channel.iter().all(|e| e.overlap(a, b) <= 0.0) {
                WindowLabel::Background
            } else {
                continue;
            };
            out.push(LabeledWindow {
                samples: w.to_vec(),
                label,
                artifact_type,
                channel: ch.clone(),
                patient_id: recording.patient_id.clone(),
                start_s: a,
            });
        }
    }
    Ok(out)
}
