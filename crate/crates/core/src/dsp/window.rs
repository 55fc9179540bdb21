use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples per local segment (0.5 s at 128 Hz).
pub const LOCAL_SEG_SAMPLES: usize = 64;
/// Hop between local segments: 0.5 s with 25 % overlap, i.e. 48 samples.
pub const LOCAL_HOP_SAMPLES: usize = 48;

/// Window lengths the channel detector is trained for.
pub const WINDOW_LENGTHS_S: [usize; 3] = [1, 3, 5];

/// Window layout for one detector: an `L`-second window split into 0.5 s
/// local segments with 25 % overlap, at 128 Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowPlan {
    pub window_len_s: usize,
    pub local_seg_len_s: f64,
    pub local_overlap: f64,
    pub sample_rate_hz: f64,
}

impl WindowPlan {
    pub fn new(window_len_s: usize) -> Result<Self> {
        if !WINDOW_LENGTHS_S.contains(&window_len_s) {
            return Err(Error::PlanMismatch(format!(
                "window length {window_len_s} s is not one of 1, 3, 5"
            )));
        }
        Ok(WindowPlan {
            window_len_s,
            local_seg_len_s: 0.5,
            local_overlap: 0.25,
            sample_rate_hz: 128.0,
        })
    }

    pub fn window_samples(&self) -> usize {
        (self.window_len_s as f64 * self.sample_rate_hz).round() as usize
    }

    pub fn segment_samples(&self) -> usize {
        (self.local_seg_len_s * self.sample_rate_hz).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.local_seg_len_s * (1.0 - self.local_overlap) * self.sample_rate_hz).round() as usize
    }

    /// Number of local segments (tokens) per window.
    pub fn n_segments(&self) -> usize {
        token_count(self.window_samples(), self.segment_samples(), self.hop_samples())
    }
}

pub(crate) fn token_count(window: usize, seg: usize, hop: usize) -> usize {
    if window < seg {
        0
    } else {
        (window - seg) / hop + 1
    }
}

/// Splits a 128 Hz signal into consecutive non-overlapping windows; a
/// trailing remainder shorter than one window is dropped.
pub fn extract_windows<'a>(x: &'a [f64], plan: &WindowPlan) -> Vec<&'a [f64]> {
    x.chunks_exact(plan.window_samples()).collect()
}

/// Splits one window into its overlapping local segments.
pub fn extract_local_segments<'a>(w: &'a [f64], plan: &WindowPlan) -> Result<Vec<&'a [f64]>> {
    if w.len() != plan.window_samples() {
        return Err(Error::PlanMismatch(format!(
            "window has {} samples, plan expects {}",
            w.len(),
            plan.window_samples()
        )));
    }
    let seg = plan.segment_samples();
    let hop = plan.hop_samples();
    Ok((0..plan.n_segments())
        .map(|i| &w[i * hop..i * hop + seg])
        .collect())
}
