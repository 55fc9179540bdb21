//! Signal preprocessing: Butterworth notch/high-pass filtering, resampling to
//! 128 Hz, and window/local-segment extraction.

mod filter;
mod resample;
mod window;

pub use filter::{
    apply_filter_zero_phase, design_filter, Biquad, BiquadCascade, FilterKind, FilterSpec,
    MAX_ORDER,
};
pub use resample::{resample, resample_to_target, TARGET_RATE_HZ};
pub use window::{
    extract_local_segments, extract_windows, WindowPlan, LOCAL_HOP_SAMPLES, LOCAL_SEG_SAMPLES,
    WINDOW_LENGTHS_S,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Filter settings applied to every channel before resampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub notch_hz: f64,
    pub notch_half_width_hz: f64,
    pub notch_order: usize,
    pub highpass_hz: f64,
    pub highpass_order: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            notch_hz: 60.0,
            notch_half_width_hz: 1.0,
            notch_order: 4,
            highpass_hz: 1.0,
            highpass_order: 4,
        }
    }
}

/// Designed filters for one sampling rate.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    notch: Option<BiquadCascade>,
    highpass: BiquadCascade,
    sample_rate_hz: f64,
}

impl Preprocessor {
    /// Designs the filters for `sample_rate_hz`. The notch is skipped when
    /// it would sit at or above Nyquist.
    pub fn new(cfg: &PreprocessConfig, sample_rate_hz: f64) -> Result<Self> {
        let notch = if cfg.notch_hz + cfg.notch_half_width_hz < sample_rate_hz / 2.0 {
            Some(design_filter(&FilterSpec::notch(
                cfg.notch_order,
                cfg.notch_hz,
                cfg.notch_half_width_hz,
                sample_rate_hz,
            ))?)
        } else {
            log::warn!(
                "notch at {} Hz skipped for {} Hz recording",
                cfg.notch_hz,
                sample_rate_hz
            );
            None
        };
        let highpass = design_filter(&FilterSpec::highpass(
            cfg.highpass_order,
            cfg.highpass_hz,
            sample_rate_hz,
        ))?;
        Ok(Preprocessor {
            notch,
            highpass,
            sample_rate_hz,
        })
    }

    /// Notch, high-pass, then resample one channel to 128 Hz.
    pub fn run(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = match &self.notch {
            Some(n) => apply_filter_zero_phase(x, n)?,
            None => x.to_vec(),
        };
        y = apply_filter_zero_phase(&y, &self.highpass)?;
        resample_to_target(&y, self.sample_rate_hz)
    }
}
