//! Rational-ratio polyphase resampling with a Kaiser-windowed sinc kernel.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Target rate used throughout the detector.
pub const TARGET_RATE_HZ: f64 = 128.0;

const KAISER_BETA: f64 = 8.0;
const CUTOFF_FRACTION: f64 = 0.45;
/// Zero crossings of the sinc on each side of the kernel centre.
const ZERO_CROSSINGS: f64 = 24.0;

/// Zeroth-order modified Bessel function of the first kind (power series).
pub(crate) fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > sum * 1e-17 {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Expresses `to / from` as a reduced fraction `up / down`. Rates are
/// rounded to millihertz.
fn rational_ratio(from_hz: f64, to_hz: f64) -> (u64, u64) {
    let from = (from_hz * 1000.0).round() as u64;
    let to = (to_hz * 1000.0).round() as u64;
    let g = gcd(from, to);
    (to / g, from / g)
}

/// Resamples `x` from `from_hz` to `to_hz` (downsampling or identity only).
///
/// The output has `round(len * to / from)` samples. Output sample `n` sits at
/// input position `n * down / up`; its fractional phase selects one of `up`
/// precomputed kernels. Kernels are normalized to unit DC gain and the
/// signal is extended by even reflection at both ends.
pub fn resample(x: &[f64], from_hz: f64, to_hz: f64) -> Result<Vec<f64>> {
    if !(from_hz.is_finite() && to_hz.is_finite() && to_hz > 0.0) {
        return Err(Error::InvalidSpec("sample rates must be positive".into()));
    }
    if from_hz < to_hz {
        return Err(Error::Unsupported(format!(
            "upsampling from {from_hz} Hz to {to_hz} Hz"
        )));
    }
    let out_len = (x.len() as f64 * to_hz / from_hz).round() as usize;
    if (from_hz - to_hz).abs() < 1e-9 || x.is_empty() {
        return Ok(x.to_vec());
    }
    let (up, down) = rational_ratio(from_hz, to_hz);

    // Cutoff relative to the input rate, in cycles per input sample.
    let fc = CUTOFF_FRACTION * to_hz / from_hz;
    let half_width = (ZERO_CROSSINGS / (2.0 * fc)).ceil() as i64;
    let taps = (2 * half_width + 1) as usize;

    let phases: Vec<Vec<f64>> = (0..up)
        .map(|p| {
            let frac = p as f64 / up as f64;
            let mut h: Vec<f64> = (0..taps)
                .map(|j| {
                    // Tap j covers input index floor(t) - half_width + j.
                    let tau = (j as i64 - half_width) as f64 - frac;
                    let r = tau / (half_width as f64 + 1.0);
                    let w = if r.abs() >= 1.0 {
                        0.0
                    } else {
                        bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / bessel_i0(KAISER_BETA)
                    };
                    2.0 * fc * sinc(2.0 * fc * tau) * w
                })
                .collect();
            let s: f64 = h.iter().sum();
            h.iter_mut().for_each(|v| *v /= s);
            h
        })
        .collect();

    let n = x.len() as i64;
    let reflect = |i: i64| -> f64 {
        let period = 2 * (n - 1).max(1);
        let mut k = i.rem_euclid(period);
        if k >= n {
            k = period - k;
        }
        x[k.clamp(0, n - 1) as usize]
    };

    let mut out = Vec::with_capacity(out_len);
    for m in 0..out_len as u64 {
        let pos = m * down;
        let base = (pos / up) as i64;
        let phase = (pos % up) as usize;
        let h = &phases[phase];
        let start = base - half_width;
        let acc = if start >= 0 && start + taps as i64 <= n {
            let seg = &x[start as usize..start as usize + taps];
            // Kernel is built for tau = input index - t, so index order matches.
            seg.iter().zip(h).map(|(a, b)| a * b).sum()
        } else {
            h.iter()
                .enumerate()
                .map(|(j, w)| w * reflect(start + j as i64))
                .sum()
        };
        out.push(acc);
    }
    Ok(out)
}

/// Resamples to the 128 Hz working rate.
pub fn resample_to_target(x: &[f64], from_hz: f64) -> Result<Vec<f64>> {
    resample(x, from_hz, TARGET_RATE_HZ)
}
