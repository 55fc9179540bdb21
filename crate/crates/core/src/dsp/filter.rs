//! Butterworth IIR design (bilinear transform with pre-warping) realized as a
//! cascade of second-order sections, plus forward-backward application.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest analog prototype order accepted by [`design_filter`].
pub const MAX_ORDER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Highpass,
    Bandstop,
}

/// Parameters of a Butterworth filter. `corner_high_hz` is only read for
/// band-stop filters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub order: usize,
    pub corner_low_hz: f64,
    pub corner_high_hz: f64,
    pub sample_rate_hz: f64,
}

impl FilterSpec {
    pub fn highpass(order: usize, corner_hz: f64, sample_rate_hz: f64) -> Self {
        FilterSpec {
            kind: FilterKind::Highpass,
            order,
            corner_low_hz: corner_hz,
            corner_high_hz: 0.0,
            sample_rate_hz,
        }
    }

    pub fn bandstop(order: usize, low_hz: f64, high_hz: f64, sample_rate_hz: f64) -> Self {
        FilterSpec {
            kind: FilterKind::Bandstop,
            order,
            corner_low_hz: low_hz,
            corner_high_hz: high_hz,
            sample_rate_hz,
        }
    }

    /// Band-stop centred on `center_hz` with the given half-width.
    pub fn notch(order: usize, center_hz: f64, half_width_hz: f64, sample_rate_hz: f64) -> Self {
        Self::bandstop(
            order,
            center_hz - half_width_hz,
            center_hz + half_width_hz,
            sample_rate_hz,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::InvalidSpec("order must be at least 1".into()));
        }
        if self.order > MAX_ORDER {
            return Err(Error::Unsupported(format!(
                "filter order {} exceeds {MAX_ORDER}",
                self.order
            )));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::InvalidSpec("sample rate must be positive".into()));
        }
        let nyquist = self.sample_rate_hz / 2.0;
        let check = |f: f64, what: &str| {
            if !(f.is_finite() && f > 0.0 && f < nyquist) {
                Err(Error::InvalidSpec(format!(
                    "{what} {f} Hz must lie in (0, {nyquist}) Hz"
                )))
            } else {
                Ok(())
            }
        };
        check(self.corner_low_hz, "corner frequency")?;
        if self.kind == FilterKind::Bandstop {
            check(self.corner_high_hz, "upper corner frequency")?;
            if self.corner_low_hz >= self.corner_high_hz {
                return Err(Error::InvalidSpec(
                    "band-stop lower corner must be below the upper corner".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One second-order section in direct form II transposed. The leading
/// denominator coefficient is normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        let num = self.b0 + z_inv * self.b1 + z2 * self.b2;
        let den = 1.0 + z_inv * self.a1 + z2 * self.a2;
        num / den
    }

    /// Magnitudes of the two poles.
    pub fn pole_radii(&self) -> [f64; 2] {
        let disc = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        let p1 = (-self.a1 + disc) / 2.0;
        let p2 = (-self.a1 - disc) / 2.0;
        [p1.norm(), p2.norm()]
    }

    pub fn is_stable(&self) -> bool {
        self.pole_radii().iter().all(|r| *r < 1.0)
    }

    fn dc_gain(&self) -> f64 {
        (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiquadCascade {
    pub sections: Vec<Biquad>,
    pub gain: f64,
    pub sample_rate_hz: f64,
}

impl BiquadCascade {
    /// Total order of the digital filter.
    pub fn order(&self) -> usize {
        2 * self.sections.len()
    }

    /// Complex single-pass frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / self.sample_rate_hz;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections
            .iter()
            .fold(Complex64::new(self.gain, 0.0), |acc, s| acc * s.response(z_inv))
    }

    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        self.response(freq_hz).norm()
    }

    /// Single-pass magnitude in dB. Exact zeros map to `-inf`.
    pub fn magnitude_db(&self, freq_hz: f64) -> f64 {
        20.0 * self.magnitude(freq_hz).log10()
    }

    pub fn is_stable(&self) -> bool {
        self.sections.iter().all(Biquad::is_stable)
    }

    /// Causal single pass starting from the given per-section states.
    fn run(&self, x: &mut [f64], state: &mut [[f64; 2]]) {
        for v in x.iter_mut() {
            *v *= self.gain;
        }
        for (s, st) in self.sections.iter().zip(state.iter_mut()) {
            let [mut z1, mut z2] = *st;
            for v in x.iter_mut() {
                let u = *v;
                let y = s.b0 * u + z1;
                z1 = s.b1 * u - s.a1 * y + z2;
                z2 = s.b2 * u - s.a2 * y;
                *v = y;
            }
            *st = [z1, z2];
        }
    }

    /// Steady-state section states for a unit step input, the analogue of
    /// `sosfilt_zi`.
    fn step_state(&self) -> Vec<[f64; 2]> {
        let mut level = self.gain;
        self.sections
            .iter()
            .map(|s| {
                let g = s.dc_gain();
                let z1 = (g - s.b0) * level;
                let z2 = (s.b2 - s.a2 * g) * level;
                level *= g;
                [z1, z2]
            })
            .collect()
    }

    /// Causal filtering with zero initial state.
    pub fn apply_causal(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        let mut state = vec![[0.0; 2]; self.sections.len()];
        self.run(&mut out, &mut state);
        out
    }
}

/// Designs a digital Butterworth filter as a biquad cascade.
pub fn design_filter(spec: &FilterSpec) -> Result<BiquadCascade> {
    spec.validate()?;
    let n = spec.order;
    let fs = spec.sample_rate_hz;
    let warp = |f: f64| 2.0 * fs * (PI * f / fs).tan();

    // Analog low-pass prototype, unit cutoff.
    let proto: Vec<Complex64> = (0..n)
        .map(|k| {
            let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect();

    let (zeros, poles, gain) = match spec.kind {
        FilterKind::Highpass => {
            let wc = warp(spec.corner_low_hz);
            let poles: Vec<Complex64> = proto.iter().map(|p| wc / p).collect();
            let zeros = vec![Complex64::new(0.0, 0.0); n];
            (zeros, poles, proto_gain(&proto))
        }
        FilterKind::Bandstop => {
            let w1 = warp(spec.corner_low_hz);
            let w2 = warp(spec.corner_high_hz);
            let bw = w2 - w1;
            let w0 = (w1 * w2).sqrt();
            let mut poles = Vec::with_capacity(2 * n);
            for p in &proto {
                let half = (bw / 2.0) / p;
                let root = (half * half - w0 * w0).sqrt();
                poles.push(half + root);
                poles.push(half - root);
            }
            let mut zeros = Vec::with_capacity(2 * n);
            for _ in 0..n {
                zeros.push(Complex64::new(0.0, w0));
                zeros.push(Complex64::new(0.0, -w0));
            }
            (zeros, poles, proto_gain(&proto))
        }
    };

    let fs2 = Complex64::new(2.0 * fs, 0.0);
    let mut dz: Vec<Complex64> = zeros.iter().map(|z| (fs2 + z) / (fs2 - z)).collect();
    let dp: Vec<Complex64> = poles.iter().map(|p| (fs2 + p) / (fs2 - p)).collect();
    let num = zeros.iter().fold(Complex64::new(1.0, 0.0), |a, z| a * (fs2 - z));
    let den = poles.iter().fold(Complex64::new(1.0, 0.0), |a, p| a * (fs2 - p));
    let dgain = gain * (num / den).re;
    while dz.len() < dp.len() {
        dz.push(Complex64::new(-1.0, 0.0));
    }

    let sections = pair_sections(dz, dp)?;
    let cascade = BiquadCascade {
        sections,
        gain: dgain,
        sample_rate_hz: fs,
    };
    if !cascade.is_stable() {
        return Err(Error::InvalidSpec(
            "designed cascade is not stable (corner too close to DC or Nyquist)".into(),
        ));
    }
    Ok(cascade)
}

/// Gain factor picked up when mapping the unit-cutoff prototype (no finite
/// zeros) to high-pass or band-stop: `1 / prod(-p)`.
fn proto_gain(proto: &[Complex64]) -> f64 {
    let prod = proto.iter().fold(Complex64::new(1.0, 0.0), |a, p| a * -p);
    (Complex64::new(1.0, 0.0) / prod).re
}

/// Groups roots into conjugate pairs (or real pairs) and multiplies them out.
fn pair_sections(zeros: Vec<Complex64>, poles: Vec<Complex64>) -> Result<Vec<Biquad>> {
    let zp = conjugate_pairs(zeros);
    let pp = conjugate_pairs(poles);
    if zp.len() != pp.len() {
        return Err(Error::InvalidSpec("unbalanced pole/zero pairing".into()));
    }
    Ok(zp
        .into_iter()
        .zip(pp)
        .map(|((z1, z2), (p1, p2))| Biquad {
            b0: 1.0,
            b1: -(z1 + z2).re,
            b2: (z1 * z2).re,
            a1: -(p1 + p2).re,
            a2: (p1 * p2).re,
        })
        .collect())
}

fn conjugate_pairs(mut roots: Vec<Complex64>) -> Vec<(Complex64, Complex64)> {
    const TOL: f64 = 1e-9;
    // Upper half-plane first, ordered by angle for a stable section order.
    roots.sort_by(|a, b| {
        b.im.partial_cmp(&a.im)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.re.partial_cmp(&b.re).unwrap_or(std::cmp::Ordering::Equal))
    });
    let mut out = Vec::new();
    let mut used = vec![false; roots.len()];
    let mut reals = Vec::new();
    for i in 0..roots.len() {
        if used[i] {
            continue;
        }
        let r = roots[i];
        if r.im.abs() <= TOL * r.norm().max(1.0) {
            used[i] = true;
            reals.push(Complex64::new(r.re, 0.0));
            continue;
        }
        used[i] = true;
        let partner = (0..roots.len())
            .filter(|&j| !used[j])
            .min_by(|&a, &b| {
                let da = (roots[a] - r.conj()).norm();
                let db = (roots[b] - r.conj()).norm();
                da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
            });
        if let Some(j) = partner {
            used[j] = true;
            out.push((r, r.conj()));
        }
    }
    for pair in reals.chunks(2) {
        match pair {
            [a, b] => out.push((*a, *b)),
            [a] => out.push((*a, Complex64::new(0.0, 0.0))),
            _ => {}
        }
    }
    out
}

/// Zero-phase forward-backward filtering with odd reflection padding and
/// steady-state initial conditions.
pub fn apply_filter_zero_phase(x: &[f64], f: &BiquadCascade) -> Result<Vec<f64>> {
    let pad = 3 * f.order();
    if x.len() <= pad {
        return Err(Error::SignalTooShort {
            len: x.len(),
            min: pad,
        });
    }
    let n = x.len();
    let mut ext = Vec::with_capacity(n + 2 * pad);
    let first = x[0];
    let last = x[n - 1];
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * last - x[n - 1 - i]));

    let zi = f.step_state();
    let scaled = |v: f64| zi.iter().map(|s| [s[0] * v, s[1] * v]).collect::<Vec<_>>();

    let mut state = scaled(ext[0]);
    f.run(&mut ext, &mut state);
    ext.reverse();
    let mut state = scaled(ext[0]);
    f.run(&mut ext, &mut state);
    ext.reverse();
    Ok(ext[pad..pad + n].to_vec())
}
