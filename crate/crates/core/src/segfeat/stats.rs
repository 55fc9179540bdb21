use crate::error::{Error, Result};

/// Statistics per region: mean, median, std, max, min, then five histogram
/// proportions.
pub const N_STATS: usize = 10;
pub const STAT_NAMES: [&str; N_STATS] = [
    "mean", "median", "std", "max", "min", "hist0", "hist1", "hist2", "hist3", "hist4",
];
const HIST_EDGES: [f64; 4] = [0.2, 0.4, 0.6, 0.8];

/// Summary of a set of probabilities; all zeros for an empty set.
pub fn region_statistics(probs: &[f64]) -> Result<[f64; N_STATS]> {
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
    }
    let mut out = [0.0; N_STATS];
    if probs.is_empty() {
        return Ok(out);
    }
    let n = probs.len() as f64;
    let mut sorted = probs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = probs.iter().sum::<f64>() / n;
    let var = probs.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    };
    out[0] = mean;
    out[1] = median;
    out[2] = var.sqrt();
    out[3] = sorted[sorted.len() - 1];
    out[4] = sorted[0];
    for p in probs {
        let bin = HIST_EDGES.iter().filter(|&&e| *p >= e).count();
        out[5 + bin] += 1.0 / n;
    }
    Ok(out)
}

/// Cross-correlation lag range, 0.25 s each side.
pub const CROSS_MAX_LAG: usize = 32;
/// Autocorrelation lag range, 0.1 to 0.5 s.
pub const AUTO_LAGS: (usize, usize) = (13, 64);

fn centered(x: &[f64]) -> (Vec<f64>, f64) {
    let mean = x.iter().sum::<f64>() / x.len().max(1) as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    (c, norm)
}

/// Normalized correlation of `a` and `b` shifted by `lag` (b leads for
/// positive lags), divided by the full-length norms so it stays in [-1, 1].
pub fn lagged_correlation(a: &[f64], b: &[f64], lag: isize) -> f64 {
    let (ca, na) = centered(a);
    let (cb, nb) = centered(b);
    lagged_centered(&ca, na, &cb, nb, lag)
}

fn lagged_centered(a: &[f64], na: f64, b: &[f64], nb: f64, lag: isize) -> f64 {
    let n = a.len().min(b.len()) as isize;
    if na <= 0.0 || nb <= 0.0 || lag.abs() >= n {
        return 0.0;
    }
    let (lo, hi) = (0.max(-lag), n.min(n - lag));
    let mut s = 0.0;
    for t in lo..hi {
        s += a[t as usize] * b[(t + lag) as usize];
    }
    (s / (na * nb)).clamp(-1.0, 1.0)
}

/// Maximum normalized cross-correlation over lags `|l| ≤ CROSS_MAX_LAG`.
pub fn max_cross_correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ca, na) = centered(a);
    let (cb, nb) = centered(b);
    let m = CROSS_MAX_LAG as isize;
    (-m..=m)
        .map(|l| lagged_centered(&ca, na, &cb, nb, l))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Maximum normalized autocorrelation over lags in [`AUTO_LAGS`].
pub fn max_autocorrelation(a: &[f64]) -> f64 {
    let (ca, na) = centered(a);
    (AUTO_LAGS.0..=AUTO_LAGS.1)
        .map(|l| lagged_centered(&ca, na, &ca, na, l as isize))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// FP1/F7 and FP2/F8 cross-correlation, FP1 and FP2 autocorrelation.
/// Missing channels yield zeros.
pub fn correlation_features(fp1: Option<&[f64]>, fp2: Option<&[f64]>, f7: Option<&[f64]>, f8: Option<&[f64]>) -> [f64; 4] {
    let cross = |a: Option<&[f64]>, b: Option<&[f64]>| match (a, b) {
        (Some(a), Some(b)) => max_cross_correlation(a, b),
        _ => 0.0,
    };
    let auto = |a: Option<&[f64]>| a.map_or(0.0, max_autocorrelation);
    [cross(fp1, f7), cross(fp2, f8), auto(fp1), auto(fp2)]
}
