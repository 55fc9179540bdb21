use std::io::Write;
use std::path::Path;

use super::regions::{Region, RegionMap};
use super::stats::{correlation_features, region_statistics, N_STATS, STAT_NAMES};
use crate::bmnet::ChannelScorer;
use crate::dataio::{covered_time, ArtifactEvent, ArtifactType};
use crate::error::{Error, Result};

pub const N_REGION_FEATURES: usize = 7 * N_STATS;
pub const N_FEATURES: usize = N_REGION_FEATURES + 4;
pub const CORRELATION_NAMES: [&str; 4] = ["xcorr_fp1_f7", "xcorr_fp2_f8", "acorr_fp1", "acorr_fp2"];

/// Column names in feature order: region-major, statistic-minor, then the
/// four correlations.
pub fn feature_names() -> Vec<String> {
    let mut v: Vec<String> = Region::ALL
        .iter()
        .flat_map(|r| STAT_NAMES.iter().map(move |s| format!("{r}_{s}")))
        .collect();
    v.extend(CORRELATION_NAMES.iter().map(|s| s.to_string()));
    v
}

/// The 74 features of one multi-channel segment for one artifact type.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentFeatureVector {
    pub values: Vec<f64>,
    pub artifact_type: ArtifactType,
    pub segment_id: String,
    pub window_len_s: usize,
}

/// Features from per-channel artifact probabilities (aligned with the region
/// map's channels) and the segment's raw channels.
pub fn assemble_features(probs: &[f64], segment: &[&[f64]], map: &RegionMap) -> Result<Vec<f64>> {
    if probs.len() != map.channels().len() || segment.len() != map.channels().len() {
        return Err(Error::Shape(format!(
            "{} probabilities and {} channels for a {}-channel montage",
            probs.len(),
            segment.len(),
            map.channels().len()
        )));
    }
    let mut out = Vec::with_capacity(N_FEATURES);
    for r in Region::ALL {
        let p: Vec<f64> = map.members(r).iter().map(|&i| probs[i]).collect();
        out.extend_from_slice(&region_statistics(&p)?);
    }
    let ch = |name: &str| map.find(name).map(|i| segment[i]);
    out.extend_from_slice(&correlation_features(ch("FP1"), ch("FP2"), ch("F7"), ch("F8")));
    Ok(out)
}

/// Scores every channel of `segment` with `model` and assembles the 74
/// features.
pub fn build_feature_vector(
    segment: &[&[f64]],
    model: &dyn ChannelScorer,
    map: &RegionMap,
    artifact_type: ArtifactType,
    segment_id: &str,
) -> Result<SegmentFeatureVector> {
    let want = model.window_samples();
    if let Some(bad) = segment.iter().find(|c| c.len() != want) {
        return Err(Error::PlanMismatch(format!(
            "segment channel has {} samples, model expects {want}",
            bad.len()
        )));
    }
    let probs = model.score_windows(segment)?;
    Ok(SegmentFeatureVector {
        values: assemble_features(&probs, segment, map)?,
        artifact_type,
        segment_id: segment_id.to_string(),
        window_len_s: want / 128,
    })
}

/// Annotation-derived ground truth of a segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentLabels {
    /// Fraction of the segment covered by each type on any channel.
    pub coverage: [f64; 5],
    /// Whether any event of any type overlaps the segment.
    pub touched: bool,
}

pub const SEGMENT_POSITIVE_COVERAGE: f64 = 0.5;

impl SegmentLabels {
    pub fn from_events(events: &[ArtifactEvent], start_s: f64, stop_s: f64) -> Self {
        let len = stop_s - start_s;
        let mut coverage = [0.0; 5];
        for t in ArtifactType::ALL {
            let c = covered_time(events.iter().filter(|e| e.label == t), start_s, stop_s);
            coverage[t.index()] = (c / len).clamp(0.0, 1.0);
        }
        let touched = events.iter().any(|e| e.overlap(start_s, stop_s) > 0.0);
        SegmentLabels { coverage, touched }
    }

    fn positive(&self, t: ArtifactType) -> bool {
        self.coverage[t.index()] >= SEGMENT_POSITIVE_COVERAGE - 1e-9
    }

    /// Binary task for one type: `Some(true)` artifact, `Some(false)`
    /// background, `None` when the segment is excluded from that task.
    pub fn binary(&self, t: ArtifactType) -> Option<bool> {
        if self.positive(t) {
            Some(true)
        } else if !self.touched {
            Some(false)
        } else {
            None
        }
    }

    /// Multi-class label: `Some(None)` background, `Some(Some(t))` the
    /// dominant qualifying type, `None` when excluded.
    pub fn multiclass(&self) -> Option<Option<ArtifactType>> {
        if !self.touched {
            return Some(None);
        }
        let best = ArtifactType::ALL
            .into_iter()
            .filter(|&t| self.positive(t))
            .max_by(|a, b| {
                self.coverage[a.index()]
                    .total_cmp(&self.coverage[b.index()])
                    .then(b.cmp(a))
            });
        best.map(Some)
    }

    /// Multi-label flags, `None` when some type only partially touches the
    /// segment.
    pub fn multilabel(&self) -> Option<[bool; 5]> {
        let ambiguous = ArtifactType::ALL
            .iter()
            .any(|&t| self.coverage[t.index()] > 0.0 && !self.positive(t));
        if ambiguous {
            return None;
        }
        Some(ArtifactType::ALL.map(|t| self.positive(t)))
    }

    /// Any-artifact flag for the combined detector.
    pub fn any_artifact(&self) -> Option<bool> {
        if ArtifactType::ALL.iter().any(|&t| self.positive(t)) {
            Some(true)
        } else if !self.touched {
            Some(false)
        } else {
            None
        }
    }
}

/// One row of a feature table.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub segment_id: String,
    pub patient_id: String,
    pub start_s: f64,
    pub features: Vec<f64>,
    pub labels: SegmentLabels,
}

/// Feature file for one (type, window length).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub artifact_type: ArtifactType,
    pub window_len_s: usize,
    pub rows: Vec<FeatureRow>,
}

const META: [&str; 5] = ["segment_id", "patient_id", "start_s", "window_len_s", "artifact_type"];

fn flag(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "1",
        Some(false) => "0",
        None => "",
    }
}

impl FeatureTable {
    pub fn header() -> Vec<String> {
        let mut h: Vec<String> = META.iter().map(|s| s.to_string()).collect();
        h.extend(feature_names());
        h.extend(ArtifactType::ALL.iter().map(|t| format!("cov_{t}")));
        h.push("touched".into());
        h.push("label".into());
        h.push("class".into());
        h.extend(ArtifactType::ALL.iter().map(|t| format!("ml_{t}")));
        h.push("any_artifact".into());
        h
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = Self::header().join(",");
        out.push('\n');
        for r in &self.rows {
            let mut f: Vec<String> = vec![
                r.segment_id.clone(),
                r.patient_id.clone(),
                format!("{}", r.start_s),
                self.window_len_s.to_string(),
                self.artifact_type.to_string(),
            ];
            f.extend(r.features.iter().map(|v| format!("{v}")));
            f.extend(r.labels.coverage.iter().map(|v| format!("{v}")));
            f.push(if r.labels.touched { "1" } else { "0" }.into());
            f.push(flag(r.labels.binary(self.artifact_type)).into());
            f.push(match r.labels.multiclass() {
                Some(None) => "bckg".into(),
                Some(Some(t)) => t.to_string(),
                None => String::new(),
            });
            let ml = r.labels.multilabel();
            f.extend(ArtifactType::ALL.iter().map(|t| flag(ml.map(|m| m[t.index()])).to_string()));
            f.push(flag(r.labels.any_artifact()).into());
            out.push_str(&f.join(","));
            out.push('\n');
        }
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::parse(path, 1, "empty feature file"))?;
        let expect = Self::header();
        if header.split(',').ne(expect.iter().map(String::as_str)) {
            return Err(Error::parse(path, 1, "unexpected feature header"));
        }
        let mut rows = Vec::new();
        let mut kind: Option<(ArtifactType, usize)> = None;
        for (i, line) in lines.enumerate() {
            let ln = i + 2;
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != expect.len() {
                return Err(Error::parse(path, ln, format!("{} fields, expected {}", f.len(), expect.len())));
            }
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::parse(path, ln, format!("bad number {s:?}")))
            };
            let wl: usize = f[3]
                .parse()
                .map_err(|_| Error::parse(path, ln, "bad window length"))?;
            let t: ArtifactType = f[4].parse().map_err(|e: Error| Error::parse(path, ln, e.to_string()))?;
            match kind {
                None => kind = Some((t, wl)),
                Some(k) if k != (t, wl) => {
                    return Err(Error::parse(path, ln, "mixed artifact types or window lengths"))
                }
                _ => {}
            }
            let features = f[5..5 + N_FEATURES].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
            let c0 = 5 + N_FEATURES;
            let mut coverage = [0.0; 5];
            for (k, c) in coverage.iter_mut().enumerate() {
                *c = num(f[c0 + k])?;
            }
            rows.push(FeatureRow {
                segment_id: f[0].to_string(),
                patient_id: f[1].to_string(),
                start_s: num(f[2])?,
                features,
                labels: SegmentLabels {
                    coverage,
                    touched: f[c0 + 5] == "1",
                },
            });
        }
        let (artifact_type, window_len_s) =
            kind.ok_or_else(|| Error::Empty(format!("{}: no feature rows", path.display())))?;
        Ok(FeatureTable {
            artifact_type,
            window_len_s,
            rows,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_frozen() {
        let n = feature_names();
        assert_eq!(n.len(), N_FEATURES);
        assert_eq!(n[0], "frontal_mean");
        assert_eq!(n[12], "frontal_temporal_std");
        assert_eq!(n[69], "whole_scalp_hist4");
        assert_eq!(n[73], "acorr_fp2");
    }

    #[test]
    fn label_rules() {
        let ev = |s: f64, t: f64, label| ArtifactEvent {
            channel: "FP1".into(),
            start_s: s,
            stop_s: t,
            label,
        };
        let events = [ev(0.0, 3.0, ArtifactType::Eyem), ev(2.0, 4.0, ArtifactType::Musc)];
        let l = SegmentLabels::from_events(&events, 0.0, 5.0);
        assert_eq!(l.binary(ArtifactType::Eyem), Some(true));
        assert_eq!(l.binary(ArtifactType::Musc), None);
        assert_eq!(l.multiclass(), Some(Some(ArtifactType::Eyem)));
        assert_eq!(l.multilabel(), None);
        assert_eq!(l.any_artifact(), Some(true));
        let clean = SegmentLabels::from_events(&events, 5.0, 10.0);
        assert_eq!(clean.multiclass(), Some(None));
        assert_eq!(clean.multilabel(), Some([false; 5]));
    }
}
