use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::recording::EegRecording;
use crate::error::{Error, Result};

/// The five annotated artifact classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArtifactType {
    Chew,
    Elec,
    Eyem,
    Musc,
    Shiv,
}

impl ArtifactType {
    /// Canonical order used for every per-type column layout.
    pub const ALL: [ArtifactType; 5] = [
        ArtifactType::Chew,
        ArtifactType::Elec,
        ArtifactType::Eyem,
        ArtifactType::Musc,
        ArtifactType::Shiv,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactType::Chew => "chew",
            ArtifactType::Elec => "elec",
            ArtifactType::Eyem => "eyem",
            ArtifactType::Musc => "musc",
            ArtifactType::Shiv => "shiv",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn description(self) -> &'static str {
        match self {
            ArtifactType::Chew => "Chewing",
            ArtifactType::Elec => "Electrode pop",
            ArtifactType::Eyem => "Eye movement",
            ArtifactType::Musc => "Muscle",
            ArtifactType::Shiv => "Shiver",
        }
    }
}

impl fmt::Display for ArtifactType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArtifactType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "chew" => Ok(ArtifactType::Chew),
            "elec" => Ok(ArtifactType::Elec),
            "eyem" => Ok(ArtifactType::Eyem),
            "musc" => Ok(ArtifactType::Musc),
            "shiv" => Ok(ArtifactType::Shiv),
            other => Err(Error::Domain(format!(
                "unknown artifact label {other:?}; expected one of chew, elec, eyem, musc, shiv"
            ))),
        }
    }
}

/// One annotated artifact interval on one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEvent {
    pub channel: String,
    pub start_s: f64,
    pub stop_s: f64,
    pub label: ArtifactType,
}

impl ArtifactEvent {
    pub fn duration_s(&self) -> f64 {
        self.stop_s - self.start_s
    }

    /// Length of the intersection with `[a, b)`.
    pub fn overlap(&self, a: f64, b: f64) -> f64 {
        (self.stop_s.min(b) - self.start_s.max(a)).max(0.0)
    }
}

/// Channel token expanding to every channel of the recording.
pub const ALL_CHANNELS: &str = "ALL";

/// Reads annotation CSV rows `channel,start_s,stop_s,label` (header
/// required), validates them against `recording` and returns events sorted by
/// start time. `ALL` rows expand to one event per channel.
pub fn load_annotations(path: &Path, recording: &EegRecording) -> Result<Vec<ArtifactEvent>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text, path, recording)
}

pub fn parse_annotations(
    text: &str,
    path: &Path,
    recording: &EegRecording,
) -> Result<Vec<ArtifactEvent>> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((i, l)) => break (i + 1, l),
            None => return Err(Error::parse(path, 1, "missing header row")),
        }
    };
    let cols: Vec<String> = header
        .1
        .split(',')
        .map(|c| c.trim().to_ascii_lowercase())
        .collect();
    if cols != ["channel", "start_s", "stop_s", "label"] {
        return Err(Error::parse(
            path,
            header.0,
            format!("header must be channel,start_s,stop_s,label, got {:?}", header.1),
        ));
    }
    let duration = recording.duration_s();
    let mut events = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 4 fields, got {}", fields.len()),
            ));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(path, line_no, format!("bad {what} {s:?}")))
        };
        let start = num(fields[1], "start_s")?;
        let stop = num(fields[2], "stop_s")?;
        let label: ArtifactType = fields[3]
            .parse()
            .map_err(|e: Error| Error::parse(path, line_no, e.to_string()))?;
        if !(0.0 <= start && start < stop && stop <= duration + 1e-9) {
            return Err(Error::parse(
                path,
                line_no,
                format!("interval [{start}, {stop}] outside recording of {duration} s"),
            ));
        }
        let channel = fields[0];
        if channel.eq_ignore_ascii_case(ALL_CHANNELS) {
            for ch in &recording.channels {
                events.push(ArtifactEvent {
                    channel: ch.clone(),
                    start_s: start,
                    stop_s: stop,
                    label,
                });
            }
        } else {
            let Some(ch) = recording
                .channels
                .iter()
                .find(|c| c.eq_ignore_ascii_case(channel))
            else {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("unknown channel {channel:?}"),
                ));
            };
            events.push(ArtifactEvent {
                channel: ch.clone(),
                start_s: start,
                stop_s: stop,
                label,
            });
        }
    }
    sort_events(&mut events);
    Ok(events)
}

pub(crate) fn sort_events(events: &mut [ArtifactEvent]) {
    events.sort_by(|a, b| {
        a.start_s
            .total_cmp(&b.start_s)
            .then(a.stop_s.total_cmp(&b.stop_s))
            .then(a.channel.cmp(&b.channel))
            .then(a.label.cmp(&b.label))
    });
}

/// Writes events as annotation CSV.
pub fn write_annotations(path: &Path, events: &[ArtifactEvent]) -> Result<()> {
    let mut out = String::from("channel,start_s,stop_s,label\n");
    for e in events {
        out.push_str(&format!("{},{},{},{}\n", e.channel, e.start_s, e.stop_s, e.label));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Total covered time (union of intervals) of the events within `[a, b)`.
pub fn covered_time<'a>(events: impl IntoIterator<Item = &'a ArtifactEvent>, a: f64, b: f64) -> f64 {
    let mut spans: Vec<(f64, f64)> = events
        .into_iter()
        .filter_map(|e| {
            let s = e.start_s.max(a);
            let t = e.stop_s.min(b);
            (t > s).then_some((s, t))
        })
        .collect();
    spans.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut total = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for (s, t) in spans {
        match cur {
            Some((cs, ct)) if s <= ct => cur = Some((cs, ct.max(t))),
            Some((cs, ct)) => {
                total += ct - cs;
                cur = Some((s, t));
            }
            None => cur = Some((s, t)),
        }
    }
    if let Some((cs, ct)) = cur {
        total += ct - cs;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec() -> EegRecording {
        EegRecording::new(
            "p1".into(),
            10.0,
            vec!["FP1".into(), "FP2".into()],
            vec![vec![0.0; 100], vec![0.0; 100]],
        )
        .unwrap()
    }

    #[test]
    fn accepts_valid_row() {
        let ev = parse_annotations(
            "channel,start_s,stop_s,label\nFP1,1.0,2.5,eyem\n",
            Path::new("a.csv"),
            &rec(),
        )
        .unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].label, ArtifactType::Eyem);
    }

    #[test]
    fn rejects_out_of_range_with_row_number() {
        let err = parse_annotations(
            "channel,start_s,stop_s,label\nFP1,1.0,2.0,eyem\nFP2,9.0,10.5,musc\n",
            Path::new("a.csv"),
            &rec(),
        )
        .unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn unknown_label_lists_valid_set() {
        let err = parse_annotations(
            "channel,start_s,stop_s,label\nFP1,1.0,2.0,blink\n",
            Path::new("a.csv"),
            &rec(),
        )
        .unwrap_err()
        .to_string();
        for l in ["chew", "elec", "eyem", "musc", "shiv"] {
            assert!(err.contains(l), "{err}");
        }
    }

    #[test]
    fn unknown_channel_and_all_expansion() {
        let err = parse_annotations(
            "channel,start_s,stop_s,label\nO9,1.0,2.0,musc\n",
            Path::new("a.csv"),
            &rec(),
        );
        assert!(err.is_err());
        let ev = parse_annotations(
            "channel,start_s,stop_s,label\nALL,3.0,4.0,shiv\nFP1,1.0,2.0,chew\n",
            Path::new("a.csv"),
            &rec(),
        )
        .unwrap();
        assert_eq!(ev.len(), 3);
        assert_eq!(ev[0].start_s, 1.0);
    }

    #[test]
    fn union_coverage() {
        let mk = |s, t| ArtifactEvent {
            channel: "FP1".into(),
            start_s: s,
            stop_s: t,
            label: ArtifactType::Musc,
        };
        let ev = [mk(0.0, 2.0), mk(1.0, 3.0), mk(5.0, 6.0)];
        assert!((covered_time(&ev, 0.0, 10.0) - 4.0).abs() < 1e-12);
        assert!((covered_time(&ev, 2.5, 5.5) - 1.0).abs() < 1e-12);
    }
}
