use std::fmt;

use crate::error::{Error, Result};

/// Scalp regions in feature order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    Frontal,
    FrontalTemporal,
    NonFrontal,
    Central,
    Parietal,
    Occipital,
    WholeScalp,
}

impl Region {
    pub const ALL: [Region; 7] = [
        Region::Frontal,
        Region::FrontalTemporal,
        Region::NonFrontal,
        Region::Central,
        Region::Parietal,
        Region::Occipital,
        Region::WholeScalp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Region::Frontal => "frontal",
            Region::FrontalTemporal => "frontal_temporal",
            Region::NonFrontal => "non_frontal",
            Region::Central => "central",
            Region::Parietal => "parietal",
            Region::Occipital => "occipital",
            Region::WholeScalp => "whole_scalp",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

const FRONTAL: [&str; 5] = ["FP1", "FP2", "F3", "F4", "FZ"];
const FRONTAL_TEMPORAL: [&str; 4] = ["F7", "F8", "T3", "T4"];
const CENTRAL: [&str; 3] = ["C3", "C4", "CZ"];
const PARIETAL: [&str; 3] = ["P3", "P4", "PZ"];
const OCCIPITAL: [&str; 2] = ["O1", "O2"];
/// Posterior temporal and remaining 10-20 sites that belong to no named
/// region besides non-frontal and whole scalp.
const OTHER_KNOWN: [&str; 2] = ["T5", "T6"];

/// Canonical 10-20 name: upper case, common `EEG ` prefix and reference
/// suffixes removed, modern temporal names mapped to the legacy ones.
pub fn normalize_channel_name(name: &str) -> String {
    let mut s = name.trim().to_ascii_uppercase();
    if let Some(rest) = s.strip_prefix("EEG ") {
        s = rest.trim().to_string();
    }
    for suffix in ["-REF", "-LE", "-AR"] {
        if let Some(rest) = s.strip_suffix(suffix) {
            s = rest.to_string();
        }
    }
    match s.as_str() {
        "T7" => "T3".into(),
        "T8" => "T4".into(),
        "P7" => "T5".into(),
        "P8" => "T6".into(),
        _ => s,
    }
}

/// Assignment of a montage's channels (by position) to the seven regions.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMap {
    channels: Vec<String>,
    members: [Vec<usize>; 7],
}

impl RegionMap {
    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    /// Channel indices belonging to `r`.
    pub fn members(&self, r: Region) -> &[usize] {
        &self.members[r as usize]
    }

    pub fn member_names(&self, r: Region) -> Vec<&str> {
        self.members(r).iter().map(|&i| self.channels[i].as_str()).collect()
    }

    /// Index of a channel by normalized name.
    pub fn find(&self, name: &str) -> Option<usize> {
        let n = normalize_channel_name(name);
        self.channels.iter().position(|c| normalize_channel_name(c) == n)
    }
}

pub fn map_channels_to_regions<S: AsRef<str>>(channel_names: &[S]) -> Result<RegionMap> {
    if channel_names.is_empty() {
        return Err(Error::Empty("channel list".into()));
    }
    let mut members: [Vec<usize>; 7] = Default::default();
    for (i, raw) in channel_names.iter().enumerate() {
        let n = normalize_channel_name(raw.as_ref());
        let named = |set: &[&str]| set.contains(&n.as_str());
        let mut push = |r: Region| members[r as usize].push(i);
        push(Region::WholeScalp);
        if named(&FRONTAL) {
            push(Region::Frontal);
            continue;
        }
        push(Region::NonFrontal);
        if named(&FRONTAL_TEMPORAL) {
            push(Region::FrontalTemporal);
        } else if named(&CENTRAL) {
            push(Region::Central);
        } else if named(&PARIETAL) {
            push(Region::Parietal);
        } else if named(&OCCIPITAL) {
            push(Region::Occipital);
        } else if !named(&OTHER_KNOWN) {
            log::warn!("channel {:?} is not a 10-20 site; used for non-frontal and whole-scalp only", raw.as_ref());
        }
    }
    Ok(RegionMap {
        channels: channel_names.iter().map(|s| s.as_ref().to_string()).collect(),
        members,
    })
}
