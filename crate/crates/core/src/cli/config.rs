use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bmnet::{ChannelModelConfig, TrainRecipe};
use crate::dataio::{ArtifactType, SynthSpec};
use crate::dsp::{PreprocessConfig, WINDOW_LENGTHS_S};
use crate::error::{Error, Result};
use crate::gbdt::{GbdtConfig, GbdtGrid};

/// Environment variable overriding `paths.root`.
pub const ROOT_ENV: &str = "EEGART_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    /// Experiment directory holding corpus, models, features and reports.
    pub root: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            root: PathBuf::from("eegart-experiment"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    /// Each binary model sees only its own type's 74 features.
    Specific,
    /// Each binary model sees the features of every enabled type.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSection {
    pub window_lengths: Vec<usize>,
    pub types: Vec<ArtifactType>,
    pub folds: usize,
    pub fold_seed: u64,
    pub feature_set: FeatureSet,
    /// Training share of the inner split used for grid search.
    pub inner_split: f64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            window_lengths: WINDOW_LENGTHS_S.to_vec(),
            types: ArtifactType::ALL.to_vec(),
            folds: 5,
            fold_seed: 0,
            feature_set: FeatureSet::Specific,
            inner_split: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectSection {
    pub threshold: f64,
    pub window_len: usize,
}

impl Default for DetectSection {
    fn default() -> Self {
        DetectSection {
            threshold: 0.5,
            window_len: 5,
        }
    }
}

/// Everything a pipeline run needs, loaded from TOML with overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ExperimentConfig {
    pub paths: Paths,
    pub experiment: ExperimentSection,
    pub synth: SynthSpec,
    pub preprocess: PreprocessConfig,
    pub channel_model: ChannelModelConfig,
    pub train: TrainRecipe,
    pub gbdt: GbdtConfig,
    pub grid: GbdtGrid,
    pub detect: DetectSection,
}

/// Keys that may be absent from the serialized defaults.
const OPTIONAL_KEYS: [&str; 1] = ["class_weights"];

fn check_window(l: usize) -> Result<()> {
    if WINDOW_LENGTHS_S.contains(&l) {
        Ok(())
    } else {
        Err(Error::Config(format!("window length {l} s not in {WINDOW_LENGTHS_S:?}")))
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.experiment.window_lengths.is_empty() || self.experiment.types.is_empty() {
            return Err(Error::Config("experiment needs at least one window length and type".into()));
        }
        for &l in &self.experiment.window_lengths {
            check_window(l)?;
        }
        check_window(self.detect.window_len)?;
        if self.experiment.folds < 2 {
            return Err(Error::Config("at least 2 folds are required".into()));
        }
        if !(self.experiment.inner_split > 0.0 && self.experiment.inner_split < 1.0) {
            return Err(Error::Config("experiment.inner_split must lie in (0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.detect.threshold) {
            return Err(Error::Config("detect.threshold must lie in [0, 1]".into()));
        }
        if self.paths.root.as_os_str().is_empty() {
            return Err(Error::Config("paths.root is empty".into()));
        }
        self.synth.validate()?;
        self.channel_model.validate()?;
        self.train.validate()?;
        self.gbdt.validate()?;
        Ok(())
    }

    /// Enabled types in canonical order, without duplicates.
    pub fn types(&self) -> Vec<ArtifactType> {
        ArtifactType::ALL
            .into_iter()
            .filter(|t| self.experiment.types.contains(t))
            .collect()
    }

    pub fn window_lengths(&self) -> Vec<usize> {
        let mut v = self.experiment.window_lengths.clone();
        v.sort_unstable();
        v.dedup();
        v
    }
}

fn defaults_table() -> toml::Table {
    toml::Table::try_from(ExperimentConfig::default()).expect("defaults serialize")
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses `a.b.c=value`; the value is read as a TOML literal and falls back
/// to a plain string.
pub fn parse_override(s: &str) -> Result<(Vec<String>, toml::Value)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {s:?} is not key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(|p| p.trim().to_string()).collect();
    if path.len() < 2 || path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key {key:?} must look like section.key")));
    }
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    Ok((path, value))
}

fn apply_override(table: &mut toml::Table, defaults: &toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let mut t = table;
    let mut d = Some(defaults);
    for (i, part) in path.iter().enumerate() {
        let known = d.is_some_and(|d| d.contains_key(part)) || OPTIONAL_KEYS.contains(&part.as_str());
        if !known {
            return Err(Error::Config(format!("unknown configuration key {}", path.join("."))));
        }
        if i + 1 == path.len() {
            t.insert(part.clone(), value);
            return Ok(());
        }
        d = d.and_then(|d| d.get(part)).and_then(|v| v.as_table());
        let entry = t
            .entry(part.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{part} is not a section")))?;
    }
    Ok(())
}

/// Builds the configuration: defaults, then the optional file, then the
/// root from the environment, then `--set` overrides.
pub fn load_config(path: Option<&Path>, env_root: Option<&str>, overrides: &[String]) -> Result<ExperimentConfig> {
    let defaults = defaults_table();
    let mut table = defaults.clone();
    if let Some(p) = path {
        let text = std::fs::read_to_string(p)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
        let file: toml::Table = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
        for (section, v) in &file {
            if !defaults.contains_key(section) {
                return Err(Error::Config(format!("{}: unknown section [{section}]", p.display())));
            }
            if !v.is_table() {
                return Err(Error::Config(format!("{}: {section} must be a section", p.display())));
            }
        }
        merge(&mut table, file);
    }
    if let Some(root) = env_root.filter(|r| !r.is_empty()) {
        let (k, v) = (vec!["paths".to_string(), "root".to_string()], toml::Value::String(root.into()));
        apply_override(&mut table, &defaults, &k, v)?;
    }
    for o in overrides {
        let (k, v) = parse_override(o)?;
        apply_override(&mut table, &defaults, &k, v)?;
    }
    let cfg: ExperimentConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = load_config(None, None, &[]).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn overrides_apply_and_typecheck() {
        let sets = vec![
            "train.max_epochs=3".to_string(),
            "experiment.types=[\"eyem\",\"musc\"]".to_string(),
            "synth.events.eyem=0".to_string(),
            "train.class_weights=[1.0, 2.0]".to_string(),
        ];
        let cfg = load_config(None, Some("/tmp/x"), &sets).unwrap();
        assert_eq!(cfg.train.max_epochs, 3);
        assert_eq!(cfg.types(), vec![ArtifactType::Eyem, ArtifactType::Musc]);
        assert_eq!(cfg.synth.events.eyem, 0);
        assert_eq!(cfg.train.class_weights, Some([1.0, 2.0]));
        assert_eq!(cfg.paths.root, PathBuf::from("/tmp/x"));
        assert!(load_config(None, None, &["train.nope=1".into()]).is_err());
        assert!(load_config(None, None, &["train.max_epochs=\"x\"".into()]).is_err());
        assert!(load_config(None, None, &["noequals".into()]).is_err());
    }

    #[test]
    fn bad_window_rejected() {
        let cfg = load_config(None, None, &["experiment.window_lengths=[2]".into()]).unwrap();
        assert!(cfg.validate().is_err());
    }
}
