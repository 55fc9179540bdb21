use std::time::Instant;

use super::config::ExperimentConfig;
use super::data::{load_preprocessed, Loaded};
use super::layout::{mkdirs, par_map, write_text, Layout};
use crate::bmnet::{label_windows, train_channel_detector, ChannelModel, ChannelModelConfig};
use crate::dataio::{load_model, save_model, ArtifactType, EegRecording};
use crate::dsp::extract_windows;
use crate::error::{Error, Result};
use crate::segfeat::{assemble_features, map_channels_to_regions, FeatureRow, FeatureTable, SegmentLabels};

pub fn channel_config(cfg: &ExperimentConfig, l: usize) -> ChannelModelConfig {
    ChannelModelConfig {
        window_len_s: l,
        ..cfg.channel_model.clone()
    }
}

pub fn cmd_train_channel(cfg: &ExperimentConfig, layout: &Layout, force: bool) -> Result<()> {
    let jobs: Vec<(ArtifactType, usize)> = cfg
        .types()
        .into_iter()
        .flat_map(|t| cfg.window_lengths().into_iter().map(move |l| (t, l)))
        .collect();
    for &(t, l) in &jobs {
        let p = layout.channel_model(t, l);
        if p.exists() && !force {
            return Err(Error::Config(format!(
                "{} already exists; pass --force to retrain",
                p.display()
            )));
        }
    }
    let data = load_preprocessed(layout)?;
    mkdirs(&layout.models_dir())?;
    for (t, l) in jobs {
        let started = Instant::now();
        let mcfg = channel_config(cfg, l);
        let plan = mcfg.plan();
        let per_rec = par_map(&data, |d| label_windows(&d.recording, &d.events, &plan, t))?;
        let windows: Vec<_> = per_rec.into_iter().flatten().collect();
        log::info!("{t} L={l}: {} labelled windows", windows.len());
        let (model, log) = train_channel_detector(&windows, &mcfg, &cfg.train)?;
        drop(windows);
        let mut bundle = model.to_bundle()?;
        bundle.metadata.insert("artifact_type".into(), t.to_string());
        bundle.metadata.insert("window_len_s".into(), l.to_string());
        bundle.metadata.insert("seed".into(), cfg.train.seed.to_string());
        bundle.metadata.insert("best_epoch".into(), log.best_epoch.to_string());
        bundle.metadata.insert(
            "recipe".into(),
            serde_json::to_string(&cfg.train).expect("recipe serializes"),
        );
        save_model(&bundle, &layout.channel_model(t, l))?;
        write_text(&layout.channel_log(t, l), &log.to_csv())?;
        let best = log.best().expect("best epoch logged");
        println!(
            "channel model {t} L={l}: best epoch {} of {}, val BAC {:.3}, train windows {:?}, {:.0} s",
            log.best_epoch,
            log.epochs.len(),
            best.val_bac,
            log.n_train,
            started.elapsed().as_secs_f64()
        );
    }
    Ok(())
}

pub fn load_channel_model(layout: &Layout, t: ArtifactType, l: usize) -> Result<ChannelModel> {
    let p = layout.channel_model(t, l);
    if !p.exists() {
        return Err(Error::Missing(format!(
            "channel model for ({t}, L={l}) not found at {} (run `eegart train-channel`)",
            p.display()
        )));
    }
    let m = ChannelModel::from_bundle(&load_model(&p)?)?;
    if m.config().window_len_s != l {
        return Err(Error::PlanMismatch(format!(
            "{} holds a {} s model, expected {l} s",
            p.display(),
            m.config().window_len_s
        )));
    }
    Ok(m)
}

/// 74-value feature vectors of every consecutive `L`-second segment of a
/// 128 Hz recording.
pub fn segment_features(rec: &EegRecording, model: &ChannelModel) -> Result<Vec<Vec<f64>>> {
    let map = map_channels_to_regions(&rec.channels)?;
    let plan = model.plan();
    let per_channel: Vec<Vec<&[f64]>> = rec.samples.iter().map(|x| extract_windows(x, &plan)).collect();
    let n_seg = per_channel[0].len();
    let c = per_channel.len();
    let mut flat: Vec<&[f64]> = Vec::with_capacity(n_seg * c);
    for s in 0..n_seg {
        for ch in &per_channel {
            flat.push(ch[s]);
        }
    }
    let probs = model.predict_proba_batch(&flat)?;
    (0..n_seg)
        .map(|s| assemble_features(&probs[s * c..(s + 1) * c], &flat[s * c..(s + 1) * c], &map))
        .collect()
}

fn feature_rows(d: &Loaded, model: &ChannelModel, l: usize) -> Result<Vec<FeatureRow>> {
    let feats = segment_features(&d.recording, model)?;
    Ok(feats
        .into_iter()
        .enumerate()
        .map(|(s, features)| {
            let start = (s * l) as f64;
            FeatureRow {
                segment_id: format!("{}_{s:05}", d.recording.patient_id),
                patient_id: d.recording.patient_id.clone(),
                start_s: start,
                features,
                labels: SegmentLabels::from_events(&d.events, start, start + l as f64),
            }
        })
        .collect())
}

pub fn cmd_extract_features(cfg: &ExperimentConfig, layout: &Layout) -> Result<()> {
    let mut models = Vec::new();
    for l in cfg.window_lengths() {
        for t in cfg.types() {
            models.push((t, l, load_channel_model(layout, t, l)?));
        }
    }
    let data = load_preprocessed(layout)?;
    for (t, l, model) in models {
        let started = Instant::now();
        let rows: Vec<FeatureRow> = par_map(&data, |d| feature_rows(d, &model, l))?
            .into_iter()
            .flatten()
            .collect();
        let table = FeatureTable {
            artifact_type: t,
            window_len_s: l,
            rows,
        };
        let path = layout.features(t, l);
        if let Some(dir) = path.parent() {
            mkdirs(dir)?;
        }
        table.write_csv(&path)?;
        println!(
            "features {t} L={l}: {} segments, {:.0} s",
            table.rows.len(),
            started.elapsed().as_secs_f64()
        );
    }
    Ok(())
}

pub fn load_features(layout: &Layout, t: ArtifactType, l: usize) -> Result<FeatureTable> {
    let p = layout.features(t, l);
    if !p.exists() {
        return Err(Error::Missing(format!(
            "features for ({t}, L={l}) not found at {} (run `eegart extract-features`)",
            p.display()
        )));
    }
    FeatureTable::read_csv(&p)
}
