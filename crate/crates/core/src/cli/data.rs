use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::layout::{mkdirs, read_index, write_index, write_text, DatasetEntry, Layout};
use crate::dataio::{
    covered_time, generate_synthetic_corpus, load_annotations, load_recording, save_recording_binary,
    write_annotations, ArtifactEvent, ArtifactType, EegRecording, SampleWidth,
};
use crate::dsp::{Preprocessor, TARGET_RATE_HZ};
use crate::error::{Error, Result};
use crate::evalkit::Table;

/// A recording with its validated annotations.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub entry: DatasetEntry,
    pub recording: EegRecording,
    pub events: Vec<ArtifactEvent>,
}

fn event_seconds(events: &[ArtifactEvent]) -> [f64; 5] {
    let mut s = [0.0; 5];
    for e in events {
        s[e.label.index()] += e.duration_s();
    }
    s
}

fn load_entry(dir: &Path, entry: &DatasetEntry) -> Result<Loaded> {
    let recording = load_recording(&dir.join(&entry.recording))?;
    let events = load_annotations(&dir.join(&entry.annotations), &recording)?;
    Ok(Loaded {
        entry: entry.clone(),
        recording,
        events,
    })
}

pub fn load_dir(dir: &Path, what: &str, hint: &str) -> Result<Vec<Loaded>> {
    let index = read_index(dir, what, hint)?;
    if index.is_empty() {
        return Err(Error::Empty(format!("{what} at {} lists no recordings", dir.display())));
    }
    super::layout::par_map(&index, |e| load_entry(dir, e))
}

pub fn load_preprocessed(layout: &Layout) -> Result<Vec<Loaded>> {
    let data = load_dir(&layout.preprocessed_dir(), "preprocessed data", "eegart preprocess")?;
    if let Some(d) = data.iter().find(|d| d.recording.sample_rate_hz != TARGET_RATE_HZ) {
        return Err(Error::PlanMismatch(format!(
            "{} is at {} Hz, expected {TARGET_RATE_HZ} Hz",
            d.entry.recording, d.recording.sample_rate_hz
        )));
    }
    Ok(data)
}

/// Corpus table: one row per artifact type plus background, with
/// annotation counts, covered time (union over channels) and summed
/// channel-seconds.
pub fn corpus_summary(data: &[Loaded]) -> Table {
    let mut t = Table::new("Corpus summary", ["type", "description", "events", "duration_s", "channel_s"]);
    let mut total = 0.0;
    let mut clean = 0.0;
    for d in data {
        let dur = d.recording.duration_s();
        total += dur;
        clean += dur - covered_time(d.events.iter(), 0.0, dur);
    }
    for ty in ArtifactType::ALL {
        let n: usize = data.iter().map(|d| d.events.iter().filter(|e| e.label == ty).count()).sum();
        let union: f64 = data
            .iter()
            .map(|d| covered_time(d.events.iter().filter(|e| e.label == ty), 0.0, d.recording.duration_s()))
            .sum();
        let chan: f64 = data.iter().map(|d| event_seconds(&d.events)[ty.index()]).sum();
        t.push([
            ty.to_string(),
            ty.description().to_string(),
            n.to_string(),
            format!("{union:.1}"),
            format!("{chan:.1}"),
        ]);
    }
    t.push([
        "bckg".to_string(),
        "Background".to_string(),
        "-".to_string(),
        format!("{clean:.1}"),
        "-".to_string(),
    ]);
    t.push([
        "total".to_string(),
        format!("{} recordings", data.len()),
        "-".to_string(),
        format!("{total:.1}"),
        "-".to_string(),
    ]);
    t
}

pub fn emit_table(layout: &Layout, name: &str, table: &Table) -> Result<()> {
    print!("{}", table.to_text());
    println!();
    let dir = layout.reports_dir();
    write_text(&dir.join(format!("{name}.txt")), &table.to_text())?;
    write_text(&dir.join(format!("{name}.csv")), &table.to_csv())
}

pub fn cmd_synth(cfg: &ExperimentConfig, layout: &Layout) -> Result<()> {
    let dir = layout.corpus_dir();
    log::info!(
        "generating {} synthetic recordings of {} s into {}",
        cfg.synth.n_patients,
        cfg.synth.duration_s,
        dir.display()
    );
    let entries = generate_synthetic_corpus(&cfg.synth, &dir)?;
    let file_name = |p: &PathBuf| p.file_name().expect("generated file").to_string_lossy().into_owned();
    let index: Vec<DatasetEntry> = entries
        .iter()
        .map(|e| DatasetEntry {
            patient_id: e.patient_id.clone(),
            recording: file_name(&e.recording),
            annotations: file_name(&e.annotations),
            duration_s: e.duration_s,
            event_seconds: e.event_seconds,
        })
        .collect();
    write_index(&dir, &index)?;
    let data = load_dir(&dir, "corpus", "eegart synth")?;
    emit_table(layout, "corpus_summary", &corpus_summary(&data))
}

fn preprocess_one(cfg: &ExperimentConfig, src: &Path, out: &Path, entry: &DatasetEntry) -> Result<DatasetEntry> {
    let d = load_entry(src, entry)?;
    let pre = Preprocessor::new(&cfg.preprocess, d.recording.sample_rate_hz)?;
    let samples = d
        .recording
        .samples
        .iter()
        .map(|x| pre.run(x))
        .collect::<Result<Vec<_>>>()?;
    let rec = EegRecording::new(
        d.recording.patient_id.clone(),
        TARGET_RATE_HZ,
        d.recording.channels.clone(),
        samples,
    )?;
    // Resampling may shave a fraction of a sample off the end.
    let dur = rec.duration_s();
    let events: Vec<ArtifactEvent> = d
        .events
        .into_iter()
        .filter(|e| e.start_s < dur)
        .map(|mut e| {
            e.stop_s = e.stop_s.min(dur);
            e
        })
        .collect();
    let stem = Path::new(&entry.recording)
        .file_stem()
        .map_or_else(|| entry.patient_id.clone(), |s| s.to_string_lossy().into_owned());
    let rname = format!("{stem}.eegr");
    let aname = format!("{stem}.csv");
    save_recording_binary(&rec, &out.join(&rname), SampleWidth::F32)?;
    write_annotations(&out.join(&aname), &events)?;
    Ok(DatasetEntry {
        patient_id: rec.patient_id.clone(),
        recording: rname,
        annotations: aname,
        duration_s: dur,
        event_seconds: event_seconds(&events),
    })
}

pub fn cmd_preprocess(cfg: &ExperimentConfig, layout: &Layout) -> Result<()> {
    let src = layout.corpus_dir();
    let out = layout.preprocessed_dir();
    let index = read_index(&src, "corpus", "eegart synth")?;
    mkdirs(&out)?;
    let done = super::layout::par_map(&index, |e| preprocess_one(cfg, &src, &out, e))?;
    write_index(&out, &done)?;
    println!(
        "preprocessed {} recordings to {} Hz in {}",
        done.len(),
        TARGET_RATE_HZ,
        out.display()
    );
    Ok(())
}
