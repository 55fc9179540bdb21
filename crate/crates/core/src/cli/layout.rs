use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dataio::ArtifactType;
use crate::error::{Error, Result};

/// File locations inside one experiment directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.root.join("corpus")
    }

    pub fn preprocessed_dir(&self) -> PathBuf {
        self.root.join("preprocessed")
    }

    pub fn models_dir(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn channel_model(&self, t: ArtifactType, l: usize) -> PathBuf {
        self.models_dir().join(format!("channel_{t}_L{l}.bundle"))
    }

    pub fn channel_log(&self, t: ArtifactType, l: usize) -> PathBuf {
        self.models_dir().join(format!("channel_{t}_L{l}.log.csv"))
    }

    pub fn features(&self, t: ArtifactType, l: usize) -> PathBuf {
        self.root.join("features").join(format!("L{l}")).join(format!("{t}.csv"))
    }

    pub fn segment_dir(&self) -> PathBuf {
        self.models_dir().join("segment")
    }

    pub fn segment_model(&self, name: &str) -> PathBuf {
        self.segment_dir().join(format!("{name}.bundle"))
    }

    pub fn oof(&self, name: &str) -> PathBuf {
        self.segment_dir().join(format!("oof_{name}.csv"))
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn detect_dir(&self) -> PathBuf {
        self.root.join("detect")
    }

    pub fn lock(&self) -> PathBuf {
        self.root.join(".eegart.lock")
    }
}

/// Exclusive lock on an experiment directory, released on drop.
#[derive(Debug)]
pub struct ExperimentLock {
    path: PathBuf,
}

impl ExperimentLock {
    pub fn acquire(layout: &Layout) -> Result<Self> {
        mkdirs(&layout.root)?;
        let path = layout.lock();
        let mut f = OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                Error::Config(format!(
                    "experiment directory is locked by another run (remove {} if stale)",
                    path.display()
                ))
            } else {
                Error::io(&path, e)
            }
        })?;
        let _ = writeln!(f, "{}", std::process::id());
        Ok(ExperimentLock { path })
    }
}

impl Drop for ExperimentLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

pub fn mkdirs(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        mkdirs(dir)?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One recording of a corpus or preprocessed set; file names are relative
/// to the index's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub patient_id: String,
    pub recording: String,
    pub annotations: String,
    pub duration_s: f64,
    /// Annotated seconds per type, summed over channels.
    pub event_seconds: [f64; 5],
}

pub const INDEX_FILE: &str = "index.json";

pub fn write_index(dir: &Path, entries: &[DatasetEntry]) -> Result<()> {
    let text = serde_json::to_string_pretty(entries).expect("index serializes");
    write_text(&dir.join(INDEX_FILE), &(text + "\n"))
}

pub fn read_index(dir: &Path, what: &str, hint: &str) -> Result<Vec<DatasetEntry>> {
    let path = dir.join(INDEX_FILE);
    if !path.exists() {
        return Err(Error::Missing(format!("{what} not found at {} (run `{hint}` first)", dir.display())));
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(&path, e.line(), e.to_string()))
}

/// Plain comma-separated table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: Vec<String>) -> Self {
        CsvTable { header, rows: Vec::new() }
    }

    pub fn col(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        write_text(path, &s)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::parse(path, 1, "empty file"))?
            .split(',')
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, l) in lines.enumerate() {
            let r: Vec<String> = l.split(',').map(str::to_string).collect();
            if r.len() != header.len() {
                return Err(Error::parse(path, i + 2, format!("{} fields, expected {}", r.len(), header.len())));
            }
            rows.push(r);
        }
        Ok(CsvTable { header, rows })
    }
}

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Maps `f` over `items` on all cores, returning results in input order.
/// The first error (by index) wins.
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    let n = workers().min(items.len());
    if n <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<R>>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..n {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("no poisoned workers")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("no poisoned workers")
        .into_iter()
        .map(|r| r.expect("every item processed"))
        .collect()
}
