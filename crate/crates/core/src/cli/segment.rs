use std::collections::BTreeMap;

use super::channel::load_features;
use super::config::{ExperimentConfig, FeatureSet};
use super::layout::{mkdirs, par_map, read_index, write_text, CsvTable, Layout};
use super::report;
use crate::dataio::{save_model, ArtifactType, ModelBundle};
use crate::error::{Error, Result};
use crate::evalkit::{check_disjoint, make_patient_folds, FoldPlan, PatientSummary, Table};
use crate::gbdt::{
    fit_boosted_binary, fit_multilabel, fit_one_vs_rest, grid_search, BoostedEnsemble,
    GbdtConfig,
};
use crate::segfeat::{FeatureTable, SegmentLabels, SEGMENT_POSITIVE_COVERAGE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Binary,
    Multiclass,
    Mcml,
    Combined,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Binary, Mode::Multiclass, Mode::Mcml, Mode::Combined];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Binary => "binary",
            Mode::Multiclass => "multiclass",
            Mode::Mcml => "mcml",
            Mode::Combined => "combined",
        }
    }
}

/// Feature tables of the enabled types at one window length, row-aligned.
pub struct SegmentSet {
    pub window_len_s: usize,
    pub types: Vec<ArtifactType>,
    pub tables: Vec<FeatureTable>,
}

impl SegmentSet {
    pub fn load(cfg: &ExperimentConfig, layout: &Layout, l: usize) -> Result<Self> {
        let types = cfg.types();
        let tables = types
            .iter()
            .map(|&t| load_features(layout, t, l))
            .collect::<Result<Vec<_>>>()?;
        let first = &tables[0];
        for t in &tables[1..] {
            let same = t.rows.len() == first.rows.len()
                && t.rows.iter().zip(&first.rows).all(|(a, b)| a.segment_id == b.segment_id);
            if !same {
                return Err(Error::Shape(format!(
                    "feature files at L={l} cover different segments; rerun extract-features"
                )));
            }
        }
        Ok(SegmentSet {
            window_len_s: l,
            types,
            tables,
        })
    }

    pub fn len(&self) -> usize {
        self.tables[0].rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self, i: usize) -> &SegmentLabels {
        &self.tables[0].rows[i].labels
    }

    pub fn patients(&self) -> Vec<String> {
        self.tables[0].rows.iter().map(|r| r.patient_id.clone()).collect()
    }

    /// Features of every enabled type, concatenated in canonical order.
    pub fn concat(&self, i: usize) -> Vec<f64> {
        self.tables.iter().flat_map(|t| t.rows[i].features.iter().copied()).collect()
    }

    pub fn binary_features(&self, t: ArtifactType, fs: FeatureSet, i: usize) -> Vec<f64> {
        match fs {
            FeatureSet::All => self.concat(i),
            FeatureSet::Specific => {
                let k = self.types.iter().position(|&x| x == t).expect("enabled type");
                self.tables[k].rows[i].features.clone()
            }
        }
    }

    pub fn meta(&self, i: usize) -> [String; 3] {
        let r = &self.tables[0].rows[i];
        [r.segment_id.clone(), r.patient_id.clone(), format!("{}", r.start_s)]
    }
}

fn positive(l: &SegmentLabels, t: ArtifactType) -> bool {
    l.coverage[t.index()] >= SEGMENT_POSITIVE_COVERAGE - 1e-9
}

/// Any enabled type qualifies → positive; untouched → negative; otherwise
/// excluded.
pub fn any_label(l: &SegmentLabels, types: &[ArtifactType]) -> Option<bool> {
    if types.iter().any(|&t| positive(l, t)) {
        Some(true)
    } else if !l.touched {
        Some(false)
    } else {
        None
    }
}

/// Class 0 is background, class `1 + k` the `k`-th enabled type with the
/// largest qualifying coverage.
pub fn multiclass_label(l: &SegmentLabels, types: &[ArtifactType]) -> Option<usize> {
    if !l.touched {
        return Some(0);
    }
    let mut best: Option<(usize, f64)> = None;
    for (k, &t) in types.iter().enumerate() {
        let c = l.coverage[t.index()];
        if positive(l, t) && best.is_none_or(|(_, b)| c > b) {
            best = Some((k + 1, c));
        }
    }
    best.map(|(k, _)| k)
}

/// Per-type flags when no enabled type is partially covered and the segment
/// is either clean or carries at least one qualifying label.
pub fn multilabel_label(l: &SegmentLabels, types: &[ArtifactType]) -> Option<Vec<bool>> {
    let mut out = Vec::with_capacity(types.len());
    for &t in types {
        let c = l.coverage[t.index()];
        if positive(l, t) {
            out.push(true);
        } else if c <= 0.0 {
            out.push(false);
        } else {
            return None;
        }
    }
    if out.iter().any(|&v| v) || !l.touched {
        Some(out)
    } else {
        None
    }
}

pub fn fold_plan(cfg: &ExperimentConfig, layout: &Layout) -> Result<FoldPlan> {
    let index = read_index(&layout.preprocessed_dir(), "preprocessed data", "eegart preprocess")?;
    let mut by_patient: BTreeMap<String, [f64; 5]> = BTreeMap::new();
    for e in &index {
        let d = by_patient.entry(e.patient_id.clone()).or_default();
        for (a, b) in d.iter_mut().zip(e.event_seconds) {
            *a += b;
        }
    }
    let patients: Vec<PatientSummary> = by_patient
        .into_iter()
        .map(|(patient_id, durations)| PatientSummary { patient_id, durations })
        .collect();
    let plan = make_patient_folds(&patients, cfg.experiment.folds, cfg.experiment.fold_seed)?;
    write_text(
        &layout.reports_dir().join("folds.json"),
        &(serde_json::to_string_pretty(&plan).expect("plan serializes") + "\n"),
    )?;
    Ok(plan)
}

/// Row indices of each fold's training and test sets; training rows are
/// restricted to `usable`.
fn fold_rows(plan: &FoldPlan, patients: &[String], usable: &[bool]) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let fold: Vec<usize> = patients
        .iter()
        .map(|p| {
            plan.fold_of(p)
                .ok_or_else(|| Error::Domain(format!("patient {p} is in no fold")))
        })
        .collect::<Result<_>>()?;
    (0..plan.k())
        .map(|f| {
            let train: Vec<usize> = (0..patients.len()).filter(|&i| fold[i] != f && usable[i]).collect();
            let test: Vec<usize> = (0..patients.len()).filter(|&i| fold[i] == f).collect();
            check_disjoint(
                train.iter().map(|&i| patients[i].as_str()),
                test.iter().map(|&i| patients[i].as_str()),
            )?;
            Ok((train, test))
        })
        .collect()
}

/// Grid search on an inner patient split, then a fit on all given rows.
pub fn fit_with_grid(
    cfg: &ExperimentConfig,
    x: &[Vec<f64>],
    y: &[bool],
    groups: &[String],
) -> Result<(BoostedEnsemble, GbdtConfig, Option<Table>)> {
    let grid = cfg.grid.expand(&cfg.gbdt);
    let (best, table) = if grid.len() <= 1 {
        (grid.into_iter().next().unwrap_or_else(|| cfg.gbdt.clone()), None)
    } else {
        match grid_search(x, y, groups, &grid, cfg.experiment.inner_split, cfg.gbdt.seed) {
            Ok((best, rows)) => {
                let mut t = Table::new("Grid search", ["max_depth", "n_trees", "learning_rate", "bac"]);
                for r in rows {
                    t.push([
                        r.config.max_depth.to_string(),
                        r.config.n_trees.to_string(),
                        r.config.learning_rate.to_string(),
                        r.bac.map_or_else(|| r.error.unwrap_or_default(), |b| format!("{b:.4}")),
                    ]);
                }
                (best, Some(t))
            }
            Err(Error::SingleClass(m)) => {
                log::warn!("grid search skipped ({m}); using the base configuration");
                (cfg.gbdt.clone(), None)
            }
            Err(e) => return Err(e),
        }
    };
    Ok((fit_boosted_binary(x, y, &best)?, best, table))
}

fn pick<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i].clone()).collect()
}

fn pick_some<T: Clone>(v: &[Option<T>], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i].clone().expect("usable row")).collect()
}

fn flag(v: Option<bool>) -> String {
    match v {
        Some(true) => "1".into(),
        Some(false) => "0".into(),
        None => String::new(),
    }
}

fn save_ensemble(layout: &Layout, name: &str, m: &BoostedEnsemble, meta: &[(&str, String)]) -> Result<()> {
    let mut b: ModelBundle = m.to_bundle()?;
    for (k, v) in meta {
        b.metadata.insert(k.to_string(), v.clone());
    }
    save_model(&b, &layout.segment_model(name))
}

pub fn binary_name(t: ArtifactType, l: usize) -> String {
    format!("binary_{t}_L{l}")
}

pub fn combined_name(l: usize) -> String {
    format!("combined_L{l}")
}

/// Cross-validated binary detector with out-of-fold scores for every
/// segment (labelled or not) and a final model on all labelled rows.
fn run_binary_task(
    cfg: &ExperimentConfig,
    layout: &Layout,
    plan: &FoldPlan,
    name: &str,
    x: &[Vec<f64>],
    y: &[Option<bool>],
    set: &SegmentSet,
    meta: &[(&str, String)],
) -> Result<()> {
    let patients = set.patients();
    let usable: Vec<bool> = y.iter().map(Option::is_some).collect();
    let folds = fold_rows(plan, &patients, &usable)?;
    let per_fold = par_map(&folds, |(train, test)| {
        let (m, _, _) = fit_with_grid(cfg, &pick(x, train), &pick_some(y, train), &pick(&patients, train))?;
        test.iter().map(|&i| m.predict_score(&x[i])).collect::<Result<Vec<f64>>>()
    })?;
    let mut oof = CsvTable::new(
        ["segment_id", "patient_id", "start_s", "fold", "label", "score"]
            .map(String::from)
            .to_vec(),
    );
    let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
    for (f, ((_, test), scores)) in folds.iter().zip(&per_fold).enumerate() {
        for (&i, s) in test.iter().zip(scores) {
            let mut r = set.meta(i).to_vec();
            r.push(f.to_string());
            r.push(flag(y[i]));
            r.push(format!("{s}"));
            rows.push((i, r));
        }
    }
    rows.sort_by_key(|(i, _)| *i);
    oof.rows = rows.into_iter().map(|(_, r)| r).collect();
    oof.write(&layout.oof(name))?;

    let all: Vec<usize> = (0..x.len()).filter(|&i| usable[i]).collect();
    let (m, best, grid) = fit_with_grid(cfg, &pick(x, &all), &pick_some(y, &all), &pick(&patients, &all))?;
    if let Some(g) = grid {
        write_text(&layout.reports_dir().join(format!("grid_{name}.csv")), &g.to_csv())?;
    }
    let mut meta = meta.to_vec();
    meta.push(("gbdt", serde_json::to_string(&best).expect("config serializes")));
    save_ensemble(layout, name, &m, &meta)
}

fn train_binary(cfg: &ExperimentConfig, layout: &Layout, plan: &FoldPlan, set: &SegmentSet) -> Result<()> {
    let l = set.window_len_s;
    let fs = cfg.experiment.feature_set;
    for &t in &set.types {
        let x: Vec<Vec<f64>> = (0..set.len()).map(|i| set.binary_features(t, fs, i)).collect();
        let y: Vec<Option<bool>> = (0..set.len()).map(|i| set.labels(i).binary(t)).collect();
        let fs_name = serde_json::to_value(fs).expect("serializes").as_str().unwrap_or("").to_string();
        let types = set.types.iter().map(|t| t.as_str()).collect::<Vec<_>>().join(" ");
        run_binary_task(
            cfg,
            layout,
            plan,
            &binary_name(t, l),
            &x,
            &y,
            set,
            &[
                ("artifact_type", t.to_string()),
                ("window_len_s", l.to_string()),
                ("feature_set", fs_name),
                ("types", types),
            ],
        )?;
        log::info!("binary {t} L={l} done");
    }
    Ok(())
}

/// Reads the binary out-of-fold scores of every enabled type as the
/// 5-column combined input (zeros for disabled types).
pub fn combined_inputs(layout: &Layout, set: &SegmentSet) -> Result<Vec<Vec<f64>>> {
    let l = set.window_len_s;
    let mut x = vec![vec![0.0; 5]; set.len()];
    for &t in &set.types {
        let p = layout.oof(&binary_name(t, l));
        if !p.exists() {
            return Err(Error::Missing(format!(
                "binary out-of-fold scores for ({t}, L={l}) not found (run `eegart train-segment --mode binary`)"
            )));
        }
        let oof = CsvTable::read(&p)?;
        let (id, sc) = (oof.col("segment_id"), oof.col("score"));
        let (Some(id), Some(sc)) = (id, sc) else {
            return Err(Error::parse(&p, 1, "missing segment_id or score column"));
        };
        if oof.rows.len() != set.len() {
            return Err(Error::Shape(format!(
                "{} has {} rows for {} segments; rerun binary training",
                p.display(),
                oof.rows.len(),
                set.len()
            )));
        }
        for (i, r) in oof.rows.iter().enumerate() {
            if r[id] != set.meta(i)[0] {
                return Err(Error::parse(&p, i + 2, "segment order differs from the feature files"));
            }
            x[i][t.index()] = r[sc]
                .parse()
                .map_err(|_| Error::parse(&p, i + 2, format!("bad score {:?}", r[sc])))?;
        }
    }
    Ok(x)
}

fn train_combined(cfg: &ExperimentConfig, layout: &Layout, plan: &FoldPlan, set: &SegmentSet) -> Result<()> {
    let l = set.window_len_s;
    let x = combined_inputs(layout, set)?;
    let y: Vec<Option<bool>> = (0..set.len()).map(|i| any_label(set.labels(i), &set.types)).collect();
    let types = set.types.iter().map(|t| t.as_str()).collect::<Vec<_>>().join(" ");
    run_binary_task(
        cfg,
        layout,
        plan,
        &combined_name(l),
        &x,
        &y,
        set,
        &[("window_len_s", l.to_string()), ("types", types)],
    )
}

fn class_names(types: &[ArtifactType]) -> Vec<String> {
    std::iter::once("bckg".to_string())
        .chain(types.iter().map(|t| t.to_string()))
        .collect()
}

fn train_multiclass(cfg: &ExperimentConfig, layout: &Layout, plan: &FoldPlan, set: &SegmentSet) -> Result<()> {
    let l = set.window_len_s;
    let names = class_names(&set.types);
    let x: Vec<Vec<f64>> = (0..set.len()).map(|i| set.concat(i)).collect();
    let y: Vec<Option<usize>> = (0..set.len()).map(|i| multiclass_label(set.labels(i), &set.types)).collect();
    let patients = set.patients();
    let usable: Vec<bool> = y.iter().map(Option::is_some).collect();
    let folds = fold_rows(plan, &patients, &usable)?;
    let per_fold = par_map(&folds, |(train, test)| {
        let m = fit_one_vs_rest(&pick(&x, train), &pick_some(&y, train), names.len(), &cfg.gbdt)?;
        test.iter()
            .filter(|&&i| usable[i])
            .map(|&i| Ok((i, m.predict(&x[i])?, m.predict_scores(&x[i])?)))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut header: Vec<String> = ["segment_id", "patient_id", "start_s", "fold", "label", "pred"]
        .map(String::from)
        .to_vec();
    header.extend(names.iter().map(|n| format!("score_{n}")));
    let mut oof = CsvTable::new(header);
    let mut rows = Vec::new();
    for (f, preds) in per_fold.iter().enumerate() {
        for (i, pred, scores) in preds {
            let mut r = set.meta(*i).to_vec();
            r.push(f.to_string());
            r.push(names[y[*i].expect("usable")].clone());
            r.push(names[*pred].clone());
            r.extend(scores.iter().map(|s| s.map_or_else(String::new, |v| format!("{v}"))));
            rows.push((*i, r));
        }
    }
    rows.sort_by_key(|(i, _)| *i);
    oof.rows = rows.into_iter().map(|(_, r)| r).collect();
    oof.write(&layout.oof(&format!("multiclass_L{l}")))?;

    let all: Vec<usize> = (0..x.len()).filter(|&i| usable[i]).collect();
    let m = fit_one_vs_rest(&pick(&x, &all), &pick_some(&y, &all), names.len(), &cfg.gbdt)?;
    for (name, head) in names.iter().zip(&m.heads) {
        if let Some(h) = head {
            save_ensemble(
                layout,
                &format!("multiclass_L{l}_{name}"),
                h,
                &[("window_len_s", l.to_string()), ("class", name.clone())],
            )?;
        }
    }
    Ok(())
}

fn train_mcml(cfg: &ExperimentConfig, layout: &Layout, plan: &FoldPlan, set: &SegmentSet) -> Result<()> {
    let l = set.window_len_s;
    let x: Vec<Vec<f64>> = (0..set.len()).map(|i| set.concat(i)).collect();
    let y: Vec<Option<Vec<bool>>> = (0..set.len()).map(|i| multilabel_label(set.labels(i), &set.types)).collect();
    let patients = set.patients();
    let usable: Vec<bool> = y.iter().map(Option::is_some).collect();
    let folds = fold_rows(plan, &patients, &usable)?;
    let per_fold = par_map(&folds, |(train, test)| {
        let m = fit_multilabel(&pick(&x, train), &pick_some(&y, train), &cfg.gbdt)?;
        test.iter()
            .filter(|&&i| usable[i])
            .map(|&i| Ok((i, m.predict_scores(&x[i])?)))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut header: Vec<String> = ["segment_id", "patient_id", "start_s", "fold"].map(String::from).to_vec();
    header.extend(set.types.iter().map(|t| format!("label_{t}")));
    header.extend(set.types.iter().map(|t| format!("score_{t}")));
    let mut oof = CsvTable::new(header);
    let mut rows = Vec::new();
    for (f, preds) in per_fold.iter().enumerate() {
        for (i, scores) in preds {
            let mut r = set.meta(*i).to_vec();
            r.push(f.to_string());
            r.extend(y[*i].as_ref().expect("usable").iter().map(|&b| flag(Some(b))));
            r.extend(scores.iter().map(|s| s.map_or_else(String::new, |v| format!("{v}"))));
            rows.push((*i, r));
        }
    }
    rows.sort_by_key(|(i, _)| *i);
    oof.rows = rows.into_iter().map(|(_, r)| r).collect();
    oof.write(&layout.oof(&format!("mcml_L{l}")))?;

    let all: Vec<usize> = (0..x.len()).filter(|&i| usable[i]).collect();
    let m = fit_multilabel(&pick(&x, &all), &pick_some(&y, &all), &cfg.gbdt)?;
    for (t, head) in set.types.iter().zip(&m.heads) {
        if let Some(h) = head {
            save_ensemble(
                layout,
                &format!("mcml_L{l}_{t}"),
                h,
                &[("window_len_s", l.to_string()), ("artifact_type", t.to_string())],
            )?;
        }
    }
    Ok(())
}

pub fn cmd_train_segment(cfg: &ExperimentConfig, layout: &Layout, mode: Mode) -> Result<()> {
    let sets = cfg
        .window_lengths()
        .into_iter()
        .map(|l| SegmentSet::load(cfg, layout, l))
        .collect::<Result<Vec<_>>>()?;
    if mode == Mode::Combined {
        for set in &sets {
            combined_inputs(layout, set)?;
        }
    }
    let plan = fold_plan(cfg, layout)?;
    log::info!("fold sizes {:?}", plan.folds.iter().map(Vec::len).collect::<Vec<_>>());
    mkdirs(&layout.segment_dir())?;
    for set in &sets {
        if set.is_empty() {
            return Err(Error::Empty(format!("no segments at L={}", set.window_len_s)));
        }
        match mode {
            Mode::Binary => train_binary(cfg, layout, &plan, set)?,
            Mode::Multiclass => train_multiclass(cfg, layout, &plan, set)?,
            Mode::Mcml => train_mcml(cfg, layout, &plan, set)?,
            Mode::Combined => train_combined(cfg, layout, &plan, set)?,
        }
    }
    report::render(cfg, layout, mode)?;
    Ok(())
}
