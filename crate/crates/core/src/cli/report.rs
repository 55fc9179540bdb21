use std::path::Path;

use super::config::ExperimentConfig;
use super::data::emit_table;
use super::layout::{write_text, CsvTable, Layout};
use super::segment::{binary_name, combined_name, Mode};
use crate::error::{Error, Result};
use crate::evalkit::{
    binary_report, confusion_matrix_multiclass, fmt3, fold_std, matrix_csv, mean_report, multiclass_accuracy,
    multiclass_bac, roc_curve, sen_at_spe, sum_matrices, MetricsReport, Table,
};

/// Specificity targets of the combined detector report.
pub const SPE_TARGETS: [f64; 3] = [0.95, 0.97, 0.99];

fn pm(mean: f64, std: f64) -> String {
    format!("{mean:.3} ± {std:.3}")
}

fn parse_f(path: &Path, line: usize, s: &str) -> Result<f64> {
    if s.is_empty() {
        return Ok(0.0);
    }
    s.parse().map_err(|_| Error::parse(path, line, format!("bad number {s:?}")))
}

fn col(t: &CsvTable, path: &Path, name: &str) -> Result<usize> {
    t.col(name)
        .ok_or_else(|| Error::parse(path, 1, format!("missing column {name}")))
}

/// Labelled `(fold, label, score)` triples of a binary out-of-fold file.
fn read_binary_oof(path: &Path) -> Result<Vec<(usize, bool, f64)>> {
    let t = CsvTable::read(path)?;
    let (f, l, s) = (col(&t, path, "fold")?, col(&t, path, "label")?, col(&t, path, "score")?);
    let mut out = Vec::new();
    for (i, r) in t.rows.iter().enumerate() {
        let label = match r[l].as_str() {
            "" => continue,
            "1" => true,
            "0" => false,
            other => return Err(Error::parse(path, i + 2, format!("bad label {other:?}"))),
        };
        let fold = r[f]
            .parse()
            .map_err(|_| Error::parse(path, i + 2, "bad fold index"))?;
        out.push((fold, label, parse_f(path, i + 2, &r[s])?));
    }
    Ok(out)
}

fn split_folds(rows: &[(usize, bool, f64)]) -> Vec<(Vec<f64>, Vec<bool>)> {
    let k = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let mut out = vec![(Vec::new(), Vec::new()); k];
    for &(f, y, s) in rows {
        out[f].0.push(s);
        out[f].1.push(y);
    }
    out
}

/// Per-fold reports at 0.5 (folds lacking a class are skipped) and the
/// pooled report.
fn fold_reports(rows: &[(usize, bool, f64)]) -> Result<(Vec<MetricsReport>, MetricsReport)> {
    let per: Vec<MetricsReport> = split_folds(rows)
        .iter()
        .filter_map(|(s, y)| binary_report(s, y, 0.5).ok())
        .collect();
    let scores: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let labels: Vec<bool> = rows.iter().map(|r| r.1).collect();
    Ok((per, binary_report(&scores, &labels, 0.5)?))
}

const METRICS: [(&str, fn(&MetricsReport) -> f64); 6] = [
    ("auc", |r| r.auc),
    ("auprc", |r| r.auprc),
    ("acc", |r| r.acc),
    ("bac", |r| r.bac),
    ("sen", |r| r.sen),
    ("spe", |r| r.spe),
];

fn metrics_tables(title: &str, key_cols: &[&str]) -> (Table, Table) {
    let mut th: Vec<String> = key_cols.iter().map(|s| s.to_string()).collect();
    th.extend(METRICS.iter().map(|(n, _)| n.to_ascii_uppercase()));
    let mut ch: Vec<String> = key_cols.iter().map(|s| s.to_string()).collect();
    ch.push("n_folds".into());
    for (n, _) in METRICS {
        ch.push(n.into());
        ch.push(format!("{n}_std"));
    }
    ch.extend(["pooled_auc", "pooled_bac", "n_segments"].map(String::from));
    (Table::new(title, th), Table::new(title, ch))
}

fn push_metrics(text: &mut Table, csv: &mut Table, keys: Vec<String>, per: &[MetricsReport], pooled: &MetricsReport, n: usize) -> Result<()> {
    let mean = mean_report(per)?;
    let mut tr = keys.clone();
    let mut cr = keys;
    cr.push(per.len().to_string());
    for (_, f) in METRICS {
        tr.push(pm(f(&mean), fold_std(per, f)));
        cr.push(format!("{:.6}", f(&mean)));
        cr.push(format!("{:.6}", fold_std(per, f)));
    }
    cr.push(format!("{:.6}", pooled.auc));
    cr.push(format!("{:.6}", pooled.bac));
    cr.push(n.to_string());
    text.push(tr);
    csv.push(cr);
    Ok(())
}

fn emit_pair(layout: &Layout, name: &str, text: &Table, csv: &Table) -> Result<()> {
    print!("{}", text.to_text());
    println!();
    let dir = layout.reports_dir();
    write_text(&dir.join(format!("{name}.txt")), &text.to_text())?;
    write_text(&dir.join(format!("{name}.csv")), &csv.to_csv())
}

fn roc_file(layout: &Layout, name: &str, rows: &[(usize, bool, f64)]) -> Result<()> {
    let scores: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let labels: Vec<bool> = rows.iter().map(|r| r.1).collect();
    let mut s = String::from("fpr,tpr\n");
    for (fpr, tpr) in roc_curve(&scores, &labels)? {
        s.push_str(&format!("{fpr},{tpr}\n"));
    }
    write_text(&layout.reports_dir().join(format!("roc_{name}.csv")), &s)
}

fn render_binary(cfg: &ExperimentConfig, layout: &Layout) -> Result<usize> {
    let (mut text, mut csv) = metrics_tables("Binary segment-level detection (fold mean ± std)", &["type", "L"]);
    let mut found = 0;
    for t in cfg.types() {
        for l in cfg.window_lengths() {
            let name = binary_name(t, l);
            let path = layout.oof(&name);
            if !path.exists() {
                continue;
            }
            let rows = read_binary_oof(&path)?;
            let (per, pooled) = match fold_reports(&rows) {
                Ok(r) if !r.0.is_empty() => r,
                _ => {
                    log::warn!("{name}: labelled segments lack a class; no metrics");
                    continue;
                }
            };
            push_metrics(&mut text, &mut csv, vec![t.to_string(), l.to_string()], &per, &pooled, rows.len())?;
            roc_file(layout, &name, &rows)?;
            found += 1;
        }
    }
    if found > 0 {
        emit_pair(layout, "binary", &text, &csv)?;
    }
    Ok(found)
}

fn render_combined(cfg: &ExperimentConfig, layout: &Layout) -> Result<usize> {
    let mut th = vec!["L".to_string(), "AUC".to_string()];
    let mut ch = vec!["window_len_s".to_string(), "pooled_auc".to_string(), "n_folds".to_string()];
    for t in SPE_TARGETS {
        let p = (t * 100.0).round();
        th.push(format!("SEN@{p}"));
        th.push(format!("Th@{p}"));
        for k in ["sen", "sen_std", "th", "th_std", "pooled_sen", "pooled_th"] {
            ch.push(format!("{k}{p}"));
        }
    }
    let mut text = Table::new("Combined detector: sensitivity at fixed specificity (fold mean ± std)", th);
    let mut csv = Table::new("combined", ch);
    let mut found = 0;
    for l in cfg.window_lengths() {
        let name = combined_name(l);
        let path = layout.oof(&name);
        if !path.exists() {
            continue;
        }
        let rows = read_binary_oof(&path)?;
        let scores: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let labels: Vec<bool> = rows.iter().map(|r| r.1).collect();
        let auc = crate::evalkit::roc_auc(&scores, &labels)?;
        let folds: Vec<(Vec<f64>, Vec<bool>)> = split_folds(&rows)
            .into_iter()
            .filter(|(_, y)| y.iter().any(|&v| v) && y.iter().any(|&v| !v))
            .collect();
        let mut tr = vec![l.to_string(), fmt3(auc)];
        let mut cr = vec![l.to_string(), format!("{auc:.6}"), folds.len().to_string()];
        for target in SPE_TARGETS {
            let per = folds
                .iter()
                .map(|(s, y)| sen_at_spe(s, y, target))
                .collect::<Result<Vec<_>>>()?;
            let n = per.len().max(1) as f64;
            let ms = per.iter().map(|r| r.sen).sum::<f64>() / n;
            let mt = per.iter().map(|r| r.threshold).sum::<f64>() / n;
            let ss = (per.iter().map(|r| (r.sen - ms).powi(2)).sum::<f64>() / n).sqrt();
            let st = (per.iter().map(|r| (r.threshold - mt).powi(2)).sum::<f64>() / n).sqrt();
            let pooled = sen_at_spe(&scores, &labels, target)?;
            tr.push(pm(ms, ss));
            tr.push(pm(mt, st));
            for v in [ms, ss, mt, st, pooled.sen, pooled.threshold] {
                cr.push(format!("{v:.6}"));
            }
        }
        text.push(tr);
        csv.push(cr);
        roc_file(layout, &name, &rows)?;
        found += 1;
    }
    if found > 0 {
        emit_pair(layout, "combined", &text, &csv)?;
    }
    Ok(found)
}

fn render_multiclass(cfg: &ExperimentConfig, layout: &Layout) -> Result<usize> {
    let mut text = Table::new(
        "Multi-class detection (per-class one-vs-rest from pooled confusion; overall fold mean ± std)",
        ["L", "class", "n", "SEN", "SPE", "BAC", "ACC"],
    );
    let mut csv = Table::new("multiclass", ["window_len_s", "class", "n", "sen", "spe", "bac", "acc", "bac_std", "acc_std"]);
    let mut found = 0;
    for l in cfg.window_lengths() {
        let path = layout.oof(&format!("multiclass_L{l}"));
        if !path.exists() {
            continue;
        }
        let t = CsvTable::read(&path)?;
        let names: Vec<String> = t
            .header
            .iter()
            .filter_map(|h| h.strip_prefix("score_").map(String::from))
            .collect();
        let (fc, lc, pc) = (col(&t, &path, "fold")?, col(&t, &path, "label")?, col(&t, &path, "pred")?);
        let idx = |s: &str, line: usize| {
            names
                .iter()
                .position(|n| n == s)
                .ok_or_else(|| Error::parse(&path, line, format!("unknown class {s:?}")))
        };
        let mut per_fold: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
        for (i, r) in t.rows.iter().enumerate() {
            let f: usize = r[fc].parse().map_err(|_| Error::parse(&path, i + 2, "bad fold index"))?;
            if per_fold.len() <= f {
                per_fold.resize(f + 1, (Vec::new(), Vec::new()));
            }
            per_fold[f].0.push(idx(&r[pc], i + 2)?);
            per_fold[f].1.push(idx(&r[lc], i + 2)?);
        }
        let mats = per_fold
            .iter()
            .filter(|(p, _)| !p.is_empty())
            .map(|(p, y)| confusion_matrix_multiclass(p, y, names.len()))
            .collect::<Result<Vec<_>>>()?;
        let pooled = sum_matrices(&mats);
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        write_text(
            &layout.reports_dir().join(format!("multiclass_L{l}_confusion.csv")),
            &matrix_csv(&pooled, &refs),
        )?;
        let total: u64 = pooled.iter().flatten().sum();
        for (c, name) in names.iter().enumerate() {
            let n: u64 = pooled[c].iter().sum();
            let tp = pooled[c][c];
            let fp: u64 = (0..names.len()).filter(|&r| r != c).map(|r| pooled[r][c]).sum();
            let neg = total - n;
            let sen = if n > 0 { tp as f64 / n as f64 } else { f64::NAN };
            let spe = if neg > 0 { (neg - fp) as f64 / neg as f64 } else { f64::NAN };
            let bac = (sen + spe) / 2.0;
            text.push([l.to_string(), name.clone(), n.to_string(), fmt3(sen), fmt3(spe), fmt3(bac), "-".into()]);
            csv.push([
                l.to_string(),
                name.clone(),
                n.to_string(),
                format!("{sen:.6}"),
                format!("{spe:.6}"),
                format!("{bac:.6}"),
                String::new(),
                String::new(),
                String::new(),
            ]);
        }
        let bacs: Vec<f64> = mats.iter().map(|m| multiclass_bac(m)).collect();
        let accs: Vec<f64> = mats.iter().map(|m| multiclass_accuracy(m)).collect();
        let ms = |v: &[f64]| {
            let n = v.len().max(1) as f64;
            let m = v.iter().sum::<f64>() / n;
            (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
        };
        let ((bm, bs), (am, as_)) = (ms(&bacs), ms(&accs));
        text.push([l.to_string(), "all".into(), total.to_string(), "-".into(), "-".into(), pm(bm, bs), pm(am, as_)]);
        csv.push([
            l.to_string(),
            "all".into(),
            total.to_string(),
            String::new(),
            String::new(),
            format!("{bm:.6}"),
            format!("{am:.6}"),
            format!("{bs:.6}"),
            format!("{as_:.6}"),
        ]);
        found += 1;
    }
    if found > 0 {
        emit_pair(layout, "multiclass", &text, &csv)?;
    }
    Ok(found)
}

fn render_mcml(cfg: &ExperimentConfig, layout: &Layout) -> Result<usize> {
    let (mut text, mut csv) = metrics_tables("Multi-class multi-label detection (fold mean ± std)", &["L", "type"]);
    let mut subset = Table::new("Multi-label subset accuracy", ["L", "segments", "multi_label_segments", "exact_match", "hamming_acc"]);
    let mut found = 0;
    for l in cfg.window_lengths() {
        let path = layout.oof(&format!("mcml_L{l}"));
        if !path.exists() {
            continue;
        }
        let t = CsvTable::read(&path)?;
        let fc = col(&t, &path, "fold")?;
        let types: Vec<String> = t
            .header
            .iter()
            .filter_map(|h| h.strip_prefix("label_").map(String::from))
            .collect();
        let mut exact = 0usize;
        let mut multi = 0usize;
        let mut hamming = 0usize;
        let mut per_type: Vec<Vec<(usize, bool, f64)>> = vec![Vec::new(); types.len()];
        for (i, r) in t.rows.iter().enumerate() {
            let f: usize = r[fc].parse().map_err(|_| Error::parse(&path, i + 2, "bad fold index"))?;
            let mut all_ok = true;
            let mut positives = 0;
            for (k, ty) in types.iter().enumerate() {
                let y = r[col(&t, &path, &format!("label_{ty}"))?] == "1";
                let s = parse_f(&path, i + 2, &r[col(&t, &path, &format!("score_{ty}"))?])?;
                positives += usize::from(y);
                let ok = (s >= 0.5) == y;
                all_ok &= ok;
                hamming += usize::from(ok);
                per_type[k].push((f, y, s));
            }
            exact += usize::from(all_ok);
            multi += usize::from(positives >= 2);
        }
        for (ty, rows) in types.iter().zip(&per_type) {
            match fold_reports(rows) {
                Ok((per, pooled)) if !per.is_empty() => {
                    push_metrics(&mut text, &mut csv, vec![l.to_string(), ty.clone()], &per, &pooled, rows.len())?
                }
                _ => log::warn!("mcml L={l}: {ty} has a single class; no metrics"),
            }
        }
        let n = t.rows.len().max(1);
        subset.push([
            l.to_string(),
            t.rows.len().to_string(),
            multi.to_string(),
            fmt3(exact as f64 / n as f64),
            fmt3(hamming as f64 / (n * types.len().max(1)) as f64),
        ]);
        found += 1;
    }
    if found > 0 {
        emit_pair(layout, "mcml", &text, &csv)?;
        emit_table(layout, "mcml_subset", &subset)?;
    }
    Ok(found)
}

/// Renders the report tables of one mode from its out-of-fold files;
/// returns how many files were found.
pub fn render(cfg: &ExperimentConfig, layout: &Layout, mode: Mode) -> Result<usize> {
    match mode {
        Mode::Binary => render_binary(cfg, layout),
        Mode::Multiclass => render_multiclass(cfg, layout),
        Mode::Mcml => render_mcml(cfg, layout),
        Mode::Combined => render_combined(cfg, layout),
    }
}

pub fn cmd_eval(cfg: &ExperimentConfig, layout: &Layout, mode: Option<Mode>) -> Result<()> {
    let modes: Vec<Mode> = mode.map_or_else(|| Mode::ALL.to_vec(), |m| vec![m]);
    let mut found = 0;
    for m in modes {
        found += render(cfg, layout, m)?;
    }
    if found == 0 {
        return Err(Error::Missing(
            "no out-of-fold predictions to evaluate (run `eegart train-segment`)".into(),
        ));
    }
    Ok(())
}
