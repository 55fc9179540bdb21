use serde::{Deserialize, Serialize};

use super::metrics::{auprc, rates_at_threshold, roc_auc};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auc: f64,
    pub auprc: f64,
    pub acc: f64,
    pub bac: f64,
    pub sen: f64,
    pub spe: f64,
    pub threshold: f64,
}

/// All six metrics at one threshold.
pub fn binary_report(scores: &[f64], labels: &[bool], threshold: f64) -> Result<MetricsReport> {
    let r = rates_at_threshold(scores, labels, threshold)?;
    Ok(MetricsReport {
        auc: roc_auc(scores, labels)?,
        auprc: auprc(scores, labels)?,
        acc: r.acc,
        bac: r.bac,
        sen: r.sen,
        spe: r.spe,
        threshold,
    })
}

/// Field-wise mean of per-fold reports.
pub fn mean_report(reports: &[MetricsReport]) -> Result<MetricsReport> {
    if reports.is_empty() {
        return Err(Error::Empty("no fold reports".into()));
    }
    let n = reports.len() as f64;
    let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    Ok(MetricsReport {
        auc: avg(|r| r.auc),
        auprc: avg(|r| r.auprc),
        acc: avg(|r| r.acc),
        bac: avg(|r| r.bac),
        sen: avg(|r| r.sen),
        spe: avg(|r| r.spe),
        threshold: avg(|r| r.threshold),
    })
}

/// Population standard deviation of one field across folds.
pub fn fold_std(reports: &[MetricsReport], f: fn(&MetricsReport) -> f64) -> f64 {
    let n = reports.len().max(1) as f64;
    let m = reports.iter().map(f).sum::<f64>() / n;
    (reports.iter().map(|r| (f(r) - m).powi(2)).sum::<f64>() / n).sqrt()
}

/// Rows of strings rendered either as an aligned text table or as CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub title: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(title: impl Into<String>, headers: impl IntoIterator<Item = S>) -> Self {
        Table {
            title: title.into(),
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<S: Into<String>>(&mut self, row: impl IntoIterator<Item = S>) {
        self.rows.push(row.into_iter().map(Into::into).collect());
    }

    pub fn to_text(&self) -> String {
        let cols = self.headers.len();
        let mut w: Vec<usize> = self.headers.iter().map(|h| h.chars().count()).collect();
        for r in &self.rows {
            for (i, c) in r.iter().enumerate().take(cols) {
                w[i] = w[i].max(c.chars().count());
            }
        }
        let line = |cells: &[String]| {
            cells
                .iter()
                .enumerate()
                .map(|(i, c)| format!("{c:>width$}", width = w[i]))
                .collect::<Vec<_>>()
                .join("  ")
        };
        let mut out = String::new();
        if !self.title.is_empty() {
            out.push_str(&self.title);
            out.push('\n');
        }
        out.push_str(&line(&self.headers));
        out.push('\n');
        out.push_str(&"-".repeat(w.iter().sum::<usize>() + 2 * cols.saturating_sub(1)));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.headers.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn fmt3(v: f64) -> String {
    format!("{v:.3}")
}

/// Confusion matrix as a CSV grid with class names on both axes.
pub fn matrix_csv(m: &[Vec<u64>], names: &[&str]) -> String {
    let mut out = String::from("true\\pred");
    for n in names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for (r, row) in m.iter().enumerate() {
        out.push_str(names.get(r).copied().unwrap_or("?"));
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_alignment() {
        let mut t = Table::new("T", ["type", "BAC"]);
        t.push(["eyem", "0.950"]);
        let s = t.to_text();
        assert!(s.contains("type    BAC"));
        assert_eq!(t.to_csv(), "type,BAC\neyem,0.950\n");
    }

    #[test]
    fn mean_of_reports() {
        let a = binary_report(&[0.9, 0.1], &[true, false], 0.5).unwrap();
        let m = mean_report(&[a, a]).unwrap();
        assert_eq!(m, a);
        assert!(mean_report(&[]).is_err());
    }
}
