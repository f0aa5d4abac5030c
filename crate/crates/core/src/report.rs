//! Delimited report rows shared by the pipeline stages.
//!
//! `metrics.tsv`: `hash dataset algorithm attribute metric value`, one row
//! per metric, so accuracy and diversity tables are pivots of this file.
//!
//! `audit.tsv`: `hash dataset attribute variant classifier mean_f1 std_f1`,
//! where `variant` is `none` (lists of the attribute-free model) or
//! `with-side-information` (lists of the model trained with `attribute`).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{DiversityReport, EvalReport};

pub const METRICS_HEADER: &str = "hash\tdataset\talgorithm\tattribute\tmetric\tvalue";
pub const AUDIT_HEADER: &str = "hash\tdataset\tattribute\tvariant\tclassifier\tmean_f1\tstd_f1";

pub const CLASSIFIER_LOGREG: &str = "logreg";
pub const CLASSIFIER_MOST_FREQUENT: &str = "most_frequent";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub hash: String,
    pub dataset: String,
    pub algorithm: String,
    pub attribute: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditRow {
    pub hash: String,
    pub dataset: String,
    pub attribute: String,
    pub variant: String,
    pub classifier: String,
    pub mean_f1: f64,
    pub std_f1: f64,
}

/// Accuracy and diversity of one list set as metric rows.
pub fn metric_rows(
    hash: &str,
    dataset: &str,
    algorithm: &str,
    attribute: &str,
    acc: &EvalReport,
    div: &DiversityReport,
) -> Vec<MetricRow> {
    [
        ("precision", acc.precision),
        ("recall", acc.recall),
        ("ndcg", acc.ndcg),
        ("hit_rate", acc.hit_rate),
        ("map", acc.map),
        ("item_coverage", div.item_coverage as f64),
        ("coverage_ratio", div.coverage_ratio),
        ("shannon_entropy", div.shannon_entropy),
        ("gini_diversity", div.gini_diversity),
    ]
    .into_iter()
    .map(|(metric, value)| MetricRow {
        hash: hash.to_owned(),
        dataset: dataset.to_owned(),
        algorithm: algorithm.to_owned(),
        attribute: attribute.to_owned(),
        metric: metric.to_owned(),
        value,
    })
    .collect()
}

pub fn metrics_to_tsv(rows: &[MetricRow]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.hash, r.dataset, r.algorithm, r.attribute, r.metric, r.value
        );
    }
    out
}

pub fn audit_to_tsv(rows: &[AuditRow]) -> String {
    let mut out = format!("{AUDIT_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.hash, r.dataset, r.attribute, r.variant, r.classifier, r.mean_f1, r.std_f1
        );
    }
    out
}

fn data_lines<'a>(
    text: &'a str,
    header: &'a str,
    path: &'a Path,
    columns: usize,
) -> impl Iterator<Item = Result<(usize, Vec<&'a str>)>> + 'a {
    text.lines()
        .enumerate()
        .filter(move |(_, l)| !l.is_empty() && *l != header)
        .map(move |(i, l)| {
            let f: Vec<&str> = l.split('\t').collect();
            if f.len() == columns {
                Ok((i + 1, f))
            } else {
                Err(Error::parse(path, i + 1, format!("expected {columns} columns, found {}", f.len())))
            }
        })
}

fn number(raw: &str, path: &Path, line: usize) -> Result<f64> {
    raw.parse()
        .map_err(|_| Error::parse(path, line, format!("bad number `{raw}`")))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    data_lines(&text, METRICS_HEADER, path, 6)
        .map(|row| {
            let (line, f) = row?;
            Ok(MetricRow {
                hash: f[0].into(),
                dataset: f[1].into(),
                algorithm: f[2].into(),
                attribute: f[3].into(),
                metric: f[4].into(),
                value: number(f[5], path, line)?,
            })
        })
        .collect()
}

pub fn read_audit(path: &Path) -> Result<Vec<AuditRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    data_lines(&text, AUDIT_HEADER, path, 7)
        .map(|row| {
            let (line, f) = row?;
            Ok(AuditRow {
                hash: f[0].into(),
                dataset: f[1].into(),
                attribute: f[2].into(),
                variant: f[3].into(),
                classifier: f[4].into(),
                mean_f1: number(f[5], path, line)?,
                std_f1: number(f[6], path, line)?,
            })
        })
        .collect()
}
