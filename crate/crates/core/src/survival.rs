//! Survival of user attributes into recommendation output.
//!
//! For each attribute, the classifier's macro-F1 and the recommender's nDCG
//! are compared between the attribute-free run and the run that trains with
//! the attribute. A positive classification difference means the attribute
//! signal survived into the Top-N lists.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Variant label of the attribute-free run.
pub const NO_ATTRIBUTE: &str = "none";
/// Variant label of a run trained with the audited attribute.
pub const WITH_ATTRIBUTE: &str = "with-side-information";

/// `variant - base`.
pub fn raw_difference(base: f64, variant: f64) -> f64 {
    variant - base
}

/// `(variant - base) / base`; undefined for a zero base.
pub fn percent_change(base: f64, variant: f64) -> Result<f64> {
    if base == 0.0 {
        return Err(Error::UndefinedChange);
    }
    Ok((variant - base) / base)
}

/// Mean macro-F1 of the attribute classifier on one variant's lists.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationScore {
    pub config_hash: String,
    pub attribute: String,
    /// [`NO_ATTRIBUTE`] or [`WITH_ATTRIBUTE`].
    pub variant: String,
    pub macro_f1: f64,
}

/// nDCG of one recommender variant; `variant` is [`NO_ATTRIBUTE`] or the
/// name of the attribute the model was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingScore {
    pub config_hash: String,
    pub variant: String,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalRow {
    pub attribute: String,
    pub class_base: f64,
    pub class_with: f64,
    pub class_raw_diff: f64,
    pub class_pct_change: f64,
    pub rec_base: f64,
    pub rec_with: f64,
    pub rec_raw_diff: f64,
    pub rec_pct_change: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalReport {
    pub config_hash: String,
    pub rows: Vec<SurvivalRow>,
}

fn single_hash<'a>(hashes: impl Iterator<Item = &'a str>) -> Result<String> {
    let set: BTreeSet<&str> = hashes.collect();
    match set.len() {
        0 => Ok(String::new()),
        1 => Ok(set.into_iter().next().unwrap_or_default().to_owned()),
        _ => Err(Error::Survival(format!(
            "report rows come from different configurations: {}",
            set.into_iter().collect::<Vec<_>>().join(", ")
        ))),
    }
}

/// One row per attribute, in the order given.
pub fn build_survival_report(
    attributes: &[String],
    classification: &[ClassificationScore],
    ranking: &[RankingScore],
) -> Result<SurvivalReport> {
    let config_hash = single_hash(
        classification
            .iter()
            .map(|c| c.config_hash.as_str())
            .chain(ranking.iter().map(|r| r.config_hash.as_str())),
    )?;
    let class_of = |attr: &str, variant: &str| {
        classification
            .iter()
            .find(|c| c.attribute == attr && c.variant == variant)
            .map(|c| c.macro_f1)
            .ok_or_else(|| {
                Error::Survival(format!("attribute `{attr}`: missing `{variant}` classification score"))
            })
    };
    let rank_of = |attr: &str, variant: &str| {
        ranking
            .iter()
            .find(|r| r.variant == variant)
            .map(|r| r.ndcg)
            .ok_or_else(|| {
                Error::Survival(format!("attribute `{attr}`: missing `{variant}` recommendation score"))
            })
    };
    let pct = |attr: &str, base: f64, with: f64| {
        percent_change(base, with)
            .map_err(|_| Error::Survival(format!("attribute `{attr}`: zero base value")))
    };
    let rows = attributes
        .iter()
        .map(|attr| {
            let class_base = class_of(attr, NO_ATTRIBUTE)?;
            let class_with = class_of(attr, WITH_ATTRIBUTE)?;
            let rec_base = rank_of(attr, NO_ATTRIBUTE)?;
            let rec_with = rank_of(attr, attr)?;
            Ok(SurvivalRow {
                attribute: attr.clone(),
                class_base,
                class_with,
                class_raw_diff: raw_difference(class_base, class_with),
                class_pct_change: pct(attr, class_base, class_with)?,
                rec_base,
                rec_with,
                rec_raw_diff: raw_difference(rec_base, rec_with),
                rec_pct_change: pct(attr, rec_base, rec_with)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SurvivalReport { config_hash, rows })
}

pub const SURVIVAL_HEADER: &str = "hash\tattribute\tclass_base\tclass_with\tclass_raw_diff\tclass_pct_change\trec_base\trec_with\trec_raw_diff\trec_pct_change";

/// Full-precision delimited rows.
pub fn survival_to_tsv(report: &SurvivalReport) -> String {
    let mut out = String::from(SURVIVAL_HEADER);
    out.push('\n');
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            report.config_hash,
            r.attribute,
            r.class_base,
            r.class_with,
            r.class_raw_diff,
            r.class_pct_change,
            r.rec_base,
            r.rec_with,
            r.rec_raw_diff,
            r.rec_pct_change
        );
    }
    out
}

/// Task rows by attribute columns: raw differences at four decimals,
/// percent changes at two.
pub fn survival_table(report: &SurvivalReport) -> String {
    let mut header = vec!["Task".to_string(), String::new()];
    header.extend(report.rows.iter().map(|r| r.attribute.clone()));
    let line = |task: &str, kind: &str, values: Vec<String>| {
        let mut v = vec![task.to_string(), kind.to_string()];
        v.extend(values);
        v
    };
    let rows = [
        header,
        line("Classification", "Raw difference", report.rows.iter().map(|r| format!("{:.4}", r.class_raw_diff)).collect()),
        line("", "% Change", report.rows.iter().map(|r| format!("{:.2}", r.class_pct_change)).collect()),
        line("Recommendation", "Raw difference", report.rows.iter().map(|r| format!("{:.4}", r.rec_raw_diff)).collect()),
        line("", "% Change", report.rows.iter().map(|r| format!("{:.2}", r.rec_pct_change)).collect()),
    ];
    let cols = rows[0].len();
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, &w))| if c < 2 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(hash: &str, base: f64, with: f64) -> (Vec<ClassificationScore>, Vec<RankingScore>) {
        let c = vec![
            ClassificationScore { config_hash: hash.into(), attribute: "gender".into(), variant: NO_ATTRIBUTE.into(), macro_f1: base },
            ClassificationScore { config_hash: hash.into(), attribute: "gender".into(), variant: WITH_ATTRIBUTE.into(), macro_f1: with },
        ];
        let r = vec![
            RankingScore { config_hash: hash.into(), variant: NO_ATTRIBUTE.into(), ndcg: 0.0888 },
            RankingScore { config_hash: hash.into(), variant: "gender".into(), ndcg: 0.1042 },
        ];
        (c, r)
    }

    #[test]
    fn differences() {
        assert!((raw_difference(0.4861, 0.5347) - 0.0486).abs() < 1e-12);
        assert_eq!(raw_difference(0.3, 0.3), 0.0);
        assert!((percent_change(0.4861, 0.5347).unwrap() - 0.09998).abs() < 1e-4);
        assert!((percent_change(0.2416, 0.2219).unwrap() + 0.0815).abs() < 1e-4);
        assert_eq!(percent_change(0.2, 0.2).unwrap(), 0.0);
        assert!(matches!(percent_change(0.0, 0.1), Err(Error::UndefinedChange)));
    }

    #[test]
    fn report_rows() {
        let (c, r) = inputs("h", 0.4861, 0.5347);
        let rep = build_survival_report(&["gender".into()], &c, &r).unwrap();
        let row = &rep.rows[0];
        assert!((row.rec_raw_diff - 0.0154).abs() < 1e-12);
        assert!(row.class_raw_diff > 0.0 && row.class_pct_change > 0.0);
        assert_eq!(rep, build_survival_report(&["gender".into()], &c, &r).unwrap());
        let table = survival_table(&rep);
        assert!(table.contains("0.0486") && table.contains("0.10"));
        assert_eq!(survival_to_tsv(&rep).lines().count(), 2);
    }

    #[test]
    fn identical_inputs_give_zero() {
        let (c, mut r) = inputs("h", 0.4, 0.4);
        r[1].ndcg = r[0].ndcg;
        let row = &build_survival_report(&["gender".into()], &c, &r).unwrap().rows[0];
        assert_eq!(
            [row.class_raw_diff, row.class_pct_change, row.rec_raw_diff, row.rec_pct_change],
            [0.0; 4]
        );
    }

    #[test]
    fn missing_variant_names_attribute() {
        let (c, r) = inputs("h", 0.4, 0.5);
        let err = build_survival_report(&["age".into()], &c, &r).unwrap_err();
        assert!(err.to_string().contains("age"));
        let err = build_survival_report(&["gender".into()], &c[..1], &r).unwrap_err();
        assert!(err.to_string().contains("gender"));
    }

    #[test]
    fn mixed_hashes_rejected() {
        let (c, _) = inputs("h1", 0.4, 0.5);
        let (_, r) = inputs("h2", 0.4, 0.5);
        assert!(build_survival_report(&["gender".into()], &c, &r).is_err());
    }
}
