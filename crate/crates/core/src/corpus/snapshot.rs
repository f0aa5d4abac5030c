//! Delimited-text snapshots for pipeline caching.
//!
//! Dataset snapshot: `#` header lines, then `user \t item \t timestamp`
//! rows grouped by user (sorted id order) in chronological order.
//! Attribute snapshot: `#` header lines, then `attribute \t user \t value`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Attribute, AttributeTable, ImplicitDataset};
use crate::error::{Error, Result};

pub fn dataset_to_string(ds: &ImplicitDataset) -> String {
    let mut out = String::new();
    out.push_str("# fmsurvival implicit-dataset v1\n");
    let _ = writeln!(
        out,
        "# users={} items={} interactions={}",
        ds.num_users(),
        ds.num_items(),
        ds.interaction_count()
    );
    for (user, item, ts) in ds.triples() {
        let _ = writeln!(out, "{user}\t{item}\t{ts}");
    }
    out
}

pub fn write_dataset_snapshot(ds: &ImplicitDataset, path: &Path) -> Result<()> {
    fs::write(path, dataset_to_string(ds)).map_err(|e| Error::io(path, e))
}

pub fn read_dataset_snapshot(path: &Path) -> Result<ImplicitDataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(Error::parse(path, lineno + 1, "expected user, item, timestamp"));
        }
        let ts: i64 = f[2]
            .parse()
            .map_err(|_| Error::parse(path, lineno + 1, "bad timestamp"))?;
        rows.push((f[0], f[1], ts));
    }
    Ok(ImplicitDataset::from_triples(rows))
}

pub fn attributes_to_string(table: &AttributeTable) -> String {
    let mut out = String::from("# fmsurvival attribute-table v1\n");
    for (name, attr) in &table.attributes {
        for (user, value) in attr.values() {
            let _ = writeln!(out, "{name}\t{user}\t{value}");
        }
    }
    out
}

pub fn write_attribute_snapshot(table: &AttributeTable, path: &Path) -> Result<()> {
    fs::write(path, attributes_to_string(table)).map_err(|e| Error::io(path, e))
}

pub fn read_attribute_snapshot(path: &Path) -> Result<AttributeTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut columns: BTreeMap<&str, Vec<(&str, &str)>> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(Error::parse(path, lineno + 1, "expected attribute, user, value"));
        }
        columns.entry(f[0]).or_default().push((f[1], f[2]));
    }
    let mut table = AttributeTable::default();
    for (name, values) in columns {
        table.insert(name, Attribute::from_values(values));
    }
    Ok(table)
}
