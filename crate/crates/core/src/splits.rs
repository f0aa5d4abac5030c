//! Per-user temporal train/validation/test partitions and stratified folds.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Event, ImplicitDataset};
use crate::error::{Error, Result};

/// Three views over one catalog. Per user, test holds the most recent
/// events, validation the next most recent, train the rest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemporalSplit {
    pub train: ImplicitDataset,
    pub validation: ImplicitDataset,
    pub test: ImplicitDataset,
}

impl TemporalSplit {
    pub fn num_users(&self) -> usize {
        self.train.num_users()
    }

    pub fn num_items(&self) -> usize {
        self.train.num_items()
    }
}

/// `max(1, round_half_up(n * frac))`.
pub fn part_size(n: usize, frac: f64) -> usize {
    ((n as f64 * frac + 0.5).floor() as usize).max(1)
}

pub fn temporal_split(ds: &ImplicitDataset, test_frac: f64, val_frac: f64) -> Result<TemporalSplit> {
    if !(test_frac > 0.0 && val_frac > 0.0 && test_frac + val_frac < 1.0) {
        return Err(Error::InvalidInput(format!(
            "split fractions test={test_frac} validation={val_frac} must be positive and sum below 1"
        )));
    }
    let mut train = Vec::with_capacity(ds.num_users());
    let mut validation = Vec::with_capacity(ds.num_users());
    let mut test = Vec::with_capacity(ds.num_users());
    for (u, history) in ds.relevant.iter().enumerate() {
        let n = history.len();
        let n_test = part_size(n, test_frac);
        let n_val = part_size(n, val_frac);
        if n_test + n_val >= n {
            return Err(Error::InvalidInput(format!(
                "user `{}` has {n} items, too few for non-empty train/validation/test",
                ds.users[u]
            )));
        }
        let n_train = n - n_test - n_val;
        train.push(history[..n_train].to_vec());
        validation.push(history[n_train..n_train + n_val].to_vec());
        test.push(history[n_train + n_val..].to_vec());
    }
    let view = |relevant: Vec<Vec<Event>>| ImplicitDataset {
        users: ds.users.clone(),
        items: ds.items.clone(),
        relevant,
    };
    Ok(TemporalSplit {
        train: view(train),
        validation: view(validation),
        test: view(test),
    })
}

const PARTS: [&str; 3] = ["train", "validation", "test"];

/// Rows of `user \t item \t part`, part in {train, validation, test}.
pub fn split_to_string(split: &TemporalSplit) -> String {
    let mut out = String::from("# fmsurvival temporal-split v1\n");
    for (part, view) in PARTS.iter().zip([&split.train, &split.validation, &split.test]) {
        for (user, item, _) in view.triples() {
            let _ = writeln!(out, "{user}\t{item}\t{part}");
        }
    }
    out
}

pub fn write_split_snapshot(split: &TemporalSplit, path: &Path) -> Result<()> {
    fs::write(path, split_to_string(split)).map_err(|e| Error::io(path, e))
}

/// Rebuilds a split from its snapshot; timestamps come from `ds`, which must
/// be the dataset the split was made from.
pub fn read_split_snapshot(path: &Path, ds: &ImplicitDataset) -> Result<TemporalSplit> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let user_index: HashMap<&str, usize> =
        ds.users.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
    let item_index: HashMap<&str, u32> = ds
        .items
        .iter()
        .enumerate()
        .map(|(i, it)| (it.as_str(), i as u32))
        .collect();
    let mut part_of: HashMap<(usize, u32), usize> = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let bad = |msg: &str| Error::parse(path, lineno + 1, msg);
        if f.len() != 3 {
            return Err(bad("expected user, item, part"));
        }
        let u = *user_index.get(f[0]).ok_or_else(|| bad("unknown user"))?;
        let i = *item_index.get(f[1]).ok_or_else(|| bad("unknown item"))?;
        let p = PARTS
            .iter()
            .position(|p| *p == f[2])
            .ok_or_else(|| bad("unknown part"))?;
        part_of.insert((u, i), p);
    }
    let mut parts: [Vec<Vec<Event>>; 3] = Default::default();
    for p in &mut parts {
        p.resize(ds.num_users(), Vec::new());
    }
    for (u, history) in ds.relevant.iter().enumerate() {
        for ev in history {
            let p = *part_of.get(&(u, ev.item)).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "split snapshot {} does not cover ({}, {})",
                    path.display(),
                    ds.users[u],
                    ds.items[ev.item as usize]
                ))
            })?;
            parts[p][u].push(*ev);
        }
    }
    let [train, validation, test] = parts;
    let view = |relevant| ImplicitDataset {
        users: ds.users.clone(),
        items: ds.items.clone(),
        relevant,
    };
    Ok(TemporalSplit {
        train: view(train),
        validation: view(validation),
        test: view(test),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    /// Fold index per row.
    pub assignment: Vec<usize>,
}

impl FoldAssignment {
    /// Row indices of fold `f` and of its complement.
    pub fn partition(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.assignment.len()).partition(|&r| self.assignment[r] != f)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffles each class (in ascending class order) with a seeded RNG and deals
/// its members round-robin onto the folds, continuing from where the previous
/// class stopped. Fold sizes and per-class fold counts both differ by at most
/// one.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("k must be at least 2, got {k}")));
    }
    if k > labels.len() {
        return Err(Error::InvalidInput(format!(
            "k = {k} exceeds the number of rows ({})",
            labels.len()
        )));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (row, &label) in labels.iter().enumerate() {
        by_class.entry(label).or_default().push(row);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
        for &row in members.iter() {
            assignment[row] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldAssignment { k, assignment })
}
