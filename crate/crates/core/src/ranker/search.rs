use std::cmp::Ordering;

use rayon::prelude::*;

use super::fm::FmParams;
use super::recommend::recommend_excluding;
use super::train::{TrainConfig, Trainer};
use crate::corpus::FeatureEncoding;
use crate::error::{Error, Result};
use crate::metrics::accuracy_metrics;
use crate::splits::TemporalSplit;

pub const LEARNING_RATES: [f64; 5] = [0.001, 0.005, 0.01, 0.05, 0.1];
pub const EPOCHS: [usize; 5] = [5, 50, 100, 300, 500];
pub const FACTORS: [usize; 5] = [5, 25, 50, 100, 200];

/// Cartesian product of learning rates, epochs and factor counts over
/// `base` (which supplies loss, regularization, seed and WARP settings).
pub fn lattice(base: &TrainConfig, lrs: &[f64], epochs: &[usize], factors: &[usize]) -> Vec<TrainConfig> {
    let mut grid = Vec::with_capacity(lrs.len() * epochs.len() * factors.len());
    for &learning_rate in lrs {
        for &e in epochs {
            for &k in factors {
                grid.push(TrainConfig {
                    learning_rate,
                    epochs: e,
                    factors: k,
                    ..base.clone()
                });
            }
        }
    }
    grid
}

/// The default 5 x 5 x 5 search lattice.
pub fn default_grid(base: &TrainConfig) -> Vec<TrainConfig> {
    lattice(base, &LEARNING_RATES, &EPOCHS, &FACTORS)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub config: TrainConfig,
    /// Validation MAP@n, `None` if training diverged.
    pub map: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: TrainConfig,
    pub best_map: f64,
    pub params: FmParams,
    pub evaluations: Vec<Evaluation>,
}

/// Higher MAP wins; ties go to fewer factors, then the smaller learning rate,
/// then fewer epochs.
fn better(a: (&TrainConfig, f64), b: (&TrainConfig, f64)) -> bool {
    match a.1.total_cmp(&b.1) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => {
            (a.0.factors, a.0.learning_rate, a.0.epochs) < (b.0.factors, b.0.learning_rate, b.0.epochs)
        }
    }
}

/// Validation MAP@n of `params`; candidates exclude train positives only.
pub fn validation_map(params: &FmParams, split: &TemporalSplit, enc: &FeatureEncoding, n: usize) -> Result<f64> {
    let lists = recommend_excluding(params, enc, &split.train, &[&split.train], n)?;
    Ok(accuracy_metrics(&lists, &split.validation)?.map)
}

struct GroupResult {
    evaluations: Vec<(usize, Option<f64>)>,
    best: Option<(usize, f64, FmParams)>,
}

/// Configs differing only in `epochs` share one training run: with the same
/// seed, `e` epochs is a prefix of a longer run, so each requested epoch count
/// is evaluated as a checkpoint.
fn run_group(
    split: &TemporalSplit,
    enc: &FeatureEncoding,
    grid: &[TrainConfig],
    members: &[usize],
    n: usize,
) -> Result<GroupResult> {
    let mut members = members.to_vec();
    members.sort_by_key(|&m| grid[m].epochs);
    let mut out = GroupResult {
        evaluations: Vec::with_capacity(members.len()),
        best: None,
    };
    let mut trainer = Trainer::new(&split.train, enc, &grid[members[0]])?;
    let mut diverged = false;
    for &m in &members {
        let cfg = &grid[m];
        while !diverged && trainer.epochs_done() < cfg.epochs {
            match trainer.run_epoch() {
                Ok(()) => {}
                Err(Error::Diverged { epoch }) => {
                    log::warn!("{cfg}: diverged at epoch {epoch}");
                    diverged = true;
                }
                Err(e) => return Err(e),
            }
        }
        if diverged {
            out.evaluations.push((m, None));
            continue;
        }
        let map = validation_map(trainer.params(), split, enc, n)?;
        log::debug!("{cfg}: validation MAP@{n} = {map:.6}");
        out.evaluations.push((m, Some(map)));
        let replace = match &out.best {
            None => true,
            Some((b, bm, _)) => better((cfg, map), (&grid[*b], *bm)),
        };
        if replace {
            out.best = Some((m, map, trainer.params().clone()));
        }
    }
    Ok(out)
}

/// Trains every config on the train part, scores MAP@n on validation and
/// returns the argmax.
pub fn grid_search(
    split: &TemporalSplit,
    enc: &FeatureEncoding,
    grid: &[TrainConfig],
    n: usize,
) -> Result<SearchOutcome> {
    if grid.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, cfg) in grid.iter().enumerate() {
        let key = TrainConfig { epochs: 0, ..cfg.clone() };
        match groups
            .iter_mut()
            .find(|g| TrainConfig { epochs: 0, ..grid[g[0]].clone() } == key)
        {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    let results = groups
        .par_iter()
        .map(|members| run_group(split, enc, grid, members, n))
        .collect::<Result<Vec<_>>>()?;

    let mut maps = vec![None; grid.len()];
    let mut best: Option<(usize, f64, FmParams)> = None;
    for r in results {
        for (m, map) in r.evaluations {
            maps[m] = map;
        }
        if let Some((m, map, params)) = r.best {
            let replace = match &best {
                None => true,
                Some((b, bm, _)) => better((&grid[m], map), (&grid[*b], *bm)),
            };
            if replace {
                best = Some((m, map, params));
            }
        }
    }
    let (b, best_map, params) =
        best.ok_or_else(|| Error::Config("every grid configuration diverged".into()))?;
    Ok(SearchOutcome {
        best: grid[b].clone(),
        best_map,
        params,
        evaluations: grid
            .iter()
            .zip(maps)
            .map(|(config, map)| Evaluation {
                config: config.clone(),
                map,
            })
            .collect(),
    })
}
