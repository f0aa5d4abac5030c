use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::fm::FmParams;
use crate::corpus::{FeatureEncoding, ImplicitDataset};
use crate::error::{Error, Result};
use crate::splits::TemporalSplit;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recommendation {
    pub item: u32,
    pub score: f64,
}

/// Ranked lists per user. `lists[u]` belongs to `users[u]`; item indices
/// point into `items`.
#[derive(Debug, Clone, PartialEq)]
pub struct TopNList {
    pub n: usize,
    pub users: Vec<String>,
    pub items: Vec<String>,
    pub lists: Vec<Vec<Recommendation>>,
}

impl TopNList {
    pub fn num_recommendations(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }

    pub fn item_ids(&self, user: usize) -> impl Iterator<Item = u32> + '_ {
        self.lists[user].iter().map(|r| r.item)
    }
}

/// Descending score, ascending item index on ties.
fn by_rank(a: &Recommendation, b: &Recommendation) -> Ordering {
    b.score.total_cmp(&a.score).then(a.item.cmp(&b.item))
}

/// Keeps the `n` best of `scored` in rank order.
pub fn top_n(mut scored: Vec<Recommendation>, n: usize) -> Vec<Recommendation> {
    if n == 0 {
        return Vec::new();
    }
    if scored.len() > n {
        scored.select_nth_unstable_by(n - 1, by_rank);
        scored.truncate(n);
    }
    scored.sort_unstable_by(by_rank);
    scored
}

/// Scores every catalog item not in any of the `exclude` views and keeps the
/// top `n` per user.
pub fn recommend_excluding(
    params: &FmParams,
    enc: &FeatureEncoding,
    base: &ImplicitDataset,
    exclude: &[&ImplicitDataset],
    n: usize,
) -> Result<TopNList> {
    if enc.dimension != params.dimension() {
        return Err(Error::InvalidInput(format!(
            "encoding dimension {} differs from model dimension {}",
            enc.dimension,
            params.dimension()
        )));
    }
    let num_items = base.num_items();
    let lists = (0..base.num_users())
        .into_par_iter()
        .map(|u| {
            let mut seen = vec![false; num_items];
            for view in exclude {
                for ev in &view.relevant[u] {
                    seen[ev.item as usize] = true;
                }
            }
            let ctx = params.user_context(&enc.user_features(u))?;
            let scored = (0..num_items)
                .filter(|&i| !seen[i])
                .map(|i| Recommendation {
                    item: i as u32,
                    score: ctx.score(params, enc.item_index(i)),
                })
                .collect();
            Ok(top_n(scored, n))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TopNList {
        n,
        users: base.users.clone(),
        items: base.items.clone(),
        lists,
    })
}

/// Top-`n` unseen items per user, excluding train and validation positives.
pub fn recommend_topn(
    params: &FmParams,
    split: &TemporalSplit,
    enc: &FeatureEncoding,
    n: usize,
) -> Result<TopNList> {
    recommend_excluding(params, enc, &split.train, &[&split.train, &split.validation], n)
}

/// Rows of `user \t rank \t item \t score`, ranks starting at 1.
pub fn topn_to_string(lists: &TopNList) -> String {
    let mut out = format!("# fmsurvival top-n v1 n={}\n", lists.n);
    for (u, list) in lists.lists.iter().enumerate() {
        for (rank, r) in list.iter().enumerate() {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                lists.users[u],
                rank + 1,
                lists.items[r.item as usize],
                r.score
            );
        }
    }
    out
}

pub fn write_topn(lists: &TopNList, path: &Path) -> Result<()> {
    fs::write(path, topn_to_string(lists)).map_err(|e| Error::io(path, e))
}

/// Reads a Top-N file against the dataset's user and item vocabularies.
pub fn read_topn(path: &Path, ds: &ImplicitDataset) -> Result<TopNList> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let users: HashMap<&str, usize> = ds.users.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
    let items: HashMap<&str, u32> = ds
        .items
        .iter()
        .enumerate()
        .map(|(i, it)| (it.as_str(), i as u32))
        .collect();
    let mut n = 0;
    let mut lists: Vec<Vec<(usize, Recommendation)>> = vec![Vec::new(); ds.num_users()];
    for (lineno, line) in text.lines().enumerate() {
        let bad = |m: &str| Error::parse(path, lineno + 1, m);
        if let Some(rest) = line.strip_prefix("# fmsurvival top-n v1 n=") {
            n = rest.trim().parse().map_err(|_| bad("bad list length"))?;
            continue;
        }
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(bad("expected user, rank, item, score"));
        }
        let u = *users.get(f[0]).ok_or_else(|| bad("unknown user"))?;
        let rank: usize = f[1].parse().map_err(|_| bad("bad rank"))?;
        let item = *items.get(f[2]).ok_or_else(|| bad("item not in catalog"))?;
        let score: f64 = f[3].parse().map_err(|_| bad("bad score"))?;
        lists[u].push((rank, Recommendation { item, score }));
    }
    let lists = lists
        .into_iter()
        .map(|mut l| {
            l.sort_by_key(|(rank, _)| *rank);
            l.into_iter().map(|(_, r)| r).collect::<Vec<_>>()
        })
        .collect::<Vec<_>>();
    if n == 0 {
        n = lists.iter().map(Vec::len).max().unwrap_or(0);
    }
    Ok(TopNList {
        n,
        users: ds.users.clone(),
        items: ds.items.clone(),
        lists,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Event;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy() -> (TemporalSplit, FeatureEncoding, FmParams) {
        let cat = ImplicitDataset {
            users: (0..5).map(|u| format!("u{u}")).collect(),
            items: (0..12).map(|i| format!("i{i:02}")).collect(),
            relevant: (0..5u32)
                .map(|u| {
                    (0..4u32)
                        .filter(|i| (u + i) % 2 == 0)
                        .map(|i| Event { timestamp: i as i64, item: i })
                        .collect()
                })
                .collect(),
        };
        let split = TemporalSplit {
            train: cat.clone(),
            validation: ImplicitDataset { relevant: vec![Vec::new(); 5], ..cat.clone() },
            test: ImplicitDataset { relevant: vec![Vec::new(); 5], ..cat },
        };
        let enc = FeatureEncoding::plain(5, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = FmParams::random(enc.dimension, 3, 1.0, &mut rng);
        p.w.iter_mut().for_each(|w| *w = rng.gen_range(-1.0..1.0));
        (split, enc, p)
    }

    #[test]
    fn truncates_to_candidates() {
        let (split, enc, p) = toy();
        let lists = recommend_topn(&p, &split, &enc, 50).unwrap();
        for (u, list) in lists.lists.iter().enumerate() {
            assert_eq!(list.len(), 12 - split.train.relevant[u].len());
        }
    }

    #[test]
    fn matches_full_sort_oracle() {
        let (split, enc, p) = toy();
        let lists = recommend_topn(&p, &split, &enc, 3).unwrap();
        for u in 0..5 {
            let train: Vec<usize> = split.train.relevant[u].iter().map(|e| e.item as usize).collect();
            let mut all: Vec<(f64, usize)> = (0..12)
                .filter(|i| !train.contains(i))
                .map(|i| (p.score(&enc.pair_features(u, i)).unwrap(), i))
                .collect();
            all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let got: Vec<usize> = lists.lists[u].iter().map(|r| r.item as usize).collect();
            let want: Vec<usize> = all.iter().take(3).map(|x| x.1).collect();
            assert_eq!(got, want);
            assert!(lists.lists[u].windows(2).all(|w| w[0].score >= w[1].score));
        }
    }

    #[test]
    fn ties_broken_by_item() {
        let scored = vec![
            Recommendation { item: 3, score: 1.0 },
            Recommendation { item: 1, score: 1.0 },
            Recommendation { item: 2, score: 2.0 },
        ];
        let items: Vec<u32> = top_n(scored, 2).iter().map(|r| r.item).collect();
        assert_eq!(items, vec![2, 1]);
    }

    #[test]
    fn topn_file_roundtrip() {
        let (split, enc, p) = toy();
        let lists = recommend_topn(&p, &split, &enc, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("topn.tsv");
        write_topn(&lists, &path).unwrap();
        assert_eq!(read_topn(&path, &split.train).unwrap(), lists);
    }
}
