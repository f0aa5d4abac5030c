//! Top-N accuracy and aggregate diversity of recommendation lists.

use std::collections::BTreeMap;

use crate::corpus::ImplicitDataset;
use crate::error::{Error, Result};
use crate::ranker::TopNList;

/// Mean per-user accuracy at list length `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub n: usize,
    /// Users with a non-empty test set (the averaging population).
    pub users: usize,
    pub precision: f64,
    pub recall: f64,
    pub ndcg: f64,
    pub hit_rate: f64,
    pub map: f64,
}

/// Metrics of one ranked list against one relevant set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserMetrics {
    pub precision: f64,
    pub recall: f64,
    pub ndcg: f64,
    pub hit: f64,
    pub average_precision: f64,
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// Binary-relevance metrics for `ranked` (best first) truncated at `n`.
///
/// P = hits/n, R = hits/|relevant|, nDCG with gain 1 and discount
/// `1/log2(rank+1)` against the ideal of `min(n, |relevant|)` hits on top,
/// AP = sum of precision at each hit divided by `min(n, |relevant|)`.
pub fn user_metrics(ranked: &[u32], relevant: &[u32], n: usize) -> UserMetrics {
    let mut hits = 0usize;
    let mut dcg = 0.0;
    let mut ap = 0.0;
    for (pos, item) in ranked.iter().take(n).enumerate() {
        if relevant.contains(item) {
            hits += 1;
            dcg += discount(pos + 1);
            ap += hits as f64 / (pos + 1) as f64;
        }
    }
    let ideal_hits = n.min(relevant.len());
    let idcg: f64 = (1..=ideal_hits).map(discount).sum();
    UserMetrics {
        precision: hits as f64 / n as f64,
        recall: hits as f64 / relevant.len() as f64,
        ndcg: if idcg > 0.0 { dcg / idcg } else { 0.0 },
        hit: if hits > 0 { 1.0 } else { 0.0 },
        average_precision: if ideal_hits > 0 { ap / ideal_hits as f64 } else { 0.0 },
    }
}

/// Averages [`user_metrics`] over users with a non-empty `test` set; users
/// without test items are skipped with a warning.
pub fn accuracy_metrics(lists: &TopNList, test: &ImplicitDataset) -> Result<EvalReport> {
    if lists.lists.len() != test.num_users() {
        return Err(Error::InvalidInput(format!(
            "{} lists for {} test users",
            lists.lists.len(),
            test.num_users()
        )));
    }
    if lists.n == 0 {
        return Err(Error::InvalidInput("list length must be positive".into()));
    }
    let mut sum = [0.0; 5];
    let mut users = 0;
    let mut skipped = 0;
    for (u, list) in lists.lists.iter().enumerate() {
        let relevant: Vec<u32> = test.relevant[u].iter().map(|e| e.item).collect();
        if relevant.is_empty() {
            skipped += 1;
            continue;
        }
        let ranked: Vec<u32> = list.iter().map(|r| r.item).collect();
        let m = user_metrics(&ranked, &relevant, lists.n);
        for (s, v) in sum
            .iter_mut()
            .zip([m.precision, m.recall, m.ndcg, m.hit, m.average_precision])
        {
            *s += v;
        }
        users += 1;
    }
    if skipped > 0 {
        log::warn!("{skipped} users without test items excluded from evaluation");
    }
    let mean = |s: f64| if users > 0 { s / users as f64 } else { 0.0 };
    Ok(EvalReport {
        n: lists.n,
        users,
        precision: mean(sum[0]),
        recall: mean(sum[1]),
        ndcg: mean(sum[2]),
        hit_rate: mean(sum[3]),
        map: mean(sum[4]),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiversityReport {
    /// Distinct items recommended to anyone.
    pub item_coverage: usize,
    /// `item_coverage / catalog size`.
    pub coverage_ratio: f64,
    pub shannon_entropy: f64,
    pub gini_diversity: f64,
}

/// How often each catalog item was recommended.
pub fn recommendation_counts(lists: &TopNList) -> Vec<u64> {
    let mut counts = vec![0u64; lists.items.len()];
    for list in &lists.lists {
        for r in list {
            counts[r.item as usize] += 1;
        }
    }
    counts
}

pub fn item_coverage(lists: &TopNList) -> usize {
    recommendation_counts(lists).iter().filter(|&&c| c > 0).count()
}

/// Entropy in bits of a count distribution. Items with equal counts are
/// grouped so a uniform distribution over `M` items yields `log2(M)` exactly.
pub fn entropy_of_counts(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let mut groups: BTreeMap<u64, u64> = BTreeMap::new();
    for &c in counts.iter().filter(|&&c| c > 0) {
        *groups.entry(c).or_default() += 1;
    }
    groups
        .iter()
        .map(|(&c, &n)| ((n * c) as f64 / total as f64) * (total as f64 / c as f64).log2())
        .sum()
}

pub fn shannon_entropy(lists: &TopNList) -> f64 {
    entropy_of_counts(&recommendation_counts(lists))
}

/// Classical Gini coefficient `sum_i (2i - n - 1) c_(i) / (n sum c)` over
/// ascending counts, numerator in exact integer arithmetic.
pub fn gini_coefficient(counts: &[u64]) -> f64 {
    let n = counts.len();
    let total: u64 = counts.iter().sum();
    if n == 0 || total == 0 {
        return 0.0;
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let numerator: i128 = sorted
        .iter()
        .enumerate()
        .map(|(i, &c)| (2 * (i as i128 + 1) - n as i128 - 1) * c as i128)
        .sum();
    numerator as f64 / (n as f64 * total as f64)
}

/// `1 - G` over the full catalog, zero-count items included: 1 for a
/// perfectly even exposure, towards 0 as recommendations concentrate.
pub fn gini_diversity(lists: &TopNList) -> f64 {
    1.0 - gini_coefficient(&recommendation_counts(lists))
}

pub fn diversity_metrics(lists: &TopNList) -> DiversityReport {
    let counts = recommendation_counts(lists);
    let covered = counts.iter().filter(|&&c| c > 0).count();
    DiversityReport {
        item_coverage: covered,
        coverage_ratio: if counts.is_empty() {
            0.0
        } else {
            covered as f64 / counts.len() as f64
        },
        shannon_entropy: entropy_of_counts(&counts),
        gini_diversity: 1.0 - gini_coefficient(&counts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Event;
    use crate::ranker::Recommendation;
    use proptest::prelude::*;

    fn lists(items: usize, per_user: &[&[u32]], n: usize) -> TopNList {
        TopNList {
            n,
            users: (0..per_user.len()).map(|u| format!("u{u}")).collect(),
            items: (0..items).map(|i| format!("i{i:03}")).collect(),
            lists: per_user
                .iter()
                .map(|l| {
                    l.iter()
                        .enumerate()
                        .map(|(r, &item)| Recommendation { item, score: -(r as f64) })
                        .collect()
                })
                .collect(),
        }
    }

    fn test_set(items: usize, per_user: &[&[u32]]) -> ImplicitDataset {
        ImplicitDataset {
            users: (0..per_user.len()).map(|u| format!("u{u}")).collect(),
            items: (0..items).map(|i| format!("i{i:03}")).collect(),
            relevant: per_user
                .iter()
                .map(|l| l.iter().map(|&item| Event { timestamp: 0, item }).collect())
                .collect(),
        }
    }

    #[test]
    fn perfect_ranking() {
        let l = lists(10, &[&[0, 1, 2], &[3, 4, 5]], 3);
        let t = test_set(10, &[&[2, 1, 0], &[5, 3, 4]]);
        let r = accuracy_metrics(&l, &t).unwrap();
        assert_eq!((r.precision, r.recall, r.ndcg, r.hit_rate, r.map), (1.0, 1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn no_hits() {
        let l = lists(10, &[&[0, 1], &[2, 3]], 2);
        let t = test_set(10, &[&[9], &[8]]);
        let r = accuracy_metrics(&l, &t).unwrap();
        assert_eq!((r.precision, r.recall, r.ndcg, r.hit_rate, r.map), (0.0, 0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn single_relevant_at_rank_three() {
        let m = user_metrics(&[5, 6, 7], &[7], 3);
        assert!((m.ndcg - 0.5).abs() < 1e-15);
        assert!((m.average_precision - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_test_users_excluded() {
        let l = lists(4, &[&[0, 1], &[2, 3]], 2);
        let t = test_set(4, &[&[0], &[]]);
        let r = accuracy_metrics(&l, &t).unwrap();
        assert_eq!(r.users, 1);
        assert_eq!(r.hit_rate, 1.0);
    }

    #[test]
    fn identical_lists_cover_n() {
        let same: &[u32] = &[1, 2, 3, 4, 5];
        assert_eq!(item_coverage(&lists(20, &[same, same, same], 5)), 5);
    }

    #[test]
    fn uniform_entropy_is_log2() {
        for m in [1u64, 2, 3, 7, 49, 970, 1574] {
            let counts = vec![13; m as usize];
            assert_eq!(entropy_of_counts(&counts), (m as f64).log2());
        }
        assert_eq!(entropy_of_counts(&[0, 40, 0]), 0.0);
    }

    #[test]
    fn gini_extremes() {
        assert_eq!(1.0 - gini_coefficient(&[5, 5, 5, 5]), 1.0);
        let mut counts = vec![0u64; 10_000];
        counts[0] = 100;
        assert!(1.0 - gini_coefficient(&counts) < 1e-3);
    }

    #[test]
    fn gini_matches_mean_absolute_difference() {
        let counts = [4u64, 2, 2];
        let n = counts.len() as f64;
        let mean = counts.iter().sum::<u64>() as f64 / n;
        let mad: f64 = counts
            .iter()
            .flat_map(|a| counts.iter().map(move |b| (*a as f64 - *b as f64).abs()))
            .sum();
        let oracle = mad / (2.0 * n * n * mean);
        assert!((gini_coefficient(&counts) - oracle).abs() < 1e-15);
        assert!((oracle - 1.0 / 6.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn diversity_invariant_under_relabeling(counts in prop::collection::vec(0u64..30, 1..40), shift in 0usize..40) {
            let mut rotated = counts.clone();
            rotated.rotate_left(shift % counts.len());
            prop_assert!((entropy_of_counts(&counts) - entropy_of_counts(&rotated)).abs() < 1e-12);
            prop_assert!((gini_coefficient(&counts) - gini_coefficient(&rotated)).abs() < 1e-12);
            let covered = counts.iter().filter(|&&c| c > 0).count();
            if covered > 0 {
                prop_assert!(entropy_of_counts(&counts) <= (covered as f64).log2() + 1e-12);
            }
        }

        #[test]
        fn user_order_irrelevant(seed_lists in prop::collection::vec(prop::collection::vec(0u32..15, 0..5), 1..6)) {
            let refs: Vec<&[u32]> = seed_lists.iter().map(|l| l.as_slice()).collect();
            let mut rev = refs.clone();
            rev.reverse();
            let tests: Vec<Vec<u32>> = seed_lists.iter().map(|l| l.iter().map(|i| (i * 7) % 15).take(2).chain([3]).collect()).collect();
            let trefs: Vec<&[u32]> = tests.iter().map(|l| l.as_slice()).collect();
            let mut trev = trefs.clone();
            trev.reverse();
            let a = accuracy_metrics(&lists(15, &refs, 5), &test_set(15, &trefs)).unwrap();
            let b = accuracy_metrics(&lists(15, &rev, 5), &test_set(15, &trev)).unwrap();
            prop_assert!((a.ndcg - b.ndcg).abs() < 1e-12 && (a.map - b.map).abs() < 1e-12);
            prop_assert!((a.precision - b.precision).abs() < 1e-12 && (a.recall - b.recall).abs() < 1e-12);
        }
    }
}
