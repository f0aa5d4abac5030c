#![allow(dead_code)]

use std::path::{Path, PathBuf};

use fmsurvival::corpus::{filter_min_activity, load_rating_log, to_implicit, AttributeTable, ImplicitDataset, RatingFormat};
use fmsurvival::splits::{temporal_split, TemporalSplit};

pub fn toy_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join("toy")
}

pub fn toy_config() -> PathBuf {
    toy_dir().join("toy.toml")
}

/// The bundled toy corpus, filtered and split the way the toy config does.
pub fn toy_corpus() -> (ImplicitDataset, AttributeTable, TemporalSplit) {
    let (log, attrs) = load_rating_log(&toy_dir().join("u.data"), RatingFormat::MovieLens100k).unwrap();
    let ds = filter_min_activity(&to_implicit(&log, 3), 15, None);
    let split = temporal_split(&ds, 0.1, 0.1).unwrap();
    let attrs = attrs.restrict_to(&ds.users);
    (ds, attrs, split)
}

/// Average precision of `ranked` against `relevant`, normalised by
/// `min(n, |relevant|)`, computed directly from the definition.
pub fn average_precision(ranked: &[usize], relevant: &[usize], n: usize) -> f64 {
    let mut hits = 0.0;
    let mut total = 0.0;
    for (i, item) in ranked.iter().take(n).enumerate() {
        if relevant.contains(item) {
            hits += 1.0;
            total += hits / (i as f64 + 1.0);
        }
    }
    let denom = n.min(relevant.len());
    if denom == 0 { 0.0 } else { total / denom as f64 }
}

/// Three users, lists of length 3.
/// - user 0 hits its only test item at rank 1
/// - user 1 hits its only test item at rank 3
/// - user 2 hits at ranks 1 and 3 out of four test items
pub fn metric_fixture() -> (fmsurvival::ranker::TopNList, ImplicitDataset) {
    use fmsurvival::corpus::Event;
    use fmsurvival::ranker::{Recommendation, TopNList};
    let items: Vec<String> = (0..12).map(|i| format!("i{i:02}")).collect();
    let users: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let ranked: [[u32; 3]; 3] = [[1, 2, 3], [4, 5, 6], [7, 8, 9]];
    let relevant: [&[u32]; 3] = [&[1], &[6], &[7, 9, 10, 11]];
    let lists = TopNList {
        n: 3,
        users: users.clone(),
        items: items.clone(),
        lists: ranked
            .iter()
            .map(|l| {
                l.iter()
                    .enumerate()
                    .map(|(r, &item)| Recommendation { item, score: 3.0 - r as f64 })
                    .collect()
            })
            .collect(),
    };
    let test = ImplicitDataset {
        users,
        items,
        relevant: relevant
            .iter()
            .map(|l| l.iter().map(|&item| Event { timestamp: 0, item }).collect())
            .collect(),
    };
    (lists, test)
}

/// Hand-worked means for [`metric_fixture`]:
/// `(precision, recall, ndcg, hit_rate, map)`.
pub fn metric_fixture_expected() -> (f64, f64, f64, f64, f64) {
    let ideal_three = 1.0 + 1.0 / 3f64.log2() + 0.5;
    let ndcg_c = 1.5 / ideal_three;
    (
        (1.0 / 3.0 + 1.0 / 3.0 + 2.0 / 3.0) / 3.0,
        (1.0 + 1.0 + 0.5) / 3.0,
        (1.0 + 0.5 + ndcg_c) / 3.0,
        1.0,
        (1.0 + 1.0 / 3.0 + 5.0 / 9.0) / 3.0,
    )
}
