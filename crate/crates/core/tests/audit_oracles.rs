use fmsurvival::audit::{build_features, macro_f1, most_frequent_baseline, train_logreg, ClassifierConfig, ListFeatureMatrix};
use fmsurvival::ranker::{Recommendation, TopNList};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn feature_rows_match_membership_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let catalog: Vec<String> = (0..10).map(|i| format!("m{i}")).collect();
    let mut items = catalog.clone();
    items.shuffle(&mut rng);
    let mut lists = Vec::new();
    for _ in 0..5 {
        let mut pick: Vec<u32> = (0..10).collect();
        pick.shuffle(&mut rng);
        lists.push(pick[..4].iter().map(|&item| Recommendation { item, score: 0.0 }).collect::<Vec<_>>());
    }
    let topn = TopNList { n: 4, users: (0..5).map(|u| u.to_string()).collect(), items, lists };
    let x = build_features(&topn, &catalog).unwrap();
    assert_eq!(x.num_rows(), 5);
    for u in 0..5 {
        for (c, id) in catalog.iter().enumerate() {
            let member = topn.lists[u].iter().any(|r| &topn.items[r.item as usize] == id);
            assert_eq!(x.get(u, c), u8::from(member), "user {u} item {id}");
        }
        assert_eq!((0..10).map(|c| x.get(u, c) as usize).sum::<usize>(), 4);
    }
}

#[test]
fn classifier_matching_baseline_scores_the_same() {
    let x = ListFeatureMatrix::from_dense(&vec![vec![0u8; 6]; 12]);
    let y = vec![0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 2, 2];
    let model = train_logreg(&x, &y, 3, &ClassifierConfig::default()).unwrap();
    let clf = model.predict_all(&x);
    let base = most_frequent_baseline(&y).unwrap().predict_all(y.len());
    assert_eq!(clf, base);
    assert_eq!(macro_f1(&clf, &y).unwrap(), macro_f1(&base, &y).unwrap());
}
