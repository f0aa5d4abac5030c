//! Interaction logs, implicit-feedback datasets, user attribute tables and
//! the one-hot feature layout consumed by the ranker.

mod derive;
mod encoding;
mod loaders;
mod snapshot;

use std::collections::{BTreeMap, BTreeSet, HashMap};

pub use derive::{derive_attribute, DeriveRule, Lookup};
pub use encoding::{encode_features, FeatureEncoding};
pub use loaders::{load_listening_log, load_rating_log, RatingFormat};
pub use snapshot::{
    read_attribute_snapshot, read_dataset_snapshot, write_attribute_snapshot,
    write_dataset_snapshot,
};

/// Category assigned to users with no value for an attribute.
pub const UNKNOWN_CATEGORY: &str = "unknown";
/// Category assigned to values a derivation rule cannot map.
pub const OTHER_CATEGORY: &str = "other";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interaction {
    pub user: String,
    pub item: String,
    /// Seconds since the epoch.
    pub timestamp: i64,
    /// Rating (1-5) for rating logs, play count for listening logs.
    pub value: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackKind {
    Rating,
    Listening,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionLog {
    pub kind: FeedbackKind,
    pub interactions: Vec<Interaction>,
}

/// One relevant item in a user's chronological history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Event {
    pub timestamp: i64,
    pub item: u32,
}

/// Per-user relevance sets over a fixed item catalog.
///
/// `users` and `items` are sorted by their string ids; the index of an id in
/// those vectors is its identity everywhere else in the crate. Each history
/// in `relevant` is sorted by `(timestamp, item)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImplicitDataset {
    pub users: Vec<String>,
    pub items: Vec<String>,
    pub relevant: Vec<Vec<Event>>,
}

impl ImplicitDataset {
    /// Builds a dataset from `(user, item, timestamp)` triples. Duplicate
    /// pairs keep the most recent timestamp. Users and items are exactly
    /// the ids that appear.
    pub fn from_triples<'a, I>(triples: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str, i64)>,
    {
        let mut latest: HashMap<(&str, &str), i64> = HashMap::new();
        for (user, item, ts) in triples {
            latest
                .entry((user, item))
                .and_modify(|t| *t = (*t).max(ts))
                .or_insert(ts);
        }
        let users: BTreeSet<&str> = latest.keys().map(|(u, _)| *u).collect();
        let items: BTreeSet<&str> = latest.keys().map(|(_, i)| *i).collect();
        Self::assemble(users, items, latest)
    }

    fn assemble(
        users: BTreeSet<&str>,
        items: BTreeSet<&str>,
        pairs: HashMap<(&str, &str), i64>,
    ) -> Self {
        let user_index: HashMap<&str, usize> =
            users.iter().enumerate().map(|(i, u)| (*u, i)).collect();
        let item_index: HashMap<&str, u32> = items
            .iter()
            .enumerate()
            .map(|(i, it)| (*it, i as u32))
            .collect();
        let mut relevant = vec![Vec::new(); users.len()];
        for ((user, item), timestamp) in pairs {
            relevant[user_index[user]].push(Event {
                timestamp,
                item: item_index[item],
            });
        }
        for history in &mut relevant {
            history.sort_unstable();
        }
        ImplicitDataset {
            users: users.into_iter().map(str::to_owned).collect(),
            items: items.into_iter().map(str::to_owned).collect(),
            relevant,
        }
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn interaction_count(&self) -> usize {
        self.relevant.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    /// Number of distinct users per item.
    pub fn item_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.items.len()];
        for history in &self.relevant {
            for ev in history {
                counts[ev.item as usize] += 1;
            }
        }
        counts
    }

    pub fn triples(&self) -> impl Iterator<Item = (&str, &str, i64)> {
        self.relevant.iter().enumerate().flat_map(move |(u, h)| {
            h.iter().map(move |ev| {
                (
                    self.users[u].as_str(),
                    self.items[ev.item as usize].as_str(),
                    ev.timestamp,
                )
            })
        })
    }

    pub fn stats(&self) -> DatasetStats {
        DatasetStats {
            users: self.num_users(),
            items: self.num_items(),
            interactions: self.interaction_count(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
}

/// Keeps interactions whose value reaches `cutoff` (rating logs only; every
/// listening event is relevant) and collapses duplicate pairs to their most
/// recent timestamp. Non-relevant events are discarded entirely.
pub fn to_implicit(log: &InteractionLog, cutoff: u32) -> ImplicitDataset {
    let keep = |it: &Interaction| match log.kind {
        FeedbackKind::Rating => it.value >= cutoff,
        FeedbackKind::Listening => true,
    };
    ImplicitDataset::from_triples(
        log.interactions
            .iter()
            .filter(|it| keep(it))
            .map(|it| (it.user.as_str(), it.item.as_str(), it.timestamp)),
    )
}

/// Drops items with fewer than `min_item` users (when given) and users with
/// fewer than `min_user` items, repeating until neither threshold removes
/// anything. Items left without interactions leave the catalog.
pub fn filter_min_activity(
    ds: &ImplicitDataset,
    min_user: usize,
    min_item: Option<usize>,
) -> ImplicitDataset {
    let mut user_alive = vec![true; ds.num_users()];
    let mut item_alive = vec![true; ds.num_items()];
    loop {
        let mut changed = false;
        if let Some(min_item) = min_item {
            let mut counts = vec![0usize; ds.num_items()];
            for (u, history) in ds.relevant.iter().enumerate() {
                if !user_alive[u] {
                    continue;
                }
                for ev in history.iter().filter(|ev| item_alive[ev.item as usize]) {
                    counts[ev.item as usize] += 1;
                }
            }
            for (i, &c) in counts.iter().enumerate() {
                if item_alive[i] && c < min_item {
                    item_alive[i] = false;
                    changed = true;
                }
            }
        }
        for (u, history) in ds.relevant.iter().enumerate() {
            if !user_alive[u] {
                continue;
            }
            let n = history
                .iter()
                .filter(|ev| item_alive[ev.item as usize])
                .count();
            if n < min_user {
                user_alive[u] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut users = BTreeSet::new();
    let mut items = BTreeSet::new();
    let mut pairs = HashMap::new();
    for (u, history) in ds.relevant.iter().enumerate() {
        if !user_alive[u] {
            continue;
        }
        for ev in history.iter().filter(|ev| item_alive[ev.item as usize]) {
            let user = ds.users[u].as_str();
            let item = ds.items[ev.item as usize].as_str();
            users.insert(user);
            items.insert(item);
            pairs.insert((user, item), ev.timestamp);
        }
    }
    ImplicitDataset::assemble(users, items, pairs)
}

/// One categorical user attribute: a sorted vocabulary and each user's
/// category index into it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attribute {
    pub vocabulary: Vec<String>,
    pub assignments: BTreeMap<String, usize>,
}

impl Attribute {
    pub fn from_values<I, U, V>(values: I) -> Self
    where
        I: IntoIterator<Item = (U, V)>,
        U: Into<String>,
        V: Into<String>,
    {
        let raw: BTreeMap<String, String> = values
            .into_iter()
            .map(|(u, v)| (u.into(), v.into()))
            .collect();
        let vocabulary: Vec<String> = raw
            .values()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let assignments = raw
            .into_iter()
            .map(|(u, v)| {
                let idx = vocabulary.binary_search(&v).expect("value in vocabulary");
                (u, idx)
            })
            .collect();
        Attribute {
            vocabulary,
            assignments,
        }
    }

    pub fn value_of(&self, user: &str) -> Option<&str> {
        self.assignments
            .get(user)
            .map(|&i| self.vocabulary[i].as_str())
    }

    pub fn values(&self) -> impl Iterator<Item = (&str, &str)> {
        self.assignments
            .iter()
            .map(|(u, &i)| (u.as_str(), self.vocabulary[i].as_str()))
    }

    /// Restricts to `users`, giving users without a value the
    /// [`UNKNOWN_CATEGORY`]. The vocabulary only keeps categories that occur.
    pub fn restrict_to(&self, users: &[String]) -> Attribute {
        Attribute::from_values(users.iter().map(|u| {
            (
                u.clone(),
                self.value_of(u).unwrap_or(UNKNOWN_CATEGORY).to_owned(),
            )
        }))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AttributeTable {
    pub attributes: BTreeMap<String, Attribute>,
}

impl AttributeTable {
    pub fn get(&self, name: &str) -> Option<&Attribute> {
        self.attributes.get(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, attribute: Attribute) {
        self.attributes.insert(name.into(), attribute);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.attributes.keys().map(String::as_str)
    }

    /// Restricts every attribute to the dataset's users.
    pub fn restrict_to(&self, users: &[String]) -> AttributeTable {
        AttributeTable {
            attributes: self
                .attributes
                .iter()
                .map(|(name, attr)| (name.clone(), attr.restrict_to(users)))
                .collect(),
        }
    }

    /// Category index per dataset user, in dataset user order.
    pub fn labels(&self, name: &str, users: &[String]) -> Option<(Vec<String>, Vec<usize>)> {
        let attr = self.get(name)?.restrict_to(users);
        let labels = users.iter().map(|u| attr.assignments[u]).collect();
        Some((attr.vocabulary, labels))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rating(user: &str, item: &str, ts: i64, value: u32) -> Interaction {
        Interaction {
            user: user.into(),
            item: item.into(),
            timestamp: ts,
            value,
        }
    }

    fn ratings(rows: &[(&str, &str, i64, u32)]) -> InteractionLog {
        InteractionLog {
            kind: FeedbackKind::Rating,
            interactions: rows.iter().map(|&(u, i, t, v)| rating(u, i, t, v)).collect(),
        }
    }

    #[test]
    fn cutoff_keeps_ratings_at_or_above() {
        let log = ratings(&[
            ("u", "a", 1, 1),
            ("u", "b", 2, 2),
            ("u", "c", 3, 3),
            ("u", "d", 4, 4),
            ("u", "e", 5, 5),
        ]);
        let ds = to_implicit(&log, 3);
        assert_eq!(ds.items, vec!["c", "d", "e"]);
        assert_eq!(ds.interaction_count(), 3);
    }

    #[test]
    fn all_below_cutoff_is_empty() {
        let log = ratings(&[("u", "a", 1, 1), ("v", "a", 1, 1)]);
        let ds = to_implicit(&log, 3);
        assert!(ds.is_empty());
        assert_eq!(ds.num_items(), 0);
    }

    #[test]
    fn listening_logs_ignore_cutoff() {
        let log = InteractionLog {
            kind: FeedbackKind::Listening,
            interactions: vec![rating("u", "a", 10, 1), rating("u", "a", 99, 1)],
        };
        let ds = to_implicit(&log, 3);
        assert_eq!(ds.relevant[0], vec![Event { timestamp: 99, item: 0 }]);
    }

    #[test]
    fn duplicates_keep_latest_timestamp() {
        let log = ratings(&[("u", "a", 50, 4), ("u", "a", 7, 5), ("u", "b", 9, 3)]);
        let ds = to_implicit(&log, 3);
        assert_eq!(
            ds.relevant[0],
            vec![Event { timestamp: 9, item: 1 }, Event { timestamp: 50, item: 0 }]
        );
    }

    #[test]
    fn histories_sorted_with_item_tiebreak() {
        let ds = ImplicitDataset::from_triples([("u", "z", 5), ("u", "b", 5), ("u", "m", 1)]);
        let items: Vec<&str> = ds.relevant[0]
            .iter()
            .map(|e| ds.items[e.item as usize].as_str())
            .collect();
        assert_eq!(items, vec!["m", "b", "z"]);
    }

    #[test]
    fn ids_sorted_lexicographically() {
        let ds = ImplicitDataset::from_triples([("10", "x", 0), ("9", "x", 0), ("2", "x", 0)]);
        assert_eq!(ds.users, vec!["10", "2", "9"]);
    }

    #[test]
    fn min_user_one_is_identity() {
        let ds = ImplicitDataset::from_triples([("u", "a", 1), ("v", "b", 2), ("v", "a", 3)]);
        assert_eq!(filter_min_activity(&ds, 1, None), ds);
    }

    #[test]
    fn item_threshold_cascades_to_users() {
        // u has 2 items but one of them is only seen by u.
        let ds = ImplicitDataset::from_triples([
            ("u", "a", 1),
            ("u", "rare", 2),
            ("v", "a", 1),
            ("v", "b", 2),
            ("w", "a", 1),
            ("w", "b", 2),
        ]);
        let out = filter_min_activity(&ds, 2, Some(2));
        assert_eq!(out.users, vec!["v", "w"]);
        assert_eq!(out.items, vec!["a", "b"]);
    }

    #[test]
    fn restrict_fills_unknown() {
        let attr = Attribute::from_values([("u", "M"), ("v", "F"), ("x", "F")]);
        let users = vec!["u".to_string(), "w".to_string()];
        let r = attr.restrict_to(&users);
        assert_eq!(r.vocabulary, vec!["M", UNKNOWN_CATEGORY]);
        assert_eq!(r.value_of("w"), Some(UNKNOWN_CATEGORY));
    }
}
