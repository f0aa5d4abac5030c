use super::{AttributeTable, ImplicitDataset};
use crate::error::{Error, Result};

/// One-hot index layout: users, then items, then (optionally) the categories
/// of a single user attribute. Each block is contiguous and in sorted-id
/// order, so `[0, dimension)` is partitioned exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureEncoding {
    pub user_offset: usize,
    pub item_offset: usize,
    pub attribute_offset: usize,
    pub dimension: usize,
    pub num_users: usize,
    pub num_items: usize,
    pub active_attribute: Option<String>,
    /// Vocabulary of the active attribute (empty when none).
    pub vocabulary: Vec<String>,
    /// Category index of each dataset user (empty when no attribute).
    pub user_category: Vec<usize>,
}

impl FeatureEncoding {
    /// Attribute-free layout over `num_users` users and `num_items` items.
    pub fn plain(num_users: usize, num_items: usize) -> Self {
        FeatureEncoding {
            user_offset: 0,
            item_offset: num_users,
            attribute_offset: num_users + num_items,
            dimension: num_users + num_items,
            num_users,
            num_items,
            active_attribute: None,
            vocabulary: Vec::new(),
            user_category: Vec::new(),
        }
    }

    pub fn user_index(&self, user: usize) -> usize {
        self.user_offset + user
    }

    pub fn item_index(&self, item: usize) -> usize {
        self.item_offset + item
    }

    /// Active features on the user side: the user, plus its attribute
    /// category when an attribute is encoded.
    pub fn user_features(&self, user: usize) -> Vec<usize> {
        let mut f = vec![self.user_index(user)];
        if self.active_attribute.is_some() {
            f.push(self.attribute_offset + self.user_category[user]);
        }
        f
    }

    /// Full active set for a (user, item) pair.
    pub fn pair_features(&self, user: usize, item: usize) -> Vec<usize> {
        let mut f = self.user_features(user);
        f.push(self.item_index(item));
        f
    }

    /// Same layout with the attribute block dropped.
    pub fn without_attribute(&self) -> Self {
        Self::plain(self.num_users, self.num_items)
    }
}

/// Lays out one-hot features for `ds`. At most one attribute may be encoded
/// per model; users missing a value are mapped to the `unknown` category.
pub fn encode_features(
    ds: &ImplicitDataset,
    table: &AttributeTable,
    attributes: &[&str],
) -> Result<FeatureEncoding> {
    let mut enc = FeatureEncoding::plain(ds.num_users(), ds.num_items());
    match attributes {
        [] => Ok(enc),
        [name] => {
            let (vocabulary, labels) = table.labels(name, &ds.users).ok_or_else(|| {
                Error::InvalidInput(format!("attribute `{name}` not in attribute table"))
            })?;
            enc.dimension += vocabulary.len();
            enc.active_attribute = Some((*name).to_owned());
            enc.vocabulary = vocabulary;
            enc.user_category = labels;
            Ok(enc)
        }
        many => Err(Error::InvalidInput(format!(
            "only one attribute can be encoded per model, got {}",
            many.join("+")
        ))),
    }
}
