use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ingest::Interaction;
use crate::error::{Error, Result};

pub const PADDING: usize = 0;
pub const DATASET_SCHEMA_VERSION: u32 = 1;

/// Chronological per-user item sequences with dense internal ids.
///
/// Items are numbered `1..=num_items`; 0 is the padding item. Users are
/// numbered `0..num_users`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub sequences: Vec<Vec<usize>>,
    pub num_items: usize,
    pub user_ids: Vec<String>,
    /// `item_ids[0]` is the padding placeholder.
    pub item_ids: Vec<String>,
    pub category_names: Vec<String>,
    /// Indexed by item; entry 0 (padding) is always empty.
    pub item_categories: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    /// Fraction in [0,1], not percent.
    pub density: f64,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    schema_version: u32,
    #[serde(flatten)]
    dataset: Dataset,
}

impl Dataset {
    /// Build from sequences that already use internal ids. External ids are
    /// the decimal indices.
    pub fn from_sequences(sequences: Vec<Vec<usize>>, num_items: usize) -> Result<Self> {
        let ds = Dataset {
            user_ids: (0..sequences.len()).map(|u| u.to_string()).collect(),
            item_ids: (0..=num_items).map(|i| i.to_string()).collect(),
            sequences,
            num_items,
            category_names: Vec::new(),
            item_categories: vec![Vec::new(); num_items + 1],
        };
        ds.check_indices()?;
        Ok(ds)
    }

    pub fn with_categories(
        mut self,
        names: Vec<String>,
        item_categories: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if item_categories.len() != self.num_items + 1 {
            return Err(Error::Shape(format!(
                "category map has {} entries, expected {}",
                item_categories.len(),
                self.num_items + 1
            )));
        }
        if !item_categories[PADDING].is_empty() {
            return Err(Error::Shape("padding item cannot carry categories".into()));
        }
        if item_categories.iter().flatten().any(|c| *c >= names.len()) {
            return Err(Error::Index("category index out of range".into()));
        }
        self.category_names = names;
        self.item_categories = item_categories;
        Ok(self)
    }

    pub fn num_users(&self) -> usize {
        self.sequences.len()
    }

    pub fn num_categories(&self) -> usize {
        self.category_names.len()
    }

    pub fn has_categories(&self) -> bool {
        self.item_categories.iter().any(|c| !c.is_empty())
    }

    pub fn num_interactions(&self) -> usize {
        self.sequences.iter().map(Vec::len).sum()
    }

    pub fn stats(&self) -> DatasetStats {
        let users = self.num_users();
        let items = self.num_items;
        let interactions = self.num_interactions();
        let density = if users == 0 || items == 0 {
            0.0
        } else {
            interactions as f64 / (users as f64 * items as f64)
        };
        DatasetStats {
            users,
            items,
            interactions,
            density,
        }
    }

    fn check_indices(&self) -> Result<()> {
        for (u, seq) in self.sequences.iter().enumerate() {
            if let Some(bad) = seq.iter().find(|&&i| i == PADDING || i > self.num_items) {
                return Err(Error::Index(format!(
                    "user {u} has item index {bad} outside [1, {}]",
                    self.num_items
                )));
            }
        }
        Ok(())
    }

    /// Checks all structural invariants, including the minimum length.
    pub fn validate(&self, min_len: usize) -> Result<()> {
        self.check_indices()?;
        if self.user_ids.len() != self.num_users() || self.item_ids.len() != self.num_items + 1 {
            return Err(Error::Shape("id maps disagree with counts".into()));
        }
        if self.item_categories.len() != self.num_items + 1 {
            return Err(Error::Shape(
                "category map disagrees with item count".into(),
            ));
        }
        if let Some((u, s)) = self
            .sequences
            .iter()
            .enumerate()
            .find(|(_, s)| s.len() < min_len)
        {
            return Err(Error::Split {
                user: self.user_ids[u].clone(),
                len: s.len(),
                need: min_len,
            });
        }
        Ok(())
    }

    /// Interactions with external ids, in per-user chronological order.
    /// Timestamps are the position within the user's sequence.
    pub fn to_interactions(&self) -> Vec<Interaction> {
        let mut out = Vec::with_capacity(self.num_interactions());
        for (u, seq) in self.sequences.iter().enumerate() {
            for (pos, &i) in seq.iter().enumerate() {
                let cats = self.item_categories[i]
                    .iter()
                    .map(|&c| self.category_names[c].clone());
                out.push(
                    Interaction::new(
                        self.user_ids[u].clone(),
                        self.item_ids[i].clone(),
                        pos as i64,
                    )
                    .with_categories(cats),
                );
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = DatasetFile {
            schema_version: DATASET_SCHEMA_VERSION,
            dataset: self.clone(),
        };
        let text = serde_json::to_string(&file)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: DatasetFile = serde_json::from_str(&text)?;
        if file.schema_version != DATASET_SCHEMA_VERSION {
            return Err(Error::Config {
                key: "schema_version".into(),
                msg: format!("unsupported dataset schema {}", file.schema_version),
            });
        }
        file.dataset.validate(1)?;
        Ok(file.dataset)
    }
}

/// Iterative `min_count`-core filtering followed by dense re-indexing.
///
/// Users are numbered by first appearance in the input, items by first
/// appearance in the filtered input. Sequences are stable-sorted by
/// timestamp, so ties keep input order.
pub fn build_dataset(interactions: &[Interaction], min_count: usize) -> Result<Dataset> {
    if min_count == 0 {
        return Err(Error::config("min_count", "must be at least 1"));
    }
    let mut alive = vec![true; interactions.len()];
    loop {
        let mut user_count: HashMap<&str, usize> = HashMap::new();
        let mut item_count: HashMap<&str, usize> = HashMap::new();
        for (x, _) in interactions.iter().zip(&alive).filter(|(_, a)| **a) {
            *user_count.entry(&x.user_id).or_default() += 1;
            *item_count.entry(&x.item_id).or_default() += 1;
        }
        let mut changed = false;
        for (x, a) in interactions.iter().zip(alive.iter_mut()) {
            if *a
                && (user_count[x.user_id.as_str()] < min_count
                    || item_count[x.item_id.as_str()] < min_count)
            {
                *a = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut user_index: HashMap<&str, usize> = HashMap::new();
    let mut item_index: HashMap<&str, usize> = HashMap::new();
    let mut category_index: HashMap<&str, usize> = HashMap::new();
    let mut user_ids = Vec::new();
    let mut item_ids = vec!["<pad>".to_string()];
    let mut category_names = Vec::new();
    let mut item_categories: Vec<Vec<usize>> = vec![Vec::new()];
    let mut events: Vec<Vec<(i64, usize)>> = Vec::new();

    for (x, _) in interactions.iter().zip(&alive).filter(|(_, a)| **a) {
        let u = *user_index.entry(&x.user_id).or_insert_with(|| {
            user_ids.push(x.user_id.clone());
            events.push(Vec::new());
            user_ids.len() - 1
        });
        let i = *item_index.entry(&x.item_id).or_insert_with(|| {
            item_ids.push(x.item_id.clone());
            item_categories.push(Vec::new());
            item_ids.len() - 1
        });
        for c in &x.categories {
            let ci = *category_index.entry(c).or_insert_with(|| {
                category_names.push(c.clone());
                category_names.len() - 1
            });
            if !item_categories[i].contains(&ci) {
                item_categories[i].push(ci);
            }
        }
        events[u].push((x.timestamp, i));
    }
    if user_ids.is_empty() {
        return Err(Error::EmptyDataset { min_count });
    }
    let sequences = events
        .into_iter()
        .map(|mut ev| {
            ev.sort_by_key(|(ts, _)| *ts);
            ev.into_iter().map(|(_, i)| i).collect()
        })
        .collect();
    let ds = Dataset {
        sequences,
        num_items: item_ids.len() - 1,
        user_ids,
        item_ids,
        category_names,
        item_categories,
    };
    ds.validate(min_count)?;
    Ok(ds)
}
