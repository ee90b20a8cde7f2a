//! MovieLens-style interaction data, item metadata and unified item text.

mod catalog;
mod movielens;

pub use catalog::{
    enrich_items, fetch_item_metadata, CatalogClient, CatalogError, MetadataCache,
    write_metadata_file, OfflineCatalog, TmdbClient, TMDB_API_KEY_ENV, TMDB_BASE_URL_ENV,
};
pub use movielens::{
    parse_interactions, parse_item_titles, write_interactions, Format, ParseError,
};

use std::collections::{BTreeMap, BTreeSet, HashMap};

pub type UserId = u64;
pub type ItemId = u64;

/// One explicit rating event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Interaction {
    pub user_id: UserId,
    pub item_id: ItemId,
    pub rating: u8,
    pub timestamp: i64,
}

impl Interaction {
    pub fn new(user_id: UserId, item_id: ItemId, rating: u8, timestamp: i64) -> Self {
        Self {
            user_id,
            item_id,
            rating,
            timestamp,
        }
    }
}

/// Textual side information for one item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemMeta {
    pub item_id: ItemId,
    pub title: String,
    pub genres: Vec<String>,
    pub overview: String,
}

impl ItemMeta {
    pub fn new(
        item_id: ItemId,
        title: impl Into<String>,
        genres: Vec<String>,
        overview: impl Into<String>,
    ) -> Self {
        Self {
            item_id,
            title: title.into(),
            genres,
            overview: overview.into(),
        }
    }

    /// Metadata carrying only a title, used when no catalog knows the item.
    pub fn title_only(item_id: ItemId, title: impl Into<String>) -> Self {
        Self::new(item_id, title, Vec::new(), String::new())
    }
}

/// Unified item text: title, then genres, then overview.
pub fn build_item_text(meta: &ItemMeta) -> String {
    format!(
        "{}. Genres: {}. Overview: {}",
        meta.title,
        meta.genres.join(", "),
        meta.overview
    )
}

/// Deduplicated interactions plus item metadata.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub interactions: Vec<Interaction>,
    pub items: BTreeMap<ItemId, ItemMeta>,
    pub user_ids: Vec<UserId>,
    pub item_ids: Vec<ItemId>,
}

impl Dataset {
    /// Builds a dataset from raw interactions. Duplicate (user, item) pairs keep
    /// the last occurrence in input order; that occurrence takes the position of
    /// the first one so the remaining order is stable.
    ///
    /// Items referenced by interactions but missing from `items` are still listed
    /// in `item_ids`; metadata can be attached later.
    pub fn new(interactions: Vec<Interaction>, items: BTreeMap<ItemId, ItemMeta>) -> Self {
        let mut slot: HashMap<(UserId, ItemId), usize> = HashMap::new();
        let mut dedup: Vec<Interaction> = Vec::with_capacity(interactions.len());
        for it in interactions {
            match slot.get(&(it.user_id, it.item_id)) {
                Some(&pos) => dedup[pos] = it,
                None => {
                    slot.insert((it.user_id, it.item_id), dedup.len());
                    dedup.push(it);
                }
            }
        }

        let user_ids: BTreeSet<UserId> = dedup.iter().map(|i| i.user_id).collect();
        let mut item_ids: BTreeSet<ItemId> = dedup.iter().map(|i| i.item_id).collect();
        item_ids.extend(items.keys().copied());

        Self {
            interactions: dedup,
            items,
            user_ids: user_ids.into_iter().collect(),
            item_ids: item_ids.into_iter().collect(),
        }
    }

    /// Same catalog and user list, different interaction subset (e.g. a CV fold).
    pub fn with_interactions(&self, interactions: Vec<Interaction>) -> Self {
        Self {
            interactions,
            items: self.items.clone(),
            user_ids: self.user_ids.clone(),
            item_ids: self.item_ids.clone(),
        }
    }

    pub fn interactions_by_user(&self) -> BTreeMap<UserId, Vec<Interaction>> {
        let mut out: BTreeMap<UserId, Vec<Interaction>> = BTreeMap::new();
        for it in &self.interactions {
            out.entry(it.user_id).or_default().push(*it);
        }
        out
    }
}
