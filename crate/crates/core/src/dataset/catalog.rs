//! Item metadata lookup: a line-delimited on-disk cache in front of a catalog
//! client (live TMDB or an offline metadata file).

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use super::{ItemId, ItemMeta};
use crate::http::{self, Retry};

pub const TMDB_API_KEY_ENV: &str = "TMDB_API_KEY";
/// Overrides the catalog API base URL (useful for mirrors and test stubs).
pub const TMDB_BASE_URL_ENV: &str = "TMDB_BASE_URL";

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("no metadata for item {0}")]
    Missing(ItemId),
    #[error("catalog request failed: {0}")]
    Remote(String),
    #[error("metadata cache {path}: {source}")]
    Cache {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("metadata cache {path} line {line}: {reason}")]
    CacheFormat {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

/// A source of item metadata. `title_hint` is the MovieLens title, used by
/// clients that search by name.
pub trait CatalogClient: Send + Sync {
    fn fetch(&self, item_id: ItemId, title_hint: &str) -> Result<Option<ItemMeta>, CatalogError>;
}

fn clean_field(s: &str) -> String {
    s.chars()
        .map(|c| if matches!(c, '\t' | '\n' | '\r') { ' ' } else { c })
        .collect()
}

fn format_record(meta: &ItemMeta) -> String {
    let genres: Vec<String> = meta
        .genres
        .iter()
        .map(|g| clean_field(g).replace('|', "/"))
        .collect();
    format!(
        "{}\t{}\t{}\t{}",
        meta.item_id,
        clean_field(&meta.title),
        genres.join("|"),
        clean_field(&meta.overview)
    )
}

fn parse_record(line: &str) -> Result<ItemMeta, String> {
    let fields: Vec<&str> = line.splitn(4, '\t').collect();
    if fields.len() != 4 {
        return Err(format!("expected 4 fields, found {}", fields.len()));
    }
    let item_id: ItemId = fields[0]
        .parse()
        .map_err(|_| format!("bad item id {:?}", fields[0]))?;
    if fields[1].is_empty() {
        return Err("empty title".into());
    }
    let genres = if fields[2].is_empty() {
        Vec::new()
    } else {
        fields[2].split('|').map(str::to_string).collect()
    };
    Ok(ItemMeta::new(item_id, fields[1], genres, fields[3]))
}

fn read_records(path: &Path) -> Result<BTreeMap<ItemId, ItemMeta>, CatalogError> {
    let file = File::open(path).map_err(|source| CatalogError::Cache {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = BTreeMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CatalogError::Cache {
            path: path.to_path_buf(),
            source,
        })?;
        if line.is_empty() {
            continue;
        }
        let meta = parse_record(&line).map_err(|reason| CatalogError::CacheFormat {
            path: path.to_path_buf(),
            line: idx + 1,
            reason,
        })?;
        out.insert(meta.item_id, meta);
    }
    Ok(out)
}

/// Metadata cache file: `item_id<TAB>title<TAB>g1|g2|...<TAB>overview`.
///
/// Reads are served from memory. Inserts append to the file while holding
/// the lock, so concurrent fetchers never interleave partial lines.
pub struct MetadataCache {
    path: Option<PathBuf>,
    entries: Mutex<BTreeMap<ItemId, ItemMeta>>,
}

impl MetadataCache {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            entries: Mutex::new(BTreeMap::new()),
        }
    }

    /// Opens (or prepares to create) a cache file.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, CatalogError> {
        let path = path.into();
        let entries = if path.exists() {
            read_records(&path)?
        } else {
            BTreeMap::new()
        };
        Ok(Self {
            path: Some(path),
            entries: Mutex::new(entries),
        })
    }

    pub fn get(&self, item_id: ItemId) -> Option<ItemMeta> {
        self.entries.lock().unwrap().get(&item_id).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, meta: ItemMeta) -> Result<(), CatalogError> {
        let mut entries = self.entries.lock().unwrap();
        if let Some(path) = &self.path {
            let io_err = |source| CatalogError::Cache {
                path: path.clone(),
                source,
            };
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir).map_err(io_err)?;
            }
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(io_err)?;
            writeln!(f, "{}", format_record(&meta)).map_err(io_err)?;
        }
        entries.insert(meta.item_id, meta);
        Ok(())
    }

    /// Rewrites the file sorted by item id, one record per item.
    pub fn compact(&self) -> Result<(), CatalogError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let entries = self.entries.lock().unwrap();
        write_sorted(path, entries.values()).map_err(|source| CatalogError::Cache {
            path: path.clone(),
            source,
        })
    }
}

fn write_sorted<'a>(path: &Path, metas: impl Iterator<Item = &'a ItemMeta>) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        for meta in metas {
            writeln!(w, "{}", format_record(meta))?;
        }
        w.flush()?;
    }
    fs::rename(tmp, path)
}

/// Writes a metadata file in cache format.
pub fn write_metadata_file(path: &Path, metas: &BTreeMap<ItemId, ItemMeta>) -> io::Result<()> {
    write_sorted(path, metas.values())
}

/// Catalog client backed by a local metadata file in cache format.
pub struct OfflineCatalog {
    records: BTreeMap<ItemId, ItemMeta>,
}

impl OfflineCatalog {
    pub fn new(records: BTreeMap<ItemId, ItemMeta>) -> Self {
        Self { records }
    }

    pub fn from_file(path: &Path) -> Result<Self, CatalogError> {
        Ok(Self::new(read_records(path)?))
    }
}

impl CatalogClient for OfflineCatalog {
    fn fetch(&self, item_id: ItemId, _title_hint: &str) -> Result<Option<ItemMeta>, CatalogError> {
        Ok(self.records.get(&item_id).cloned())
    }
}

/// Cache-first metadata lookup. A remote result is persisted to the cache
/// before it is returned.
pub fn fetch_item_metadata(
    item_id: ItemId,
    title_hint: &str,
    client: Option<&dyn CatalogClient>,
    cache: &MetadataCache,
) -> Result<ItemMeta, CatalogError> {
    if let Some(meta) = cache.get(item_id) {
        return Ok(meta);
    }
    let Some(client) = client else {
        return Err(CatalogError::Missing(item_id));
    };
    match client.fetch(item_id, title_hint)? {
        Some(mut meta) => {
            meta.item_id = item_id;
            if meta.title.trim().is_empty() {
                meta.title = title_hint.to_string();
            }
            cache.insert(meta.clone())?;
            Ok(meta)
        }
        None => Err(CatalogError::Missing(item_id)),
    }
}

/// Resolves metadata for every item, fetching on up to `concurrency` threads.
///
/// With `substitute_missing`, unresolvable items (not found, or remote failure)
/// become title-only records instead of errors. Substitutes are not cached.
pub fn enrich_items(
    titles: &BTreeMap<ItemId, String>,
    client: Option<&dyn CatalogClient>,
    cache: &MetadataCache,
    substitute_missing: bool,
    concurrency: usize,
) -> Result<BTreeMap<ItemId, ItemMeta>, CatalogError> {
    let ids: Vec<(ItemId, &String)> = titles.iter().map(|(&id, t)| (id, t)).collect();
    let results = http::bounded_map(&ids, concurrency, |(id, title)| {
        match fetch_item_metadata(*id, title, client, cache) {
            Ok(meta) => Ok(meta),
            Err(CatalogError::Missing(_) | CatalogError::Remote(_)) if substitute_missing => {
                let title = if title.trim().is_empty() {
                    format!("Item {id}")
                } else {
                    (*title).clone()
                };
                Ok(ItemMeta::title_only(*id, title))
            }
            Err(e) => Err(e),
        }
    });
    let mut out = BTreeMap::new();
    for r in results {
        let meta = r?;
        out.insert(meta.item_id, meta);
    }
    cache.compact()?;
    Ok(out)
}

/// Splits a MovieLens title such as `"Shawshank Redemption, The (1994)"` into
/// a search query (`"The Shawshank Redemption"`) and an optional year.
pub(crate) fn search_terms(title: &str) -> (String, Option<u32>) {
    let mut name = title.trim();
    let mut year = None;
    if let Some(open) = name.rfind(" (") {
        let tail = &name[open + 2..];
        if let Some(digits) = tail.strip_suffix(')') {
            if digits.len() == 4 {
                if let Ok(y) = digits.parse() {
                    year = Some(y);
                    name = name[..open].trim_end();
                }
            }
        }
    }
    let mut query = name.to_string();
    for article in ["The", "A", "An", "Les", "La", "Le", "Il", "Das", "Der", "Die"] {
        let suffix = format!(", {article}");
        if let Some(stem) = name.strip_suffix(&suffix) {
            query = format!("{article} {stem}");
            break;
        }
    }
    (query, year)
}

#[derive(Deserialize)]
struct SearchResponse {
    results: Vec<SearchHit>,
}

#[derive(Deserialize)]
struct SearchHit {
    #[serde(default)]
    title: String,
    #[serde(default)]
    overview: Option<String>,
    #[serde(default)]
    genre_ids: Vec<u64>,
}

#[derive(Deserialize)]
struct GenreList {
    genres: Vec<Genre>,
}

#[derive(Deserialize)]
struct Genre {
    id: u64,
    name: String,
}

/// Live client for a TMDB-compatible API. Looks items up by title search and
/// maps genre ids to names via the genre list endpoint (fetched once).
pub struct TmdbClient {
    api_key: String,
    base_url: String,
    agent: ureq::Agent,
    retry: Retry,
    genres: OnceLock<HashMap<u64, String>>,
}

impl TmdbClient {
    pub fn new(api_key: impl Into<String>) -> Self {
        Self::with_base_url(api_key, "https://api.themoviedb.org/3")
    }

    pub fn with_base_url(api_key: impl Into<String>, base_url: impl Into<String>) -> Self {
        Self {
            api_key: api_key.into(),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            agent: http::agent(Duration::from_secs(20)),
            retry: Retry::default(),
            genres: OnceLock::new(),
        }
    }

    pub fn from_env() -> Option<Self> {
        let key = std::env::var(TMDB_API_KEY_ENV).ok()?;
        Some(match std::env::var(TMDB_BASE_URL_ENV) {
            Ok(url) => Self::with_base_url(key, url),
            Err(_) => Self::new(key),
        })
    }

    pub fn with_retry(mut self, retry: Retry) -> Self {
        self.retry = retry;
        self
    }

    fn get_json<T: serde::de::DeserializeOwned>(
        &self,
        path: &str,
        query: &[(&str, String)],
    ) -> Result<T, CatalogError> {
        let url = format!("{}{}", self.base_url, path);
        self.retry
            .run(
                || {
                    let mut req = self.agent.get(&url).query("api_key", &self.api_key);
                    for (k, v) in query {
                        req = req.query(*k, v);
                    }
                    req.call()?.body_mut().read_json::<T>()
                },
                http::is_transient,
            )
            .map_err(|e| CatalogError::Remote(e.to_string()))
    }

    fn genre_names(&self) -> Result<&HashMap<u64, String>, CatalogError> {
        if let Some(g) = self.genres.get() {
            return Ok(g);
        }
        let list: GenreList = self.get_json("/genre/movie/list", &[])?;
        let map = list.genres.into_iter().map(|g| (g.id, g.name)).collect();
        Ok(self.genres.get_or_init(|| map))
    }
}

impl CatalogClient for TmdbClient {
    fn fetch(&self, item_id: ItemId, title_hint: &str) -> Result<Option<ItemMeta>, CatalogError> {
        let (query, year) = search_terms(title_hint);
        let mut params = vec![("query", query)];
        if let Some(y) = year {
            params.push(("year", y.to_string()));
        }
        let resp: SearchResponse = self.get_json("/search/movie", &params)?;
        let Some(hit) = resp.results.into_iter().next() else {
            return Ok(None);
        };
        let names = self.genre_names()?;
        let genres = hit
            .genre_ids
            .iter()
            .filter_map(|id| names.get(id).cloned())
            .collect();
        let title = if title_hint.trim().is_empty() {
            hit.title
        } else {
            title_hint.to_string()
        };
        Ok(Some(ItemMeta::new(
            item_id,
            title,
            genres,
            hit.overview.unwrap_or_default(),
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting {
        inner: OfflineCatalog,
        calls: AtomicUsize,
    }

    impl CatalogClient for Counting {
        fn fetch(&self, id: ItemId, hint: &str) -> Result<Option<ItemMeta>, CatalogError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.fetch(id, hint)
        }
    }

    fn counting() -> Counting {
        let mut m = BTreeMap::new();
        m.insert(
            1,
            ItemMeta::new(1, "Toy Story", vec!["Animation".into()], "A\tcowboy\ndoll"),
        );
        Counting {
            inner: OfflineCatalog::new(m),
            calls: AtomicUsize::new(0),
        }
    }

    #[test]
    fn cache_hit_makes_no_remote_call() {
        let client = counting();
        let cache = MetadataCache::in_memory();
        cache.insert(ItemMeta::title_only(1, "Cached")).unwrap();
        let meta = fetch_item_metadata(1, "x", Some(&client), &cache).unwrap();
        assert_eq!(meta.title, "Cached");
        assert_eq!(client.calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn second_fetch_is_served_from_cache() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("meta.tsv");
        let client = counting();
        let cache = MetadataCache::open(&path).unwrap();
        let a = fetch_item_metadata(1, "Toy Story", Some(&client), &cache).unwrap();
        let b = fetch_item_metadata(1, "Toy Story", Some(&client), &cache).unwrap();
        assert_eq!(a, b);
        assert_eq!(client.calls.load(Ordering::SeqCst), 1);

        // persisted before return, with tabs/newlines flattened
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, "1\tToy Story\tAnimation\tA cowboy doll\n");
        let reopened = MetadataCache::open(&path).unwrap();
        assert_eq!(reopened.get(1).unwrap().overview, "A cowboy doll");
    }

    #[test]
    fn missing_everywhere_is_an_error_or_title_only() {
        let client = counting();
        let cache = MetadataCache::in_memory();
        assert!(matches!(
            fetch_item_metadata(9, "Heat (1995)", Some(&client), &cache),
            Err(CatalogError::Missing(9))
        ));
        let mut titles = BTreeMap::new();
        titles.insert(9, "Heat (1995)".to_string());
        let out = enrich_items(&titles, Some(&client), &cache, true, 1).unwrap();
        assert_eq!(out[&9], ItemMeta::title_only(9, "Heat (1995)"));
        assert!(cache.get(9).is_none());
    }

    #[test]
    fn no_client_only_consults_cache() {
        let cache = MetadataCache::in_memory();
        assert!(fetch_item_metadata(1, "x", None, &cache).is_err());
    }

    #[test]
    fn compact_rewrites_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("meta.tsv");
        let cache = MetadataCache::open(&path).unwrap();
        cache.insert(ItemMeta::title_only(3, "C")).unwrap();
        cache.insert(ItemMeta::title_only(1, "A")).unwrap();
        cache.compact().unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "1\tA\t\t\n3\tC\t\t\n");
    }

    #[test]
    fn movielens_titles_become_search_terms() {
        assert_eq!(
            search_terms("Shawshank Redemption, The (1994)"),
            ("The Shawshank Redemption".to_string(), Some(1994))
        );
        assert_eq!(search_terms("Toy Story (1995)"), ("Toy Story".into(), Some(1995)));
        assert_eq!(search_terms("Untitled"), ("Untitled".into(), None));
    }
}
