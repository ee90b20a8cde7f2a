//! Text to fixed-dimension vectors, and the per-run embedding table.
//!
//! The offline encoder is signed feature hashing over lowercase word tokens:
//!
//! * tokens are maximal runs of alphanumeric characters, lowercased;
//! * `h1` is 64-bit FNV-1a over the token's UTF-8 bytes, and the bucket is
//!   `h1 mod dim`;
//! * `h2` is the SplitMix64 finalizer applied to `h1 ^ 0x9E3779B97F4A7C15`;
//!   an even `h2` adds +1 to the bucket, an odd one adds -1;
//! * the accumulated vector is L2-normalized unless it is all zeros.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::ops::Deref;
use std::path::Path;
use std::time::Duration;

use thiserror::Error;

use crate::dataset::{build_item_text, Dataset, ItemId, UserId};
use crate::http::{self, Retry};
use crate::profiler::UserProfile;

pub const DEFAULT_DIM: usize = 384;
pub const EMBEDDER_ENDPOINT_ENV: &str = "EMBEDDER_ENDPOINT";
pub const EMBEDDER_API_KEY_ENV: &str = "EMBEDDER_API_KEY";

const CACHE_MAGIC: &[u8; 4] = b"GEMB";

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("encoder request failed: {0}")]
    Remote(String),
    #[error("encoder returned {got} vectors of dimension {dim}, expected {expected_count} of dimension {expected_dim}")]
    Shape {
        got: usize,
        dim: usize,
        expected_count: usize,
        expected_dim: usize,
    },
    #[error("encoder returned a non-finite value")]
    NonFinite,
    #[error("missing inputs: users {users:?}, items {items:?}")]
    Incomplete { users: Vec<UserId>, items: Vec<ItemId> },
    #[error("embedding cache: {0}")]
    Cache(#[from] io::Error),
    #[error("embedding cache is malformed: {0}")]
    CacheFormat(String),
}

/// A dense real vector used as an initial node feature.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    /// Cosine similarity; 0 when either side is the zero vector.
    pub fn cosine(&self, other: &Self) -> f64 {
        let n = self.norm() * other.norm();
        if n == 0.0 {
            0.0
        } else {
            self.dot(other) / n
        }
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for EmbeddingVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

/// Bucket index and sign for one token.
pub fn token_slot(token: &str, dim: usize) -> (usize, f64) {
    let h1 = fnv1a64(token.as_bytes());
    let h2 = splitmix64(h1 ^ 0x9E37_79B9_7F4A_7C15);
    let sign = if h2 & 1 == 0 { 1.0 } else { -1.0 };
    ((h1 % dim as u64) as usize, sign)
}

/// Signed feature-hashing embedding; see the module docs for the exact hashes.
pub fn hash_embed(text: &str, dim: usize) -> EmbeddingVector {
    assert!(dim >= 1, "embedding dimension must be positive");
    let mut v = vec![0.0; dim];
    for tok in tokenize(text) {
        let (idx, sign) = token_slot(&tok, dim);
        v[idx] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    EmbeddingVector(v)
}

/// A text encoder. One encoder is used for every node of a table.
pub trait TextEncoder: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError>;
}

#[derive(Debug, Clone)]
pub struct HashingEncoder {
    dim: usize,
}

impl HashingEncoder {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1);
        Self { dim }
    }
}

impl Default for HashingEncoder {
    fn default() -> Self {
        Self::new(DEFAULT_DIM)
    }
}

impl TextEncoder for HashingEncoder {
    fn name(&self) -> &str {
        "hashing"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        Ok(texts.iter().map(|t| hash_embed(t, self.dim)).collect())
    }
}

/// HTTP encoder: POSTs `{"model": .., "input": [texts]}` and expects a JSON
/// array holding one float array per input text.
pub struct RemoteEncoder {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    dim: usize,
    agent: ureq::Agent,
    retry: Retry,
}

impl RemoteEncoder {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, dim: usize) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            dim,
            agent: http::agent(Duration::from_secs(60)),
            retry: Retry::default(),
        }
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    pub fn with_retry(mut self, retry: Retry) -> Self {
        self.retry = retry;
        self
    }
}

impl TextEncoder for RemoteEncoder {
    fn name(&self) -> &str {
        &self.model
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let body = serde_json::json!({ "model": self.model, "input": texts });
        let rows: Vec<Vec<f64>> = self
            .retry
            .run(
                || {
                    let mut req = self.agent.post(&self.endpoint);
                    if let Some(key) = &self.api_key {
                        req = req.header("Authorization", &format!("Bearer {key}"));
                    }
                    req.send_json(&body)?.body_mut().read_json::<Vec<Vec<f64>>>()
                },
                http::is_transient,
            )
            .map_err(|e| EmbedError::Remote(e.to_string()))?;
        if rows.len() != texts.len() || rows.iter().any(|r| r.len() != self.dim) {
            return Err(EmbedError::Shape {
                got: rows.len(),
                dim: rows.first().map_or(0, Vec::len),
                expected_count: texts.len(),
                expected_dim: self.dim,
            });
        }
        if rows.iter().flatten().any(|x| !x.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(rows.into_iter().map(EmbeddingVector).collect())
    }
}

pub fn embed_text(text: &str, encoder: &dyn TextEncoder) -> Result<EmbeddingVector, EmbedError> {
    let mut v = encoder.encode_batch(&[text])?;
    v.pop().ok_or(EmbedError::Shape {
        got: 0,
        dim: 0,
        expected_count: 1,
        expected_dim: encoder.dim(),
    })
}

/// Initial node features for every user and item. Values are stored at f32
/// precision so a table reloaded from cache equals the freshly built one.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub user_vectors: BTreeMap<UserId, Vec<f64>>,
    pub item_vectors: BTreeMap<ItemId, Vec<f64>>,
}

fn to_f32_precision(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x as f32 as f64).collect()
}

#[derive(Debug, Clone)]
pub struct EmbedOptions {
    pub batch_size: usize,
    pub concurrency: usize,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        Self {
            batch_size: 64,
            concurrency: 4,
        }
    }
}

impl EmbeddingTable {
    /// True when the table holds exactly the given ids.
    pub fn covers(&self, users: &[UserId], items: &[ItemId]) -> bool {
        self.user_vectors.keys().eq(users.iter()) && self.item_vectors.keys().eq(items.iter())
    }

    pub fn write(&self, path: &Path) -> Result<(), EmbedError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        let count = (self.user_vectors.len() + self.item_vectors.len()) as u64;
        w.write_all(&count.to_le_bytes())?;
        let records = self
            .user_vectors
            .iter()
            .map(|(id, v)| (0u8, id, v))
            .chain(self.item_vectors.iter().map(|(id, v)| (1u8, id, v)));
        for (kind, id, v) in records {
            w.write_all(&[kind])?;
            w.write_all(&id.to_le_bytes())?;
            for &x in v {
                w.write_all(&(x as f32).to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, EmbedError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(EmbedError::CacheFormat("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let dim = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8)?;
        let count = u64::from_le_bytes(b8);
        let mut table = EmbeddingTable {
            dim,
            user_vectors: BTreeMap::new(),
            item_vectors: BTreeMap::new(),
        };
        for _ in 0..count {
            let mut kind = [0u8; 1];
            r.read_exact(&mut kind)?;
            r.read_exact(&mut b8)?;
            let id = u64::from_le_bytes(b8);
            let mut v = Vec::with_capacity(dim);
            for _ in 0..dim {
                r.read_exact(&mut b4)?;
                v.push(f32::from_le_bytes(b4) as f64);
            }
            let slot = match kind[0] {
                0 => &mut table.user_vectors,
                1 => &mut table.item_vectors,
                k => return Err(EmbedError::CacheFormat(format!("unknown record kind {k}"))),
            };
            if slot.insert(id, v).is_some() {
                return Err(EmbedError::CacheFormat(format!("duplicate record for id {id}")));
            }
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(EmbedError::CacheFormat("trailing bytes".into()));
        }
        Ok(table)
    }
}

/// Builds the table for every user and item in `dataset`. With a warm cache
/// at `cache` (same dimension, same id sets) the encoder is never called.
pub fn build_embedding_table(
    dataset: &Dataset,
    profiles: &BTreeMap<UserId, UserProfile>,
    encoder: &dyn TextEncoder,
    cache: Option<&Path>,
    options: &EmbedOptions,
) -> Result<EmbeddingTable, EmbedError> {
    let missing_users: Vec<UserId> = dataset
        .user_ids
        .iter()
        .copied()
        .filter(|u| !profiles.contains_key(u))
        .collect();
    let missing_items: Vec<ItemId> = dataset
        .item_ids
        .iter()
        .copied()
        .filter(|i| !dataset.items.contains_key(i))
        .collect();
    if !missing_users.is_empty() || !missing_items.is_empty() {
        return Err(EmbedError::Incomplete {
            users: missing_users,
            items: missing_items,
        });
    }

    if let Some(path) = cache {
        if path.exists() {
            match EmbeddingTable::read(path) {
                Ok(t) if t.dim == encoder.dim() && t.covers(&dataset.user_ids, &dataset.item_ids) => {
                    return Ok(t)
                }
                Ok(_) => log::info!("embedding cache {} is stale; rebuilding", path.display()),
                Err(e) => log::warn!("ignoring unreadable embedding cache {}: {e}", path.display()),
            }
        }
    }

    let item_texts: Vec<String> = dataset
        .item_ids
        .iter()
        .map(|i| build_item_text(&dataset.items[i]))
        .collect();
    let texts: Vec<&str> = dataset
        .user_ids
        .iter()
        .map(|u| profiles[u].text.as_str())
        .chain(item_texts.iter().map(String::as_str))
        .collect();
    let batches: Vec<&[&str]> = texts.chunks(options.batch_size.max(1)).collect();
    let encoded = http::bounded_map(&batches, options.concurrency, |b| encoder.encode_batch(b));
    let mut vectors = Vec::with_capacity(texts.len());
    for batch in encoded {
        vectors.extend(batch?);
    }
    let dim = encoder.dim();
    if vectors.len() != texts.len() || vectors.iter().any(|v| v.len() != dim) {
        return Err(EmbedError::Shape {
            got: vectors.len(),
            dim: vectors.first().map_or(0, |v| v.len()),
            expected_count: texts.len(),
            expected_dim: dim,
        });
    }

    let mut it = vectors.into_iter();
    let user_vectors = dataset
        .user_ids
        .iter()
        .map(|&u| (u, to_f32_precision(&it.next().unwrap())))
        .collect();
    let item_vectors = dataset
        .item_ids
        .iter()
        .map(|&i| (i, to_f32_precision(&it.next().unwrap())))
        .collect();
    let table = EmbeddingTable {
        dim,
        user_vectors,
        item_vectors,
    };
    if let Some(path) = cache {
        table.write(path)?;
    }
    Ok(table)
}

/// Number of distinct tokens in `text`; an upper bound on the nonzero
/// coordinates of its hashed embedding.
pub fn distinct_tokens(text: &str) -> usize {
    tokenize(text).collect::<BTreeSet<_>>().len()
}
