//! Per-user preference profiles built from each user's most extreme ratings.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::dataset::{Dataset, Interaction, ItemId, ItemMeta, UserId};
use crate::http::{self, Retry};

pub const LLM_API_KEY_ENV: &str = "LLM_API_KEY";
pub const LLM_ENDPOINT_ENV: &str = "LLM_ENDPOINT";
pub const LLM_MODEL_ENV: &str = "LLM_MODEL";

/// Maximum items kept on each side of a profile seed.
pub const PROFILE_ITEMS: usize = 5;

pub const EMPTY_PROFILE_TEXT: &str = "No strong preferences recorded.";

/// Versioned prompt template; `{loved}` and `{disliked}` are replaced with
/// item listings.
pub const PROMPT_TEMPLATE: &str = include_str!("../assets/profile_prompt_v1.txt");

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("profile request failed: {0}")]
    Remote(String),
    #[error("profile generator returned empty text")]
    EmptyResponse,
    #[error("profile cache {path}: {source}")]
    Cache {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("profile cache line {line}: {reason}")]
    CacheFormat { line: usize, reason: String },
    #[error("users without a profile: {0:?}")]
    Incomplete(Vec<UserId>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfileSeed {
    pub user_id: UserId,
    pub loved: Vec<ItemMeta>,
    pub disliked: Vec<ItemMeta>,
}

impl ProfileSeed {
    pub fn is_empty(&self) -> bool {
        self.loved.is_empty() && self.disliked.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Remote,
    Fallback,
}

impl Provenance {
    fn as_str(self) -> &'static str {
        match self {
            Provenance::Remote => "remote",
            Provenance::Fallback => "fallback",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserProfile {
    pub user_id: UserId,
    pub text: String,
    pub provenance: Provenance,
}

/// Picks up to five loved (rating 5) and five disliked (rating <= 2) items.
/// Among more than five candidates the most recent win; equal timestamps go
/// to the lower item id.
pub fn select_profile_items(
    user_id: UserId,
    user_interactions: &[Interaction],
    items: &BTreeMap<ItemId, ItemMeta>,
) -> ProfileSeed {
    let pick = |keep: fn(u8) -> bool| -> Vec<ItemMeta> {
        let mut cands: Vec<&Interaction> = user_interactions
            .iter()
            .filter(|i| i.user_id == user_id && keep(i.rating))
            .collect();
        cands.sort_by(|a, b| {
            b.timestamp
                .cmp(&a.timestamp)
                .then(a.item_id.cmp(&b.item_id))
        });
        let mut seen = BTreeSet::new();
        cands
            .into_iter()
            .filter(|i| seen.insert(i.item_id))
            .take(PROFILE_ITEMS)
            .map(|i| {
                items
                    .get(&i.item_id)
                    .cloned()
                    .unwrap_or_else(|| ItemMeta::title_only(i.item_id, format!("Item {}", i.item_id)))
            })
            .collect()
    };
    ProfileSeed {
        user_id,
        loved: pick(|r| r == 5),
        disliked: pick(|r| r <= 2),
    }
}

/// Something that turns a profile seed into preference text.
pub trait ProfileGenerator: Send + Sync {
    fn generate(&self, seed: &ProfileSeed) -> Result<String, ProfileError>;
    fn provenance(&self) -> Provenance;
}

/// Deterministic template generator used offline.
#[derive(Debug, Clone, Copy, Default)]
pub struct FallbackProfiler;

fn describe(items: &[ItemMeta]) -> String {
    if items.is_empty() {
        return "none".to_string();
    }
    items
        .iter()
        .map(|m| {
            if m.genres.is_empty() {
                m.title.clone()
            } else {
                format!("{} ({})", m.title, m.genres.join(", "))
            }
        })
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn fallback_profile_text(seed: &ProfileSeed) -> String {
    if seed.is_empty() {
        return EMPTY_PROFILE_TEXT.to_string();
    }
    format!(
        "Enjoys: {}. Dislikes: {}.",
        describe(&seed.loved),
        describe(&seed.disliked)
    )
}

impl ProfileGenerator for FallbackProfiler {
    fn generate(&self, seed: &ProfileSeed) -> Result<String, ProfileError> {
        Ok(fallback_profile_text(seed))
    }

    fn provenance(&self) -> Provenance {
        Provenance::Fallback
    }
}

pub fn render_prompt(seed: &ProfileSeed) -> String {
    let listing = |items: &[ItemMeta]| -> String {
        if items.is_empty() {
            return "(none)".to_string();
        }
        items
            .iter()
            .map(|m| {
                let mut line = format!("- {}", m.title);
                if !m.genres.is_empty() {
                    line.push_str(&format!(" [{}]", m.genres.join(", ")));
                }
                if !m.overview.is_empty() {
                    line.push_str(&format!(": {}", m.overview));
                }
                line
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    PROMPT_TEMPLATE
        .replace("{loved}", &listing(&seed.loved))
        .replace("{disliked}", &listing(&seed.disliked))
}

/// Chat-completion client (OpenAI-compatible request/response shape).
pub struct RemoteProfiler {
    endpoint: String,
    model: String,
    api_key: String,
    agent: ureq::Agent,
    retry: Retry,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

impl RemoteProfiler {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: impl Into<String>,
    ) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: api_key.into(),
            agent: http::agent(Duration::from_secs(60)),
            retry: Retry::default(),
        }
    }

    pub fn from_env() -> Option<Self> {
        let key = std::env::var(LLM_API_KEY_ENV).ok()?;
        let endpoint = std::env::var(LLM_ENDPOINT_ENV)
            .unwrap_or_else(|_| "https://api.openai.com/v1/chat/completions".to_string());
        let model = std::env::var(LLM_MODEL_ENV).unwrap_or_else(|_| "gpt-4o-mini".to_string());
        Some(Self::new(endpoint, model, key))
    }

    pub fn with_retry(mut self, retry: Retry) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.agent = http::agent(timeout);
        self
    }
}

impl ProfileGenerator for RemoteProfiler {
    fn generate(&self, seed: &ProfileSeed) -> Result<String, ProfileError> {
        let body = serde_json::json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": render_prompt(seed)}],
        });
        let resp: ChatResponse = self
            .retry
            .run(
                || {
                    self.agent
                        .post(&self.endpoint)
                        .header("Authorization", &format!("Bearer {}", self.api_key))
                        .send_json(&body)?
                        .body_mut()
                        .read_json::<ChatResponse>()
                },
                http::is_transient,
            )
            .map_err(|e| ProfileError::Remote(e.to_string()))?;
        let text = resp
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .unwrap_or_default();
        let text = text.split_whitespace().collect::<Vec<_>>().join(" ");
        if text.is_empty() {
            return Err(ProfileError::EmptyResponse);
        }
        Ok(text)
    }

    fn provenance(&self) -> Provenance {
        Provenance::Remote
    }
}

/// Produces a profile, degrading to the fallback template if the generator
/// fails. An empty seed always yields the fixed empty-profile text.
pub fn generate_profile(seed: &ProfileSeed, generator: &dyn ProfileGenerator) -> UserProfile {
    if seed.is_empty() {
        return UserProfile {
            user_id: seed.user_id,
            text: EMPTY_PROFILE_TEXT.to_string(),
            provenance: Provenance::Fallback,
        };
    }
    match generator.generate(seed) {
        Ok(text) => UserProfile {
            user_id: seed.user_id,
            text,
            provenance: generator.provenance(),
        },
        Err(err) => {
            log::warn!("profile for user {} fell back: {err}", seed.user_id);
            UserProfile {
                user_id: seed.user_id,
                text: fallback_profile_text(seed),
                provenance: Provenance::Fallback,
            }
        }
    }
}

/// Profiles for every user in `dataset`, reusing entries from `cached`.
/// Remote generation runs on at most `concurrency` threads.
pub fn build_profiles(
    dataset: &Dataset,
    generator: &dyn ProfileGenerator,
    cached: &BTreeMap<UserId, UserProfile>,
    concurrency: usize,
) -> BTreeMap<UserId, UserProfile> {
    let by_user = dataset.interactions_by_user();
    let empty = Vec::new();
    let todo: Vec<UserId> = dataset
        .user_ids
        .iter()
        .copied()
        .filter(|u| !cached.contains_key(u))
        .collect();
    let fresh = http::bounded_map(&todo, concurrency, |&u| {
        let seed = select_profile_items(u, by_user.get(&u).unwrap_or(&empty), &dataset.items);
        generate_profile(&seed, generator)
    });
    let mut out: BTreeMap<UserId, UserProfile> = dataset
        .user_ids
        .iter()
        .filter_map(|u| cached.get(u).map(|p| (*u, p.clone())))
        .collect();
    out.extend(fresh.into_iter().map(|p| (p.user_id, p)));
    out
}

/// Profile cache: `user_id<TAB>provenance<TAB>profile-text`, sorted by user.
pub fn write_profiles(path: &Path, profiles: &BTreeMap<UserId, UserProfile>) -> Result<(), ProfileError> {
    let io_err = |source| ProfileError::Cache {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err)?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for p in profiles.values() {
        let text: String = p
            .text
            .chars()
            .map(|c| if matches!(c, '\t' | '\n' | '\r') { ' ' } else { c })
            .collect();
        writeln!(w, "{}\t{}\t{}", p.user_id, p.provenance.as_str(), text).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_profiles(path: &Path) -> Result<BTreeMap<UserId, UserProfile>, ProfileError> {
    let io_err = |source| ProfileError::Cache {
        path: path.display().to_string(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let mut out = BTreeMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.is_empty() {
            continue;
        }
        let bad = |reason: &str| ProfileError::CacheFormat {
            line: idx + 1,
            reason: reason.to_string(),
        };
        let mut parts = line.splitn(3, '\t');
        let user_id: UserId = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad user id"))?;
        let provenance = match parts.next() {
            Some("remote") => Provenance::Remote,
            Some("fallback") => Provenance::Fallback,
            _ => return Err(bad("bad provenance")),
        };
        let text = parts.next().ok_or_else(|| bad("missing text"))?;
        if text.is_empty() {
            return Err(bad("empty profile text"));
        }
        out.insert(
            user_id,
            UserProfile {
                user_id,
                text: text.to_string(),
                provenance,
            },
        );
    }
    Ok(out)
}
