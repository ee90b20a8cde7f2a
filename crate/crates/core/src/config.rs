//! Run configuration: one TOML file, with command-line overrides applied on top.
//!
//! Relative paths are resolved against the directory holding the config file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Format, TMDB_API_KEY_ENV};
use crate::embedder::{DEFAULT_DIM, EMBEDDER_ENDPOINT_ENV};
use crate::evaluator::EvalConfig;
use crate::model::InitMode;
use crate::profiler::LLM_API_KEY_ENV;
use crate::trainer::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    Remote,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Ratings file (`u.data` or `ratings.dat`).
    pub ratings: PathBuf,
    pub format: Format,
    /// Item titles file (`u.item` or `movies.dat`).
    #[serde(default)]
    pub items: Option<PathBuf>,
    /// Offline catalog in metadata-cache format; used instead of the remote
    /// catalog when offline.
    #[serde(default)]
    pub metadata: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub profile: Provider,
    pub embed: Provider,
    pub embed_model: String,
    pub embed_dim: usize,
    /// Cap on concurrent remote requests.
    pub concurrency: usize,
    pub embed_batch_size: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            profile: Provider::Fallback,
            embed: Provider::Fallback,
            embed_model: "all-MiniLM-L6-v2".to_string(),
            embed_dim: DEFAULT_DIM,
            concurrency: 4,
            embed_batch_size: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub offline: bool,
    #[serde(default)]
    pub providers: ProviderConfig,
    #[serde(default = "default_init")]
    pub init: InitMode,
    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_init() -> InitMode {
    InitMode::TextInit
}

fn default_cache_dir() -> PathBuf {
    PathBuf::from("cache")
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Command-line values that replace config-file values when present.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub offline: bool,
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub k_values: Option<Vec<usize>>,
    pub ablate: bool,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    /// A config for `ratings` with every other field at its default.
    pub fn for_dataset(ratings: impl Into<PathBuf>, format: Format) -> Self {
        Self {
            dataset: DatasetConfig {
                ratings: ratings.into(),
                format,
                items: None,
                metadata: None,
            },
            offline: false,
            providers: ProviderConfig::default(),
            init: default_init(),
            cache_dir: default_cache_dir(),
            out_dir: default_out_dir(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }

    pub fn parse(text: &str, base_dir: &Path, origin: &Path) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.resolve_paths(base_dir);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset.ratings);
        if let Some(p) = self.dataset.items.as_mut() {
            fix(p);
        }
        if let Some(p) = self.dataset.metadata.as_mut() {
            fix(p);
        }
        fix(&mut self.cache_dir);
        fix(&mut self.out_dir);
    }

    pub fn apply(&mut self, o: &Overrides) {
        if o.offline {
            self.offline = true;
        }
        if let Some(seed) = o.seed {
            self.train.seed = seed;
        }
        if let Some(alpha) = o.alpha {
            self.train.alpha = alpha;
        }
        if let Some(k) = &o.k_values {
            self.eval.k_values = k.clone();
        }
        if o.ablate {
            self.init = InitMode::RandomInit;
            self.train.alpha = 0.0;
        }
        if let Some(out) = &o.out_dir {
            self.out_dir = out.clone();
        }
    }

    /// Provider actually used for profiles; offline runs never go remote.
    pub fn profile_provider(&self) -> Provider {
        if self.offline {
            Provider::Fallback
        } else {
            self.providers.profile
        }
    }

    pub fn embed_provider(&self) -> Provider {
        if self.offline {
            Provider::Fallback
        } else {
            self.providers.embed
        }
    }

    /// Every violation found, not just the first.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        if !self.dataset.ratings.is_file() {
            errs.push(format!("ratings file {} does not exist", self.dataset.ratings.display()));
        }
        for (label, p) in [("items", &self.dataset.items), ("metadata", &self.dataset.metadata)] {
            if let Some(p) = p {
                if !p.is_file() {
                    errs.push(format!("{label} file {} does not exist", p.display()));
                }
            }
        }
        if self.providers.embed_dim == 0 {
            errs.push("providers.embed_dim must be positive".into());
        }
        if self.providers.concurrency == 0 || self.providers.embed_batch_size == 0 {
            errs.push("providers.concurrency and providers.embed_batch_size must be positive".into());
        }
        if self.train.model.input_dim != self.providers.embed_dim {
            errs.push(format!(
                "train.model.input_dim ({}) must equal providers.embed_dim ({})",
                self.train.model.input_dim, self.providers.embed_dim
            ));
        }
        if let Err(e) = self.train.validate() {
            errs.push(e.to_string());
        }
        if let Err(e) = self.eval.validate() {
            errs.push(e.to_string());
        }
        if self.profile_provider() == Provider::Remote && std::env::var_os(LLM_API_KEY_ENV).is_none() {
            errs.push(format!("remote profile provider needs {LLM_API_KEY_ENV}"));
        }
        if self.embed_provider() == Provider::Remote && std::env::var_os(EMBEDDER_ENDPOINT_ENV).is_none() {
            errs.push(format!("remote embed provider needs {EMBEDDER_ENDPOINT_ENV}"));
        }
        if !self.offline && self.dataset.metadata.is_none() && std::env::var_os(TMDB_API_KEY_ENV).is_none() {
            log::warn!("no {TMDB_API_KEY_ENV} and no offline metadata: items will be title-only");
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }
}
