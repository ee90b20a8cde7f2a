//! End-to-end stages: ingest, profile, embed, train, evaluate, recommend, and
//! the full cross-validated run.
//!
//! Output layout under `out_dir`:
//!
//! ```text
//! items.tsv                  item_id, unified text
//! metrics.tsv                every (fold, slice, k) row, means included
//! full/  fold0/ .. foldN/    model.ckpt, training_log.tsv, metrics.tsv, report.txt
//! mean/                      metrics.tsv, report.txt
//! ```
//!
//! Caches under `cache_dir`: `metadata.tsv`, and per scope
//! `profiles-<provider>.tsv` and `embeddings-<provider>-<encoder>-<dim>.bin`.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{ConfigError, Provider, RunConfig};
use crate::dataset::{
    build_item_text, enrich_items, parse_interactions, parse_item_titles, CatalogClient,
    CatalogError, Dataset, Interaction, ItemId, MetadataCache, OfflineCatalog, ParseError,
    TmdbClient, UserId,
};
use crate::embedder::{
    build_embedding_table, EmbedError, EmbedOptions, EmbeddingTable, HashingEncoder,
    RemoteEncoder, TextEncoder, EMBEDDER_API_KEY_ENV, EMBEDDER_ENDPOINT_ENV,
};
use crate::evaluator::{
    evaluate, kfold_split, mean_report, write_report_text, write_report_tsv, EvalError,
    MetricsReport, Slice, TSV_HEADER,
};
use crate::graph::{build_graph_with_nodes, BipartiteGraph, GraphError, NodeIndex};
use crate::model::{init_features, CheckpointError, InitMode, ModelError, TrainedModel};
use crate::profiler::{
    build_profiles, read_profiles, write_profiles, FallbackProfiler, ProfileError,
    ProfileGenerator, RemoteProfiler, UserProfile, LLM_API_KEY_ENV,
};
use crate::trainer::{self, write_training_log, TrainError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: ParseError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{0}")]
    Usage(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// The external services a run talks to.
pub struct Providers {
    pub catalog: Option<Box<dyn CatalogClient>>,
    pub profiler: Box<dyn ProfileGenerator>,
    pub profile_kind: Provider,
    pub encoder: Box<dyn TextEncoder>,
}

impl Providers {
    /// Offline catalog file, template profiles and the hashing encoder.
    pub fn offline(config: &RunConfig) -> Result<Self, PipelineError> {
        let catalog = match &config.dataset.metadata {
            Some(p) => Some(Box::new(OfflineCatalog::from_file(p)?) as Box<dyn CatalogClient>),
            None => None,
        };
        Ok(Self {
            catalog,
            profiler: Box::new(FallbackProfiler),
            profile_kind: Provider::Fallback,
            encoder: Box::new(HashingEncoder::new(config.providers.embed_dim)),
        })
    }

    /// Providers selected by the config. Offline runs never construct a
    /// network client.
    pub fn from_config(config: &RunConfig) -> Result<Self, PipelineError> {
        let mut p = Self::offline(config)?;
        if config.offline {
            return Ok(p);
        }
        if let Some(tmdb) = TmdbClient::from_env() {
            p.catalog = Some(Box::new(tmdb));
        }
        if config.profile_provider() == Provider::Remote {
            let remote = RemoteProfiler::from_env().ok_or_else(|| {
                ConfigError::Invalid(vec![format!("remote profile provider needs {LLM_API_KEY_ENV}")])
            })?;
            p.profiler = Box::new(remote);
            p.profile_kind = Provider::Remote;
        }
        if config.embed_provider() == Provider::Remote {
            let endpoint = std::env::var(EMBEDDER_ENDPOINT_ENV).map_err(|_| {
                ConfigError::Invalid(vec![format!("remote embed provider needs {EMBEDDER_ENDPOINT_ENV}")])
            })?;
            let mut enc = RemoteEncoder::new(
                endpoint,
                config.providers.embed_model.clone(),
                config.providers.embed_dim,
            );
            if let Ok(key) = std::env::var(EMBEDDER_API_KEY_ENV) {
                enc = enc.with_api_key(key);
            }
            p.encoder = Box::new(enc);
        }
        Ok(p)
    }
}

/// Which interactions a stage sees: everything, or one fold's training split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Full,
    Fold(usize),
}

impl Scope {
    pub fn dir_name(self) -> String {
        match self {
            Scope::Full => "full".to_string(),
            Scope::Fold(k) => format!("fold{k}"),
        }
    }
}

/// Per-fold and mean reports of a cross-validated run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub folds: Vec<FoldReport>,
    pub mean_all: MetricsReport,
    pub mean_cold: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct FoldReport {
    pub fold: usize,
    pub all: MetricsReport,
    pub cold: MetricsReport,
    pub model: TrainedModel,
}

pub struct Pipeline {
    pub config: RunConfig,
    pub providers: Providers,
}

impl Pipeline {
    pub fn new(config: RunConfig, providers: Providers) -> Self {
        Self { config, providers }
    }

    /// Validates the config and builds the configured providers.
    pub fn from_config(config: RunConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let providers = Providers::from_config(&config)?;
        Ok(Self::new(config, providers))
    }

    fn scope_cache(&self, scope: Scope) -> PathBuf {
        self.config.cache_dir.join(scope.dir_name())
    }

    pub fn scope_out(&self, scope: Scope) -> PathBuf {
        self.config.out_dir.join(scope.dir_name())
    }

    pub fn checkpoint_path(&self, scope: Scope) -> PathBuf {
        self.scope_out(scope).join("model.ckpt")
    }

    /// Parses ratings and resolves metadata for every item (title-only when
    /// no catalog knows it).
    pub fn ingest(&self) -> Result<Dataset, PipelineError> {
        let ds = &self.config.dataset;
        let f = File::open(&ds.ratings).map_err(io_err(&ds.ratings))?;
        let interactions = parse_interactions(BufReader::new(f), ds.format).map_err(|source| {
            PipelineError::Parse {
                path: ds.ratings.clone(),
                source,
            }
        })?;
        let mut titles: BTreeMap<ItemId, String> = match &ds.items {
            Some(p) => {
                let f = File::open(p).map_err(io_err(p))?;
                parse_item_titles(BufReader::new(f), ds.format).map_err(|source| {
                    PipelineError::Parse {
                        path: p.clone(),
                        source,
                    }
                })?
            }
            None => BTreeMap::new(),
        };
        for it in &interactions {
            titles.entry(it.item_id).or_default();
        }
        fs::create_dir_all(&self.config.cache_dir).map_err(io_err(&self.config.cache_dir))?;
        let cache = MetadataCache::open(self.config.cache_dir.join("metadata.tsv"))?;
        let items = enrich_items(
            &titles,
            self.providers.catalog.as_deref(),
            &cache,
            true,
            self.config.providers.concurrency,
        )?;
        let dataset = Dataset::new(interactions, items);
        log::info!(
            "ingested {} interactions, {} users, {} items",
            dataset.interactions.len(),
            dataset.user_ids.len(),
            dataset.item_ids.len()
        );
        Ok(dataset)
    }

    /// Writes `items.tsv`: `item_id<TAB>unified text`.
    pub fn write_item_texts(&self, dataset: &Dataset) -> Result<PathBuf, PipelineError> {
        let path = self.config.out_dir.join("items.tsv");
        fs::create_dir_all(&self.config.out_dir).map_err(io_err(&self.config.out_dir))?;
        let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        for meta in dataset.items.values() {
            let text = build_item_text(meta).replace(['\t', '\n', '\r'], " ");
            writeln!(w, "{}\t{text}", meta.item_id).map_err(io_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;
        Ok(path)
    }

    /// The dataset a scope trains on.
    pub fn scoped(&self, dataset: &Dataset, scope: Scope) -> Result<(Dataset, Vec<Interaction>), PipelineError> {
        match scope {
            Scope::Full => Ok((dataset.clone(), Vec::new())),
            Scope::Fold(k) => {
                let folds = kfold_split(&dataset.interactions, self.config.eval.folds, self.config.eval.split_seed)?;
                let fold = folds.into_iter().nth(k).ok_or_else(|| {
                    PipelineError::Usage(format!(
                        "fold {k} out of range ({} folds)",
                        self.config.eval.folds
                    ))
                })?;
                Ok((dataset.with_interactions(fold.train), fold.test))
            }
        }
    }

    /// Profiles for every user from the scope's interactions, cached per scope.
    pub fn profiles(&self, train: &Dataset, scope: Scope) -> Result<BTreeMap<UserId, UserProfile>, PipelineError> {
        let dir = self.scope_cache(scope);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let kind = match self.providers.profile_kind {
            Provider::Remote => "remote",
            Provider::Fallback => "fallback",
        };
        let path = dir.join(format!("profiles-{kind}.tsv"));
        let cached = if path.exists() {
            read_profiles(&path)?
        } else {
            BTreeMap::new()
        };
        let profiles = build_profiles(
            train,
            self.providers.profiler.as_ref(),
            &cached,
            self.config.providers.concurrency,
        );
        if profiles != cached {
            write_profiles(&path, &profiles)?;
        }
        Ok(profiles)
    }

    pub fn embeddings(
        &self,
        train: &Dataset,
        profiles: &BTreeMap<UserId, UserProfile>,
        scope: Scope,
    ) -> Result<EmbeddingTable, PipelineError> {
        let kind = match self.providers.profile_kind {
            Provider::Remote => "remote",
            Provider::Fallback => "fallback",
        };
        let enc = self.providers.encoder.as_ref();
        let path = self
            .scope_cache(scope)
            .join(format!("embeddings-{kind}-{}-{}.bin", enc.name(), enc.dim()));
        let options = EmbedOptions {
            batch_size: self.config.providers.embed_batch_size,
            concurrency: self.config.providers.concurrency,
        };
        Ok(build_embedding_table(train, profiles, enc, Some(&path), &options)?)
    }

    fn features(&self, train: &Dataset, scope: Scope, index: &NodeIndex) -> Result<crate::linalg::Matrix, PipelineError> {
        let mcfg = &self.config.train.model;
        let seed = self.config.train.seed;
        Ok(match self.config.init {
            InitMode::TextInit => {
                let profiles = self.profiles(train, scope)?;
                let table = self.embeddings(train, &profiles, scope)?;
                init_features(mcfg, index, InitMode::TextInit, Some(&table), seed)?
            }
            InitMode::RandomInit => init_features(mcfg, index, InitMode::RandomInit, None, seed)?,
        })
    }

    /// Graph over the whole catalog with the scope's edges, plus the rated-3
    /// pairs the sampler must avoid.
    pub fn graph(train: &Dataset) -> Result<(BipartiteGraph, Vec<(usize, usize)>), PipelineError> {
        let index = NodeIndex::new(&train.user_ids, &train.item_ids);
        let graph = build_graph_with_nodes(index, &train.interactions)?;
        let idx = graph.node_index();
        let neutral = train
            .interactions
            .iter()
            .filter(|i| i.rating == 3)
            .filter_map(|i| Some((idx.user_node(i.user_id)?, idx.item_node(i.item_id)?)))
            .collect();
        Ok((graph, neutral))
    }

    /// Trains on a scope and writes its checkpoint and training log.
    pub fn train(&self, dataset: &Dataset, scope: Scope) -> Result<TrainedModel, PipelineError> {
        let (train, _) = self.scoped(dataset, scope)?;
        self.train_on(&train, scope)
    }

    fn train_on(&self, train: &Dataset, scope: Scope) -> Result<TrainedModel, PipelineError> {
        let (graph, neutral) = Self::graph(train)?;
        let features = self.features(train, scope, graph.node_index())?;
        let model = trainer::train(&graph, &neutral, &features, &self.config.train)?;
        let out = self.scope_out(scope);
        fs::create_dir_all(&out).map_err(io_err(&out))?;
        model.save(&out.join("model.ckpt"))?;
        let log_path = out.join("training_log.tsv");
        let f = File::create(&log_path).map_err(io_err(&log_path))?;
        write_training_log(BufWriter::new(f), &model.meta.history).map_err(io_err(&log_path))?;
        log::info!(
            "{}: {} epochs, best epoch {}, best validation loss {:.6}",
            scope.dir_name(),
            model.meta.epochs_run,
            model.meta.best_epoch,
            model.meta.best_val_loss
        );
        Ok(model)
    }

    /// Both slices for one fold's test split; writes the fold's reports.
    pub fn evaluate(
        &self,
        model: &TrainedModel,
        train: &[Interaction],
        test: &[Interaction],
        catalog_size: usize,
        scope: Scope,
    ) -> Result<(MetricsReport, MetricsReport), PipelineError> {
        let all = evaluate(model, test, train, &self.config.eval, Slice::All, catalog_size)?;
        let cold = evaluate(model, test, train, &self.config.eval, Slice::ColdStart, catalog_size)?;
        let label = match scope {
            Scope::Fold(k) => k.to_string(),
            Scope::Full => "full".to_string(),
        };
        self.write_reports(&self.scope_out(scope), &label, &[&all, &cold])?;
        Ok((all, cold))
    }

    fn write_reports(&self, dir: &Path, label: &str, reports: &[&MetricsReport]) -> Result<(), PipelineError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let tsv = dir.join("metrics.tsv");
        let mut w = BufWriter::new(File::create(&tsv).map_err(io_err(&tsv))?);
        writeln!(w, "{TSV_HEADER}").map_err(io_err(&tsv))?;
        for r in reports {
            write_report_tsv(&mut w, label, r, &self.config.eval.k_values).map_err(io_err(&tsv))?;
        }
        w.flush().map_err(io_err(&tsv))?;
        let txt = dir.join("report.txt");
        let mut w = BufWriter::new(File::create(&txt).map_err(io_err(&txt))?);
        for r in reports {
            write_report_text(&mut w, label, r).map_err(io_err(&txt))?;
        }
        w.flush().map_err(io_err(&txt))?;
        Ok(())
    }

    /// Trains and evaluates one fold.
    pub fn run_fold(&self, dataset: &Dataset, fold: usize) -> Result<FoldReport, PipelineError> {
        let scope = Scope::Fold(fold);
        let (train, test) = self.scoped(dataset, scope)?;
        let model = self.train_on(&train, scope)?;
        let (all, cold) = self.evaluate(&model, &train.interactions, &test, dataset.item_ids.len(), scope)?;
        Ok(FoldReport { fold, all, cold, model })
    }

    /// Ingest, then train and evaluate every fold, then write the mean report.
    pub fn run(&self) -> Result<RunReport, PipelineError> {
        let dataset = self.ingest()?;
        self.write_item_texts(&dataset)?;
        let mut folds = Vec::with_capacity(self.config.eval.folds);
        for k in 0..self.config.eval.folds {
            folds.push(self.run_fold(&dataset, k)?);
        }
        let alls: Vec<&MetricsReport> = folds.iter().map(|f| &f.all).collect();
        let colds: Vec<&MetricsReport> = folds.iter().map(|f| &f.cold).collect();
        let mean_all = mean_report(&alls).expect("at least two folds");
        let mean_cold = mean_report(&colds).expect("at least two folds");
        self.write_reports(&self.config.out_dir.join("mean"), "mean", &[&mean_all, &mean_cold])?;

        let path = self.config.out_dir.join("metrics.tsv");
        let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        writeln!(w, "{TSV_HEADER}").map_err(io_err(&path))?;
        let ks = &self.config.eval.k_values;
        for f in &folds {
            let label = f.fold.to_string();
            write_report_tsv(&mut w, &label, &f.all, ks).map_err(io_err(&path))?;
            write_report_tsv(&mut w, &label, &f.cold, ks).map_err(io_err(&path))?;
        }
        write_report_tsv(&mut w, "mean", &mean_all, ks).map_err(io_err(&path))?;
        write_report_tsv(&mut w, "mean", &mean_cold, ks).map_err(io_err(&path))?;
        w.flush().map_err(io_err(&path))?;
        Ok(RunReport {
            folds,
            mean_all,
            mean_cold,
        })
    }
}

/// Top `k` items for `user` among those it has not rated in `seen`, by score
/// descending then item id ascending.
pub fn recommend(
    model: &TrainedModel,
    seen: &[Interaction],
    user: UserId,
    k: usize,
) -> Result<Vec<(ItemId, f64)>, EvalError> {
    if model.user_vector(user).is_none() {
        return Err(EvalError::UnknownUser(user));
    }
    let rated: HashSet<ItemId> = seen.iter().filter(|i| i.user_id == user).map(|i| i.item_id).collect();
    let mut scored: Vec<(ItemId, f64)> = model
        .node_index
        .item_ids()
        .iter()
        .filter(|i| !rated.contains(i))
        .filter_map(|&i| model.score_pair(user, i).map(|s| (i, s)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}
