//! Hybrid BPR + cosine-alignment training with AdamW, plateau learning-rate
//! decay and early stopping on a held-out slice of positive edges.

mod loss;
mod optim;
mod sampler;

pub use loss::{bpr_loss, cosine_term, loss_and_grad, softplus, total_loss};
pub use optim::AdamW;
pub use sampler::NegativeSampler;

use std::collections::HashSet;
use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{BipartiteGraph, Sign};
use crate::linalg::Matrix;
use crate::model::{
    self, EpochRecord, ModelConfig, ModelError, ModelParams, TrainedModel, TrainingMeta,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("negative sampling impossible: {0}")]
    Sampling(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("epoch {epoch}, batch {batch}: {source}")]
    Numeric {
        epoch: usize,
        batch: usize,
        #[source]
        source: ModelError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// (user node, positive item node, negative item node)
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub user: usize,
    pub positive: usize,
    pub negative: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Weight of the cosine-alignment term.
    pub alpha: f64,
    pub lr_init: f64,
    pub lr_factor: f64,
    /// Epochs without validation improvement before the learning rate drops.
    pub lr_patience: usize,
    pub early_stop_patience: usize,
    pub weight_decay: f64,
    /// Positive pairs per optimizer step.
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Probability of drawing an explicit negative when the user has one.
    pub epsilon_neg: f64,
    pub val_fraction: f64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            lr_init: 1e-3,
            lr_factor: 0.4,
            lr_patience: 5,
            early_stop_patience: 10,
            weight_decay: 1e-5,
            batch_size: 1024,
            max_epochs: 200,
            seed: 42,
            epsilon_neg: 0.8,
            val_fraction: 0.1,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.alpha >= 0.0) {
            return bad("alpha must be >= 0");
        }
        if !(self.lr_init > 0.0) {
            return bad("lr_init must be positive");
        }
        if !(self.lr_factor > 0.0 && self.lr_factor <= 1.0) {
            return bad("lr_factor must be in (0, 1]");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(0.0..=1.0).contains(&self.epsilon_neg) {
            return bad("epsilon_neg must be in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must be in [0, 1)");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be >= 0");
        }
        self.model.validate().map_err(TrainError::Model)
    }
}

/// Outcome of one validation observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Plateau {
    Improved,
    Waiting,
    Stop,
}

/// Learning-rate decay on validation plateaus plus early stopping.
#[derive(Debug, Clone)]
pub struct PlateauSchedule {
    lr: f64,
    factor: f64,
    lr_patience: usize,
    stop_patience: usize,
    best: f64,
    since_best: usize,
    plateau: usize,
}

impl PlateauSchedule {
    pub fn new(config: &TrainConfig) -> Self {
        Self {
            lr: config.lr_init,
            factor: config.lr_factor,
            lr_patience: config.lr_patience,
            stop_patience: config.early_stop_patience,
            best: f64::INFINITY,
            since_best: 0,
            plateau: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn observe(&mut self, val_loss: f64) -> Plateau {
        if val_loss < self.best {
            self.best = val_loss;
            self.since_best = 0;
            self.plateau = 0;
            return Plateau::Improved;
        }
        self.since_best += 1;
        self.plateau += 1;
        if self.plateau >= self.lr_patience {
            self.lr *= self.factor;
            self.plateau = 0;
        }
        if self.since_best >= self.stop_patience {
            Plateau::Stop
        } else {
            Plateau::Waiting
        }
    }
}

fn positive_pairs(graph: &BipartiteGraph) -> Vec<(usize, usize)> {
    graph
        .edges()
        .iter()
        .filter(|e| e.sign == Sign::Positive)
        .map(|e| (e.user_node, e.item_node))
        .collect()
}

fn make_triplets<R: rand::Rng>(
    pairs: &[(usize, usize)],
    sampler: &NegativeSampler,
    rng: &mut R,
    epsilon_neg: f64,
) -> Result<Vec<Triplet>, TrainError> {
    pairs
        .iter()
        .map(|&(user, positive)| {
            Ok(Triplet {
                user,
                positive,
                negative: sampler.sample(user, rng, epsilon_neg)?,
            })
        })
        .collect()
}

fn apply_step(
    opt: &mut AdamW,
    params: &mut ModelParams,
    features: Option<&mut Matrix>,
    grads: &model::Gradients,
    lr: f64,
) -> Result<(), TrainError> {
    let mut p = params.tensors_mut();
    let mut g = grads.params.tensors();
    if let Some(f) = features {
        p.push(f.as_mut_slice());
        let fg = grads
            .features
            .as_ref()
            .ok_or_else(|| TrainError::Shape("missing feature gradient".into()))?;
        g.push(fg.as_slice());
    }
    opt.step(&mut p, &g, lr)
}

/// Trains on `graph` (the training split) with the given initial features.
/// `neutral` holds (user node, item node) pairs rated 3, which the sampler
/// never offers as unobserved negatives.
pub fn train(
    graph: &BipartiteGraph,
    neutral: &[(usize, usize)],
    features: &Matrix,
    config: &TrainConfig,
) -> Result<TrainedModel, TrainError> {
    config.validate()?;
    let mcfg = &config.model;
    if features.rows() != graph.num_nodes() || features.cols() != mcfg.input_dim {
        return Err(TrainError::Shape(format!(
            "features are {}x{}, expected {}x{}",
            features.rows(),
            features.cols(),
            graph.num_nodes(),
            mcfg.input_dim
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x0D50_0D50));

    // validation hold-out
    let mut positives = positive_pairs(graph);
    positives.shuffle(&mut rng);
    let mut n_val = (config.val_fraction * positives.len() as f64).round() as usize;
    if n_val >= positives.len() {
        n_val = positives.len().saturating_sub(1);
    }
    let mut val_pairs: Vec<(usize, usize)> = positives[..n_val].to_vec();
    val_pairs.sort_unstable();
    let mut train_pairs: Vec<(usize, usize)> = positives[n_val..].to_vec();
    train_pairs.sort_unstable();
    if train_pairs.is_empty() {
        return Err(TrainError::Config("no positive training edges".into()));
    }

    let propagation = if mcfg.propagate_negative {
        graph.clone()
    } else {
        graph.positive_only()
    };
    let val_set: HashSet<(usize, usize)> = val_pairs.iter().copied().collect();
    let train_graph = propagation.filter_edges(|e| !val_set.contains(&(e.user_node, e.item_node)));

    let sampler = NegativeSampler::new(graph, neutral);
    let val_triplets = make_triplets(&val_pairs, &sampler, &mut rng, config.epsilon_neg)?;

    let mut params = ModelParams::init(mcfg, config.seed)?;
    let mut feats = features.clone();
    let mut shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    if mcfg.train_features {
        shapes.push(feats.as_slice().len());
    }
    let mut opt = AdamW::new(&shapes, config.weight_decay);

    let mut schedule = PlateauSchedule::new(config);
    let mut lr = schedule.lr();
    let mut best = (f64::INFINITY, params.clone(), feats.clone(), 0usize);
    let mut history = Vec::new();

    for epoch in 1..=config.max_epochs {
        let mut order = train_pairs.clone();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = make_triplets(chunk, &sampler, &mut rng, config.epsilon_neg)?;
            let numeric = |source| TrainError::Numeric {
                epoch,
                batch: b,
                source,
            };
            let pass = model::forward(&train_graph, &params, &feats, Some(&mut dropout_rng))
                .map_err(numeric)?;
            let (loss, d_out) = loss_and_grad(&batch, &pass.output, config.alpha)?;
            let grads = model::backward(&train_graph, &params, &pass, &d_out, mcfg.train_features)
                .map_err(numeric)?;
            apply_step(
                &mut opt,
                &mut params,
                mcfg.train_features.then_some(&mut feats),
                &grads,
                lr,
            )?;
            if !params.is_finite() {
                return Err(numeric(ModelError::NonFinite { layer: usize::MAX, node: usize::MAX }));
            }
            loss_sum += loss * batch.len() as f64;
        }
        let train_loss = loss_sum / train_pairs.len() as f64;

        let val_loss = if val_triplets.is_empty() {
            train_loss
        } else {
            let pass = model::forward(&train_graph, &params, &feats, None).map_err(|source| {
                TrainError::Numeric {
                    epoch,
                    batch: usize::MAX,
                    source,
                }
            })?;
            total_loss(&val_triplets, &pass.output, config.alpha)?
        };
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
        });
        log::debug!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6} lr {lr:e}");

        match schedule.observe(val_loss) {
            Plateau::Improved => best = (val_loss, params.clone(), feats.clone(), epoch),
            Plateau::Stop => break,
            Plateau::Waiting => {}
        }
        lr = schedule.lr();
    }

    let (best_val, best_params, best_feats, best_epoch) = best;
    let final_graph = propagation;
    let pass = model::forward(&final_graph, &best_params, &best_feats, None)?;
    let last = history.last().copied();
    let meta = TrainingMeta {
        seed: config.seed,
        epochs_run: history.len(),
        best_epoch,
        best_val_loss: if history.is_empty() { f64::NAN } else { best_val },
        final_train_loss: last.map_or(f64::NAN, |r| r.train_loss),
        final_val_loss: last.map_or(f64::NAN, |r| r.val_loss),
        history,
    };
    let trained_features = mcfg.train_features.then_some(best_feats);
    Ok(TrainedModel::from_pass(
        &final_graph,
        best_params,
        &pass,
        trained_features,
        meta,
    ))
}

/// One TSV line per epoch: `epoch<TAB>train_loss<TAB>val_loss<TAB>lr`.
pub fn write_training_log<W: Write>(mut w: W, history: &[EpochRecord]) -> io::Result<()> {
    for r in history {
        writeln!(w, "{}\t{}\t{}\t{}", r.epoch, r.train_loss, r.val_loss, r.lr)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
