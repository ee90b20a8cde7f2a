//! GAT stack over the bipartite graph: parameters, forward and backward
//! passes, dot-product scoring and trained-model checkpoints.

mod checkpoint;
mod layer;
mod params;

pub use checkpoint::CheckpointError;
pub use layer::LayerCache;
pub use params::{
    init_features, init_params, xavier_bound, Combine, HeadParams, InitMode, LayerParams,
    ModelConfig, ModelParams,
};

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::{ItemId, UserId};
use crate::graph::{BipartiteGraph, NodeIndex};
use crate::linalg::{dot, Matrix};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite activation in layer {layer} at node {node}")]
    NonFinite { layer: usize, node: usize },
    #[error("no initial features for {0:?}")]
    MissingFeatures(Vec<String>),
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("backward called without a matching forward pass")]
    MissingForwardState,
}

/// Result of a forward pass, with everything backward needs.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub output: Matrix,
    pub caches: Vec<LayerCache>,
    num_users: usize,
}

impl ForwardPass {
    pub fn user_embeddings(&self) -> Matrix {
        self.output.slice_rows(0, self.num_users)
    }

    pub fn item_embeddings(&self) -> Matrix {
        self.output.slice_rows(self.num_users, self.output.rows())
    }
}

/// Applies every layer in order. With `dropout_rng` set, attention dropout is
/// active (training mode); with `None` the pass is pure.
pub fn forward(
    graph: &BipartiteGraph,
    params: &ModelParams,
    features: &Matrix,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<ForwardPass, ModelError> {
    if features.cols() != params.config.input_dim {
        return Err(ModelError::Shape(format!(
            "features have {} columns, model expects {}",
            features.cols(),
            params.config.input_dim
        )));
    }
    let mut h = features.clone();
    let mut caches = Vec::with_capacity(params.layers.len());
    for (l, layer) in params.layers.iter().enumerate() {
        let (out, cache) =
            layer::forward(&h, graph, layer, &params.config, l, dropout_rng.as_deref_mut())?;
        caches.push(cache);
        h = out;
    }
    Ok(ForwardPass {
        output: h,
        caches,
        num_users: graph.num_users(),
    })
}

/// Parameter gradients, plus feature gradients when requested.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: ModelParams,
    pub features: Option<Matrix>,
}

/// Reverse-mode gradients of a scalar loss given `d_output`, its gradient with
/// respect to the final node embeddings (users first, then items).
pub fn backward(
    graph: &BipartiteGraph,
    params: &ModelParams,
    pass: &ForwardPass,
    d_output: &Matrix,
    want_feature_grad: bool,
) -> Result<Gradients, ModelError> {
    if pass.caches.len() != params.layers.len() || pass.output.rows() != graph.num_nodes() {
        return Err(ModelError::MissingForwardState);
    }
    if d_output.rows() != pass.output.rows() || d_output.cols() != pass.output.cols() {
        return Err(ModelError::Shape("upstream gradient shape".into()));
    }
    let mut grads = params.zeros_like();
    let mut upstream = d_output.clone();
    let mut feature_grad = None;
    for l in (0..params.layers.len()).rev() {
        let want_input = l > 0 || want_feature_grad;
        let d_in = layer::backward(
            &upstream,
            graph,
            &params.layers[l],
            &params.config,
            &pass.caches[l],
            &mut grads.layers[l],
            want_input,
        );
        match d_in {
            Some(d) if l > 0 => upstream = d,
            Some(d) => feature_grad = Some(d),
            None => {}
        }
    }
    Ok(Gradients {
        params: grads,
        features: feature_grad,
    })
}

/// Relevance score of a user-item pair: the inner product of their embeddings.
pub fn score(user_vec: &[f64], item_vec: &[f64]) -> Result<f64, ModelError> {
    if user_vec.len() != item_vec.len() {
        return Err(ModelError::DimensionMismatch(user_vec.len(), item_vec.len()));
    }
    Ok(dot(user_vec, item_vec))
}

/// Per-epoch training record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub final_train_loss: f64,
    pub final_val_loss: f64,
    pub history: Vec<EpochRecord>,
}

/// Final embeddings plus the parameters that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub node_index: NodeIndex,
    pub user_embeddings: Matrix,
    pub item_embeddings: Matrix,
    pub params: ModelParams,
    /// Present only when features were trained.
    pub features: Option<Matrix>,
    pub meta: TrainingMeta,
}

impl TrainedModel {
    pub fn from_pass(
        graph: &BipartiteGraph,
        params: ModelParams,
        pass: &ForwardPass,
        features: Option<Matrix>,
        meta: TrainingMeta,
    ) -> Self {
        Self {
            node_index: graph.node_index().clone(),
            user_embeddings: pass.user_embeddings(),
            item_embeddings: pass.item_embeddings(),
            params,
            features,
            meta,
        }
    }

    pub fn user_vector(&self, user: UserId) -> Option<&[f64]> {
        self.node_index
            .user_node(user)
            .map(|n| self.user_embeddings.row(n))
    }

    pub fn item_vector(&self, item: ItemId) -> Option<&[f64]> {
        self.node_index
            .item_node(item)
            .map(|n| self.item_embeddings.row(n - self.node_index.num_users()))
    }

    pub fn score_pair(&self, user: UserId, item: ItemId) -> Option<f64> {
        let u = self.user_vector(user)?;
        let i = self.item_vector(item)?;
        score(u, i).ok()
    }
}
