use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::embedder::EmbeddingTable;
use crate::graph::NodeIndex;
use crate::linalg::Matrix;

/// Architecture and regularization knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub input_dim: usize,
    /// Width of every layer output (heads concatenated in hidden layers).
    pub hidden_dim: usize,
    pub heads: usize,
    pub layers: usize,
    /// Attention-coefficient dropout rate (training only).
    pub dropout: f64,
    pub attention_slope: f64,
    pub activation_slope: f64,
    pub layer_norm_eps: f64,
    /// Treat the initial node features as trainable parameters.
    pub train_features: bool,
    /// Propagate over negative (rating 1-2) edges as well as positive ones.
    pub propagate_negative: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: 384,
            hidden_dim: 64,
            heads: 4,
            layers: 3,
            dropout: 0.2,
            attention_slope: 0.2,
            activation_slope: 0.2,
            layer_norm_eps: 1e-10,
            train_features: false,
            propagate_negative: true,
        }
    }
}

impl ModelConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.input_dim == 0 || self.hidden_dim == 0 || self.heads == 0 || self.layers == 0 {
            return bad("dimensions, heads and layers must be positive");
        }
        if self.layers > 1 && !self.hidden_dim.is_multiple_of(self.heads) {
            return bad("hidden_dim must be divisible by heads");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if !(self.layer_norm_eps > 0.0) {
            return bad("layer_norm_eps must be positive");
        }
        Ok(())
    }

    /// (input width, per-head width, combine mode) for layer `l`.
    pub fn layer_shape(&self, l: usize) -> (usize, usize, Combine) {
        let d_in = if l == 0 { self.input_dim } else { self.hidden_dim };
        if l + 1 == self.layers {
            (d_in, self.hidden_dim, Combine::Mean)
        } else {
            (d_in, self.hidden_dim / self.heads, Combine::Concat)
        }
    }
}

/// How head outputs are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combine {
    Concat,
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    /// `d_in × d_head`
    pub weight: Matrix,
    /// `2·d_head`: the first half scores the receiving node, the second the sender.
    pub attention: Vec<f64>,
}

impl HeadParams {
    pub fn head_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn attention_src(&self) -> &[f64] {
        &self.attention[..self.head_dim()]
    }

    pub fn attention_dst(&self) -> &[f64] {
        &self.attention[self.head_dim()..]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub heads: Vec<HeadParams>,
    /// `d_in × d_out` skip projection.
    pub skip: Matrix,
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
    pub combine: Combine,
}

impl LayerParams {
    pub fn input_dim(&self) -> usize {
        self.skip.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.skip.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub layers: Vec<LayerParams>,
}

/// Where the initial node features come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Text embeddings from the embedding table.
    TextInit,
    /// Xavier-uniform random features (the ablated configuration).
    RandomInit,
}

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let b = xavier_bound(rows, cols);
    let data = (0..rows * cols).map(|_| rng.random_range(-b..=b)).collect();
    Matrix::from_vec(rows, cols, data)
}

impl ModelParams {
    /// Xavier-uniform weights and attention vectors; identity skip where the
    /// layer is square; unit gain, zero bias.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let (d_in, d_head, combine) = config.layer_shape(l);
            let heads = (0..config.heads)
                .map(|_| {
                    let weight = xavier(&mut rng, d_in, d_head);
                    let attention = xavier(&mut rng, 2 * d_head, 1).as_slice().to_vec();
                    HeadParams { weight, attention }
                })
                .collect();
            let d_out = config.hidden_dim;
            let skip = if d_in == d_out {
                Matrix::identity(d_in)
            } else {
                xavier(&mut rng, d_in, d_out)
            };
            layers.push(LayerParams {
                heads,
                skip,
                gain: vec![1.0; d_out],
                bias: vec![0.0; d_out],
                combine,
            });
        }
        Ok(Self {
            config: config.clone(),
            layers,
        })
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.iter_mut().for_each(|x| *x = 0.0);
        }
        z
    }

    /// All parameter tensors in canonical order: per layer, per head the
    /// weight then the attention vector; then skip, gain, bias.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            for h in &layer.heads {
                out.push(h.weight.as_slice());
                out.push(h.attention.as_slice());
            }
            out.push(layer.skip.as_slice());
            out.push(layer.gain.as_slice());
            out.push(layer.bias.as_slice());
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            for h in &mut layer.heads {
                out.push(h.weight.as_mut_slice());
                out.push(h.attention.as_mut_slice());
            }
            out.push(layer.skip.as_mut_slice());
            out.push(layer.gain.as_mut_slice());
            out.push(layer.bias.as_mut_slice());
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

/// Initial node-feature matrix (users first, then items, in node order).
pub fn init_features(
    config: &ModelConfig,
    node_index: &NodeIndex,
    mode: InitMode,
    table: Option<&EmbeddingTable>,
    seed: u64,
) -> Result<Matrix, ModelError> {
    let n = node_index.num_nodes();
    match mode {
        InitMode::RandomInit => {
            // separate stream from the weights so the two never alias
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_F00D_0000_0001);
            Ok(xavier(&mut rng, n, config.input_dim))
        }
        InitMode::TextInit => {
            let table = table.ok_or_else(|| {
                ModelError::Config("text initialization needs an embedding table".into())
            })?;
            if table.dim != config.input_dim {
                return Err(ModelError::Config(format!(
                    "embedding dimension {} does not match input_dim {}",
                    table.dim, config.input_dim
                )));
            }
            let mut rows = Vec::with_capacity(n);
            let mut missing = Vec::new();
            for &u in node_index.user_ids() {
                match table.user_vectors.get(&u) {
                    Some(v) => rows.push(v.clone()),
                    None => missing.push(format!("user {u}")),
                }
            }
            for &i in node_index.item_ids() {
                match table.item_vectors.get(&i) {
                    Some(v) => rows.push(v.clone()),
                    None => missing.push(format!("item {i}")),
                }
            }
            if !missing.is_empty() {
                return Err(ModelError::MissingFeatures(missing));
            }
            Ok(Matrix::from_rows(&rows))
        }
    }
}

/// Parameters and features for a run.
pub fn init_params(
    seed: u64,
    config: &ModelConfig,
    node_index: &NodeIndex,
    mode: InitMode,
    table: Option<&EmbeddingTable>,
) -> Result<(ModelParams, Matrix), ModelError> {
    let params = ModelParams::init(config, seed)?;
    let features = init_features(config, node_index, mode, table, seed)?;
    Ok((params, features))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_init_is_reproducible() {
        let c = ModelConfig::default();
        assert_eq!(ModelParams::init(&c, 7).unwrap(), ModelParams::init(&c, 7).unwrap());
        assert_ne!(ModelParams::init(&c, 7).unwrap(), ModelParams::init(&c, 8).unwrap());
    }

    #[test]
    fn default_shapes() {
        let p = ModelParams::init(&ModelConfig::default(), 1).unwrap();
        assert_eq!(p.layers.len(), 3);
        assert_eq!(p.layers[0].heads.len(), 4);
        assert_eq!((p.layers[0].heads[0].weight.rows(), p.layers[0].heads[0].weight.cols()), (384, 16));
        assert_eq!(p.layers[0].heads[0].attention.len(), 32);
        assert_eq!((p.layers[0].skip.rows(), p.layers[0].skip.cols()), (384, 64));
        assert_eq!(p.layers[1].combine, Combine::Concat);
        assert_eq!((p.layers[2].heads[0].weight.rows(), p.layers[2].heads[0].weight.cols()), (64, 64));
        assert_eq!(p.layers[2].combine, Combine::Mean);
        assert_eq!(p.layers[1].skip, Matrix::identity(64));
        for l in &p.layers {
            assert!(l.gain.iter().all(|&g| g == 1.0));
            assert!(l.bias.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn xavier_entries_within_bound() {
        let bound = (6.0f64 / 400.0).sqrt();
        assert!((xavier_bound(384, 16) - 0.122474).abs() < 1e-6);
        assert!((bound - 0.122_474_487_139_158_9).abs() < 1e-15);
        let p = ModelParams::init(&ModelConfig::default(), 3).unwrap();
        for h in &p.layers[0].heads {
            let max = h.weight.as_slice().iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!(max <= bound);
            assert!(max > 0.9 * bound, "suspiciously narrow draw: {max}");
        }
    }

    #[test]
    fn config_validation() {
        let mut c = ModelConfig {
            hidden_dim: 63,
            ..ModelConfig::default()
        };
        assert!(c.validate().is_err());
        c.hidden_dim = 64;
        c.dropout = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn random_features_shape() {
        let idx = NodeIndex::new(&[1, 2], &[5, 6, 7]);
        let f = init_features(&ModelConfig::default(), &idx, InitMode::RandomInit, None, 1).unwrap();
        assert_eq!((f.rows(), f.cols()), (5, 384));
        let b = xavier_bound(5, 384);
        assert!(f.as_slice().iter().all(|x| x.abs() <= b));
        assert!(init_features(&ModelConfig::default(), &idx, InitMode::TextInit, None, 1).is_err());
    }
}
