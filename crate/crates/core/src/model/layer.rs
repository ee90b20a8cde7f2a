//! One GAT layer: per-head attention aggregation, head combination, skip
//! projection, layer normalization and LeakyReLU, with its exact backward pass.
//!
//! Attention slots for node `i` are its stored neighbors in ascending order
//! followed by `i` itself. Slot-indexed buffers use `slot_offsets[i]..slot_offsets[i + 1]`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{Combine, LayerParams, ModelConfig};
use super::ModelError;
use crate::graph::BipartiteGraph;
use crate::linalg::{axpy, dot, Matrix};

#[inline]
fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

#[inline]
fn leaky_grad(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

pub(crate) fn slot_offsets(graph: &BipartiteGraph) -> Vec<usize> {
    let n = graph.num_nodes();
    let mut off = Vec::with_capacity(n + 1);
    off.push(0);
    for i in 0..n {
        off.push(off[i] + graph.degree(i) + 1);
    }
    off
}

#[derive(Debug, Clone)]
pub(crate) struct HeadCache {
    pub z: Matrix,
    /// Pre-activation attention logits per slot.
    pub logits: Vec<f64>,
    /// Attention coefficients per slot (zero for dropped slots).
    pub alpha: Vec<f64>,
}

/// Activations retained for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerCache {
    pub(crate) input: Matrix,
    pub(crate) heads: Vec<HeadCache>,
    pub(crate) slot_offsets: Vec<usize>,
    pub(crate) normed: Matrix,
    pub(crate) inv_std: Vec<f64>,
    pub(crate) affine: Matrix,
}

impl LayerCache {
    /// Attention coefficients of `node` for `head`, in slot order (self last).
    pub fn attention(&self, head: usize, node: usize) -> &[f64] {
        &self.heads[head].alpha[self.slot_offsets[node]..self.slot_offsets[node + 1]]
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }

    /// Layer-normalized values before gain and bias.
    pub fn normalized(&self) -> &Matrix {
        &self.normed
    }
}

pub(crate) fn forward(
    input: &Matrix,
    graph: &BipartiteGraph,
    layer: &LayerParams,
    config: &ModelConfig,
    layer_idx: usize,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<(Matrix, LayerCache), ModelError> {
    let n = graph.num_nodes();
    if input.rows() != n || input.cols() != layer.input_dim() {
        return Err(ModelError::Shape(format!(
            "layer {layer_idx}: input is {}x{}, expected {n}x{}",
            input.rows(),
            input.cols(),
            layer.input_dim()
        )));
    }
    let slots = slot_offsets(graph);
    let total_slots = slots[n];
    let d_out = layer.output_dim();
    let n_heads = layer.heads.len();
    let p = config.dropout;
    let mut combined = Matrix::zeros(n, d_out);
    let mut head_caches = Vec::with_capacity(n_heads);

    for (h, head) in layer.heads.iter().enumerate() {
        let d_head = head.head_dim();
        let z = input.matmul(&head.weight);
        let src: Vec<f64> = (0..n).map(|i| dot(head.attention_src(), z.row(i))).collect();
        let dst: Vec<f64> = (0..n).map(|j| dot(head.attention_dst(), z.row(j))).collect();
        let mut logits = vec![0.0; total_slots];
        let mut alpha = vec![0.0; total_slots];
        let mut keep: Vec<bool> = Vec::new();
        let mut m = vec![0.0; d_head];

        for i in 0..n {
            let range = slots[i]..slots[i + 1];
            let nbrs = graph.stored_neighbors(i);
            let slot_node = |k: usize| if k < nbrs.len() { nbrs[k] } else { i };
            let width = range.len();

            keep.clear();
            match dropout_rng.as_deref_mut() {
                Some(rng) if p > 0.0 => {
                    keep.extend((0..width).map(|_| rng.random::<f64>() >= p));
                    if !keep.iter().any(|&k| k) {
                        keep.iter_mut().for_each(|k| *k = true);
                    }
                }
                _ => keep.resize(width, true),
            }

            let mut max = f64::NEG_INFINITY;
            for k in 0..width {
                let t = src[i] + dst[slot_node(k)];
                logits[range.start + k] = t;
                if keep[k] {
                    max = max.max(leaky(t, config.attention_slope));
                }
            }
            let mut sum = 0.0;
            for k in 0..width {
                if keep[k] {
                    let w = (leaky(logits[range.start + k], config.attention_slope) - max).exp();
                    alpha[range.start + k] = w;
                    sum += w;
                }
            }
            m.iter_mut().for_each(|x| *x = 0.0);
            for k in 0..width {
                let a = &mut alpha[range.start + k];
                *a /= sum;
                if *a != 0.0 {
                    axpy(*a, z.row(slot_node(k)), &mut m);
                }
            }
            let out = combined.row_mut(i);
            match layer.combine {
                Combine::Concat => out[h * d_head..(h + 1) * d_head].copy_from_slice(&m),
                Combine::Mean => out.iter_mut().zip(&m).for_each(|(o, v)| *o += v),
            }
        }
        head_caches.push(HeadCache { z, logits, alpha });
    }
    if layer.combine == Combine::Mean {
        let scale = 1.0 / n_heads as f64;
        combined.as_mut_slice().iter_mut().for_each(|x| *x *= scale);
    }

    let skip = input.matmul(&layer.skip);
    let mut normed = Matrix::zeros(n, d_out);
    let mut affine = Matrix::zeros(n, d_out);
    let mut output = Matrix::zeros(n, d_out);
    let mut inv_std = vec![0.0; n];
    for i in 0..n {
        let pre: Vec<f64> = combined.row(i).iter().zip(skip.row(i)).map(|(a, b)| a + b).collect();
        let mean = pre.iter().sum::<f64>() / d_out as f64;
        let var = pre.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d_out as f64;
        let s = 1.0 / (var + config.layer_norm_eps).sqrt();
        inv_std[i] = s;
        for k in 0..d_out {
            let nk = (pre[k] - mean) * s;
            let y = layer.gain[k] * nk + layer.bias[k];
            normed[(i, k)] = nk;
            affine[(i, k)] = y;
            output[(i, k)] = leaky(y, config.activation_slope);
        }
        if output.row(i).iter().any(|x| !x.is_finite()) {
            return Err(ModelError::NonFinite {
                layer: layer_idx,
                node: i,
            });
        }
    }

    Ok((
        output,
        LayerCache {
            input: input.clone(),
            heads: head_caches,
            slot_offsets: slots,
            normed,
            inv_std,
            affine,
        },
    ))
}

/// Gradients of the layer parameters given `d_output`; also returns the
/// gradient with respect to the layer input when requested.
pub(crate) fn backward(
    d_output: &Matrix,
    graph: &BipartiteGraph,
    layer: &LayerParams,
    config: &ModelConfig,
    cache: &LayerCache,
    grads: &mut LayerParams,
    want_input_grad: bool,
) -> Option<Matrix> {
    let n = graph.num_nodes();
    let d_out = layer.output_dim();
    let n_heads = layer.heads.len();
    let slots = &cache.slot_offsets;

    // activation and layer norm
    let mut d_pre = Matrix::zeros(n, d_out);
    let mut d_norm = vec![0.0; d_out];
    for i in 0..n {
        let nrow = cache.normed.row(i);
        for k in 0..d_out {
            let dy = d_output[(i, k)] * leaky_grad(cache.affine[(i, k)], config.activation_slope);
            grads.gain[k] += dy * nrow[k];
            grads.bias[k] += dy;
            d_norm[k] = dy * layer.gain[k];
        }
        let mean_dn = d_norm.iter().sum::<f64>() / d_out as f64;
        let mean_dn_n = dot(&d_norm, nrow) / d_out as f64;
        let s = cache.inv_std[i];
        let row = d_pre.row_mut(i);
        for k in 0..d_out {
            row[k] = s * (d_norm[k] - mean_dn - nrow[k] * mean_dn_n);
        }
    }

    grads.skip.add_t_matmul(&cache.input, &d_pre);
    let mut d_input = want_input_grad.then(|| d_pre.matmul_t(&layer.skip));

    let head_scale = match layer.combine {
        Combine::Concat => 1.0,
        Combine::Mean => 1.0 / n_heads as f64,
    };
    for (h, head) in layer.heads.iter().enumerate() {
        let hc = &cache.heads[h];
        let d_head = head.head_dim();
        let col0 = match layer.combine {
            Combine::Concat => h * d_head,
            Combine::Mean => 0,
        };
        let mut dz = Matrix::zeros(n, d_head);
        let mut d_src = vec![0.0; n];
        let mut d_dst = vec![0.0; n];
        let mut dm = vec![0.0; d_head];
        let mut d_alpha: Vec<f64> = Vec::new();

        for i in 0..n {
            let range = slots[i]..slots[i + 1];
            let nbrs = graph.stored_neighbors(i);
            let slot_node = |k: usize| if k < nbrs.len() { nbrs[k] } else { i };
            for (x, &g) in dm.iter_mut().zip(&d_pre.row(i)[col0..col0 + d_head]) {
                *x = g * head_scale;
            }
            let alpha = &hc.alpha[range.clone()];
            d_alpha.clear();
            for (k, &a) in alpha.iter().enumerate() {
                let j = slot_node(k);
                d_alpha.push(if a != 0.0 { dot(&dm, hc.z.row(j)) } else { 0.0 });
                if a != 0.0 {
                    axpy(a, &dm, dz.row_mut(j));
                }
            }
            let c: f64 = alpha.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
            for (k, &a) in alpha.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let de = a * (d_alpha[k] - c);
                let dt = de * leaky_grad(hc.logits[range.start + k], config.attention_slope);
                d_src[i] += dt;
                d_dst[slot_node(k)] += dt;
            }
        }

        let g = &mut grads.heads[h];
        let (ga_src, ga_dst) = g.attention.split_at_mut(d_head);
        for i in 0..n {
            let zi = hc.z.row(i);
            axpy(d_src[i], zi, ga_src);
            axpy(d_dst[i], zi, ga_dst);
        }
        for i in 0..n {
            let row = dz.row_mut(i);
            axpy(d_src[i], head.attention_src(), row);
            axpy(d_dst[i], head.attention_dst(), row);
        }
        g.weight.add_t_matmul(&cache.input, &dz);
        if let Some(dx) = d_input.as_mut() {
            dx.add_assign(&dz.matmul_t(&head.weight));
        }
    }
    d_input
}
