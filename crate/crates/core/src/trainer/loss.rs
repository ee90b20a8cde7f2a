use super::{TrainError, Triplet};
use crate::linalg::{axpy, dot, norm, Matrix};

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln σ(s_pos - s_neg)`.
pub fn bpr_loss(s_pos: f64, s_neg: f64) -> f64 {
    softplus(-(s_pos - s_neg))
}

/// `1 - cos(u, i)`; a zero vector on either side counts as cosine 0.
pub fn cosine_term(u: &[f64], i: &[f64]) -> f64 {
    let n = norm(u) * norm(i);
    if n == 0.0 {
        1.0
    } else {
        1.0 - dot(u, i) / n
    }
}

/// Mean over triplets of `bpr + alpha · (1 - cos(user, positive))`, with rows of
/// `embeddings` indexed by node.
pub fn total_loss(batch: &[Triplet], embeddings: &Matrix, alpha: f64) -> Result<f64, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let mut sum = 0.0;
    for t in batch {
        let u = embeddings.row(t.user);
        let p = embeddings.row(t.positive);
        let n = embeddings.row(t.negative);
        sum += bpr_loss(dot(u, p), dot(u, n));
        if alpha != 0.0 {
            sum += alpha * cosine_term(u, p);
        }
    }
    Ok(sum / batch.len() as f64)
}

/// Loss value and its gradient with respect to every embedding row.
pub fn loss_and_grad(
    batch: &[Triplet],
    embeddings: &Matrix,
    alpha: f64,
) -> Result<(f64, Matrix), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grad = Matrix::zeros(embeddings.rows(), embeddings.cols());
    let mut sum = 0.0;
    let d = embeddings.cols();
    let mut gu = vec![0.0; d];
    let mut gp = vec![0.0; d];
    let mut gn = vec![0.0; d];
    for t in batch {
        let u = embeddings.row(t.user);
        let p = embeddings.row(t.positive);
        let n = embeddings.row(t.negative);
        let x = dot(u, p) - dot(u, n);
        sum += softplus(-x);
        // d softplus(-x) / dx = -σ(-x)
        let g = -sigmoid(-x) * scale;
        for k in 0..d {
            gu[k] = g * (p[k] - n[k]);
            gp[k] = g * u[k];
            gn[k] = -g * u[k];
        }
        if alpha != 0.0 {
            let (nu, np) = (norm(u), norm(p));
            if nu * np == 0.0 {
                sum += alpha;
            } else {
                let c = dot(u, p) / (nu * np);
                sum += alpha * (1.0 - c);
                let w = -alpha * scale;
                for k in 0..d {
                    gu[k] += w * (p[k] / (nu * np) - c * u[k] / (nu * nu));
                    gp[k] += w * (u[k] / (nu * np) - c * p[k] / (np * np));
                }
            }
        }
        axpy(1.0, &gu, grad.row_mut(t.user));
        axpy(1.0, &gp, grad.row_mut(t.positive));
        axpy(1.0, &gn, grad.row_mut(t.negative));
    }
    Ok((sum * scale, grad))
}
