//! Forward/backward pairs for the closed set of layer operations.
//!
//! Each op is a pure function over tensors: forward returns the output plus
//! whatever must be cached, backward consumes the cache and upstream gradient
//! and returns input/parameter gradients. Wiring gradients into `Param`
//! buffers is the model's job, which keeps these kernels directly testable
//! against finite differences.

use super::rng::Rng;
use super::tensor::{sum_order_independent, Tensor2};
use super::NumericsError;

/// `x * w + b` where `b` is a 1 x out row vector broadcast over rows.
pub fn affine_forward(x: &Tensor2, w: &Tensor2, b: &Tensor2) -> Result<Tensor2, NumericsError> {
    if x.cols() != w.rows() || b.shape() != (1, w.cols()) {
        return Err(NumericsError::ShapeMismatch {
            op: "affine",
            lhs: x.shape_string(),
            rhs: format!("{} + {}", w.shape_string(), b.shape_string()),
        });
    }
    Ok(x.matmul(w).add_row_broadcast(b))
}

/// Gradients of the affine op: `(dx, dw, db)`.
pub fn affine_backward(dout: &Tensor2, x: &Tensor2, w: &Tensor2) -> (Tensor2, Tensor2, Tensor2) {
    let dx = dout.matmul_nt(w);
    let dw = x.matmul_tn(dout);
    let db = dout.col_sums();
    (dx, dw, db)
}

pub fn relu_forward(x: &Tensor2) -> Tensor2 {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Backward through ReLU given the forward *input*.
pub fn relu_backward(dout: &Tensor2, x: &Tensor2) -> Tensor2 {
    assert_eq!(dout.shape(), x.shape(), "relu backward shape mismatch");
    let mut dx = dout.clone();
    for (d, &v) in dx.values_mut().iter_mut().zip(x.values().iter()) {
        if v <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}

/// Keep-mask and scale for inverted dropout.
#[derive(Debug, Clone)]
pub struct DropoutMask {
    keep: Vec<bool>,
    scale: f64,
}

/// Inverted dropout: zeroes each entry with probability `rate` and scales the
/// survivors by `1 / (1 - rate)` so the expected value is unchanged.
///
/// Returns `(output, mask)`; the mask is `None` when the op was an identity
/// (eval mode or `rate == 0`), in which case backward is also the identity.
pub fn dropout_forward(
    x: &Tensor2,
    rate: f64,
    training: bool,
    rng: &mut Rng,
) -> Result<(Tensor2, Option<DropoutMask>), NumericsError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NumericsError::InvalidDropoutRate(rate));
    }
    if !training || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let scale = 1.0 / (1.0 - rate);
    let mut out = x.clone();
    let mut keep = Vec::with_capacity(x.values().len());
    for v in out.values_mut() {
        let k = !rng.chance(rate);
        keep.push(k);
        *v = if k { *v * scale } else { 0.0 };
    }
    Ok((out, Some(DropoutMask { keep, scale })))
}

pub fn dropout_backward(dout: &Tensor2, mask: &DropoutMask) -> Tensor2 {
    assert_eq!(dout.values().len(), mask.keep.len(), "dropout mask length mismatch");
    let mut dx = dout.clone();
    for (d, &k) in dx.values_mut().iter_mut().zip(mask.keep.iter()) {
        *d = if k { *d * mask.scale } else { 0.0 };
    }
    dx
}

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Running statistics for one batch-norm layer (per column).
#[derive(Debug, Clone)]
pub struct BnStats {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BnStats {
    pub fn new(cols: usize) -> Self {
        BnStats { running_mean: vec![0.0; cols], running_var: vec![1.0; cols] }
    }
}

/// Cache for batch-norm backward.
#[derive(Debug, Clone)]
pub struct BnCache {
    xhat: Tensor2,
    inv_std: Vec<f64>,
    /// True when the cache came from a training-mode forward (batch
    /// statistics); eval-mode caches use the simpler fixed-statistics rule.
    batch_stats: bool,
}

/// Training-mode batch norm: standardizes each column with the biased batch
/// variance, applies `gamma`/`beta`, and folds the batch statistics into the
/// running estimates with momentum [`BN_MOMENTUM`].
///
/// A single-row batch has zero variance everywhere and would silently train
/// on noise, so it is rejected.
pub fn batch_norm_train(
    x: &Tensor2,
    gamma: &Tensor2,
    beta: &Tensor2,
    stats: &mut BnStats,
) -> Result<(Tensor2, BnCache), NumericsError> {
    check_bn_shapes(x, gamma, beta, stats)?;
    if x.rows() < 2 {
        return Err(NumericsError::BatchNormTooFewRows(x.rows()));
    }
    let (n, d) = x.shape();
    let nf = n as f64;
    // Column statistics are summed in value order so they do not depend on
    // row ordering: a permuted batch gets bit-identical normalization.
    let mut mean = vec![0.0; d];
    let mut var = vec![0.0; d];
    let mut buf = Vec::with_capacity(n);
    for c in 0..d {
        buf.clear();
        buf.extend((0..n).map(|r| x.get(r, c)));
        mean[c] = sum_order_independent(&mut buf) / nf;
        buf.clear();
        buf.extend((0..n).map(|r| {
            let diff = x.get(r, c) - mean[c];
            diff * diff
        }));
        var[c] = sum_order_independent(&mut buf) / nf;
    }
    let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
    let mut xhat = Tensor2::zeros(n, d);
    let mut out = Tensor2::zeros(n, d);
    for r in 0..n {
        for c in 0..d {
            let h = (x.get(r, c) - mean[c]) * inv_std[c];
            xhat.set(r, c, h);
            out.set(r, c, gamma.get(0, c) * h + beta.get(0, c));
        }
    }
    for c in 0..d {
        stats.running_mean[c] = (1.0 - BN_MOMENTUM) * stats.running_mean[c] + BN_MOMENTUM * mean[c];
        stats.running_var[c] = (1.0 - BN_MOMENTUM) * stats.running_var[c] + BN_MOMENTUM * var[c];
    }
    Ok((out, BnCache { xhat, inv_std, batch_stats: true }))
}

/// Eval-mode batch norm: per-row rescaling with the running statistics.
pub fn batch_norm_eval(
    x: &Tensor2,
    gamma: &Tensor2,
    beta: &Tensor2,
    stats: &BnStats,
) -> Result<Tensor2, NumericsError> {
    Ok(batch_norm_eval_cached(x, gamma, beta, stats)?.0)
}

/// Eval-mode batch norm that also returns a backward cache. Used by the
/// full-model gradient check, which runs with fixed statistics.
pub fn batch_norm_eval_cached(
    x: &Tensor2,
    gamma: &Tensor2,
    beta: &Tensor2,
    stats: &BnStats,
) -> Result<(Tensor2, BnCache), NumericsError> {
    check_bn_shapes(x, gamma, beta, stats)?;
    let (n, d) = x.shape();
    let inv_std: Vec<f64> =
        stats.running_var.iter().map(|&v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
    let mut xhat = Tensor2::zeros(n, d);
    let mut out = Tensor2::zeros(n, d);
    for r in 0..n {
        for c in 0..d {
            let h = (x.get(r, c) - stats.running_mean[c]) * inv_std[c];
            xhat.set(r, c, h);
            out.set(r, c, gamma.get(0, c) * h + beta.get(0, c));
        }
    }
    Ok((out, BnCache { xhat, inv_std, batch_stats: false }))
}

/// Backward through batch norm: `(dx, dgamma, dbeta)`.
pub fn batch_norm_backward(
    dout: &Tensor2,
    cache: &BnCache,
    gamma: &Tensor2,
) -> (Tensor2, Tensor2, Tensor2) {
    let (n, d) = dout.shape();
    assert_eq!(cache.xhat.shape(), (n, d), "bn backward cache shape mismatch");
    let nf = n as f64;
    let mut dgamma = Tensor2::zeros(1, d);
    let mut dbeta = Tensor2::zeros(1, d);
    for r in 0..n {
        for c in 0..d {
            dgamma.values_mut()[c] += dout.get(r, c) * cache.xhat.get(r, c);
            dbeta.values_mut()[c] += dout.get(r, c);
        }
    }
    let mut dx = Tensor2::zeros(n, d);
    if cache.batch_stats {
        // Batch statistics contribute to every row: the standard closed form
        // dx = inv_std/n * (n*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat)).
        let mut sum_dxhat = vec![0.0; d];
        let mut sum_dxhat_xhat = vec![0.0; d];
        for r in 0..n {
            for c in 0..d {
                let dxhat = dout.get(r, c) * gamma.get(0, c);
                sum_dxhat[c] += dxhat;
                sum_dxhat_xhat[c] += dxhat * cache.xhat.get(r, c);
            }
        }
        for r in 0..n {
            for c in 0..d {
                let dxhat = dout.get(r, c) * gamma.get(0, c);
                let v = (nf * dxhat - sum_dxhat[c] - cache.xhat.get(r, c) * sum_dxhat_xhat[c])
                    * cache.inv_std[c]
                    / nf;
                dx.set(r, c, v);
            }
        }
    } else {
        for r in 0..n {
            for c in 0..d {
                dx.set(r, c, dout.get(r, c) * gamma.get(0, c) * cache.inv_std[c]);
            }
        }
    }
    (dx, dgamma, dbeta)
}

fn check_bn_shapes(
    x: &Tensor2,
    gamma: &Tensor2,
    beta: &Tensor2,
    stats: &BnStats,
) -> Result<(), NumericsError> {
    let d = x.cols();
    if gamma.shape() != (1, d) || beta.shape() != (1, d) || stats.running_mean.len() != d {
        return Err(NumericsError::ShapeMismatch {
            op: "batch_norm",
            lhs: x.shape_string(),
            rhs: format!("gamma {} beta {}", gamma.shape_string(), beta.shape_string()),
        });
    }
    Ok(())
}

/// Row-wise softmax with the log-sum-exp shift.
pub fn softmax(logits: &Tensor2) -> Tensor2 {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Mean cross-entropy over rows plus the logit gradient
/// `(softmax - onehot) / n`, stabilized via log-sum-exp.
pub fn softmax_cross_entropy(
    logits: &Tensor2,
    targets: &[usize],
) -> Result<(f64, Tensor2), NumericsError> {
    let (n, classes) = logits.shape();
    if targets.len() != n {
        return Err(NumericsError::ShapeMismatch {
            op: "softmax_cross_entropy",
            lhs: logits.shape_string(),
            rhs: format!("{} targets", targets.len()),
        });
    }
    for &t in targets {
        if t >= classes {
            return Err(NumericsError::ClassOutOfRange { index: t, classes });
        }
    }
    let mut dlogits = softmax(logits);
    let nf = n as f64;
    let mut loss = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[t];
        let drow = dlogits.row_mut(r);
        drow[t] -= 1.0;
        for d in drow.iter_mut() {
            *d /= nf;
        }
    }
    Ok((loss / nf, dlogits))
}

/// Glorot (Xavier) uniform init over `[-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))]`.
pub fn glorot_init(rows: usize, cols: usize, rng: &mut Rng) -> Tensor2 {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let mut out = Tensor2::zeros(rows, cols);
    for v in out.values_mut() {
        *v = rng.uniform(-bound, bound);
    }
    out
}
