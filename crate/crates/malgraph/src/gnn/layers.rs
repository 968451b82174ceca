//! Message-passing layers with explicit caches and hand-derived backward
//! passes.
//!
//! Layers are stateless descriptions over a [`ParamStore`]: construction
//! registers parameters under a name prefix, forward returns the output plus
//! a cache, and backward consumes the cache, accumulates parameter gradients
//! into the store, and returns the gradient with respect to the layer input.

use crate::numerics::{
    affine_backward, affine_forward, batch_norm_backward, batch_norm_eval_cached,
    batch_norm_train, glorot_init, relu_backward, relu_forward, BnCache, BnStats, ParamId,
    ParamStore, Rng, Tensor2,
};

use super::{GnnError, SparseOp};

/// Batch-norm mode for layers that carry running statistics.
pub enum BnMode<'a> {
    /// Use batch statistics and fold them into the running estimates.
    Train(&'a mut BnStats),
    /// Use the provided running statistics as-is.
    Eval(&'a BnStats),
}

/// Graph convolution: `ReLU(A_hat * h * W + b)`, with the ReLU optional so
/// the final stacked layer can feed the readout unsquashed.
#[derive(Debug, Clone)]
pub struct GcnLayer {
    pub weight: ParamId,
    pub bias: ParamId,
}

#[derive(Debug)]
pub struct GcnCache {
    agg: Tensor2,
    pre: Tensor2,
    relu: bool,
}

impl GcnLayer {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut Rng,
    ) -> Self {
        GcnLayer {
            weight: store.add(format!("{prefix}.weight"), glorot_init(in_dim, out_dim, rng)),
            bias: store.add(format!("{prefix}.bias"), Tensor2::zeros(1, out_dim)),
        }
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        adj: &SparseOp,
        h: &Tensor2,
        relu: bool,
    ) -> Result<(Tensor2, GcnCache), GnnError> {
        let agg = adj.matmul(h);
        let pre = affine_forward(&agg, store.value(self.weight), store.value(self.bias))?;
        let out = if relu { relu_forward(&pre) } else { pre.clone() };
        Ok((out, GcnCache { agg, pre, relu }))
    }

    /// Accumulates parameter gradients and returns `d loss / d h`.
    pub fn backward(
        &self,
        store: &mut ParamStore,
        adj: &SparseOp,
        cache: &GcnCache,
        dout: &Tensor2,
    ) -> Tensor2 {
        let dpre = if cache.relu { relu_backward(dout, &cache.pre) } else { dout.clone() };
        let (dagg, dw, db) = affine_backward(&dpre, &cache.agg, store.value(self.weight));
        store.accumulate_grad(self.weight, &dw);
        store.accumulate_grad(self.bias, &db);
        // A_hat is symmetric, so its transpose is itself.
        adj.matmul(&dagg)
    }
}

/// GraphSAGE with mean aggregation:
/// `ReLU(BN(h * W_self + mean_N(h) * W_neigh + b))`; nodes without neighbors
/// contribute a zero mean term.
#[derive(Debug, Clone)]
pub struct SageLayer {
    pub w_self: ParamId,
    pub w_neigh: ParamId,
    pub bias: ParamId,
    pub bn_gamma: ParamId,
    pub bn_beta: ParamId,
}

#[derive(Debug)]
pub struct SageCache {
    h: Tensor2,
    agg: Tensor2,
    /// Pre-batch-norm activations, exposed for value-level layer tests.
    pub pre_bn: Tensor2,
    bn_out: Tensor2,
    bn_cache: BnCache,
    relu: bool,
}

impl SageLayer {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut Rng,
    ) -> Self {
        SageLayer {
            w_self: store.add(format!("{prefix}.w_self"), glorot_init(in_dim, out_dim, rng)),
            w_neigh: store.add(format!("{prefix}.w_neigh"), glorot_init(in_dim, out_dim, rng)),
            bias: store.add(format!("{prefix}.bias"), Tensor2::zeros(1, out_dim)),
            bn_gamma: store.add(format!("{prefix}.bn_gamma"), Tensor2::filled(1, out_dim, 1.0)),
            bn_beta: store.add(format!("{prefix}.bn_beta"), Tensor2::zeros(1, out_dim)),
        }
    }

    /// `mean_agg` must be the row-normalized adjacency of the same graph the
    /// features live on.
    pub fn forward(
        &self,
        store: &ParamStore,
        mean_agg: &SparseOp,
        h: &Tensor2,
        bn: BnMode<'_>,
        relu: bool,
    ) -> Result<(Tensor2, SageCache), GnnError> {
        let agg = mean_agg.matmul(h);
        let pre_bn = h
            .matmul(store.value(self.w_self))
            .add(&agg.matmul(store.value(self.w_neigh)))
            .add_row_broadcast(store.value(self.bias));
        let gamma = store.value(self.bn_gamma);
        let beta = store.value(self.bn_beta);
        let (bn_out, bn_cache) = match bn {
            BnMode::Train(stats) => batch_norm_train(&pre_bn, gamma, beta, stats)?,
            BnMode::Eval(stats) => batch_norm_eval_cached(&pre_bn, gamma, beta, stats)?,
        };
        let out = if relu { relu_forward(&bn_out) } else { bn_out.clone() };
        Ok((out, SageCache { h: h.clone(), agg, pre_bn, bn_out, bn_cache, relu }))
    }

    pub fn backward(
        &self,
        store: &mut ParamStore,
        mean_agg_t: &SparseOp,
        cache: &SageCache,
        dout: &Tensor2,
    ) -> Tensor2 {
        let dbn_out =
            if cache.relu { relu_backward(dout, &cache.bn_out) } else { dout.clone() };
        let (dpre_bn, dgamma, dbeta) =
            batch_norm_backward(&dbn_out, &cache.bn_cache, store.value(self.bn_gamma));
        store.accumulate_grad(self.bn_gamma, &dgamma);
        store.accumulate_grad(self.bn_beta, &dbeta);
        let (dh_self, dw_self, db) =
            affine_backward(&dpre_bn, &cache.h, store.value(self.w_self));
        let (dagg, dw_neigh, _) =
            affine_backward(&dpre_bn, &cache.agg, store.value(self.w_neigh));
        store.accumulate_grad(self.w_self, &dw_self);
        store.accumulate_grad(self.w_neigh, &dw_neigh);
        store.accumulate_grad(self.bias, &db);
        dh_self.add(&mean_agg_t.matmul(&dagg))
    }
}

/// Graph isomorphism layer: `MLP2((1 + eps) * h + sum_N(h))` where `MLP2` is
/// affine -> ReLU -> affine and `eps` is a trainable scalar starting at 0.
#[derive(Debug, Clone)]
pub struct GinLayer {
    pub eps: ParamId,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

#[derive(Debug)]
pub struct GinCache {
    h: Tensor2,
    /// `(1 + eps) h + sum_N(h)`, exposed for value-level layer tests.
    pub pre_mlp: Tensor2,
    mid_pre: Tensor2,
    mid: Tensor2,
}

impl GinLayer {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut Rng,
    ) -> Self {
        GinLayer {
            eps: store.add(format!("{prefix}.eps"), Tensor2::zeros(1, 1)),
            w1: store.add(format!("{prefix}.mlp_w1"), glorot_init(in_dim, out_dim, rng)),
            b1: store.add(format!("{prefix}.mlp_b1"), Tensor2::zeros(1, out_dim)),
            w2: store.add(format!("{prefix}.mlp_w2"), glorot_init(out_dim, out_dim, rng)),
            b2: store.add(format!("{prefix}.mlp_b2"), Tensor2::zeros(1, out_dim)),
        }
    }

    /// `sum_adj` must be the unit-weight adjacency of the feature graph.
    pub fn forward(
        &self,
        store: &ParamStore,
        sum_adj: &SparseOp,
        h: &Tensor2,
    ) -> Result<(Tensor2, GinCache), GnnError> {
        let eps = store.value(self.eps).get(0, 0);
        let pre_mlp = h.scale(1.0 + eps).add(&sum_adj.matmul(h));
        let mid_pre = affine_forward(&pre_mlp, store.value(self.w1), store.value(self.b1))?;
        let mid = relu_forward(&mid_pre);
        let out = affine_forward(&mid, store.value(self.w2), store.value(self.b2))?;
        Ok((out, GinCache { h: h.clone(), pre_mlp, mid_pre, mid }))
    }

    pub fn backward(
        &self,
        store: &mut ParamStore,
        sum_adj: &SparseOp,
        cache: &GinCache,
        dout: &Tensor2,
    ) -> Tensor2 {
        let (dmid, dw2, db2) = affine_backward(dout, &cache.mid, store.value(self.w2));
        store.accumulate_grad(self.w2, &dw2);
        store.accumulate_grad(self.b2, &db2);
        let dmid_pre = relu_backward(&dmid, &cache.mid_pre);
        let (dpre_mlp, dw1, db1) =
            affine_backward(&dmid_pre, &cache.pre_mlp, store.value(self.w1));
        store.accumulate_grad(self.w1, &dw1);
        store.accumulate_grad(self.b1, &db1);
        let deps: f64 = dpre_mlp
            .values()
            .iter()
            .zip(cache.h.values())
            .map(|(d, h)| d * h)
            .sum();
        store.accumulate_grad(self.eps, &Tensor2::from_vec(1, 1, vec![deps]));
        let eps = store.value(self.eps).get(0, 0);
        // Sum adjacency is symmetric.
        dpre_mlp.scale(1.0 + eps).add(&sum_adj.matmul(&dpre_mlp))
    }
}
