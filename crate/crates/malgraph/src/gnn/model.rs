//! Full graph classifiers: architecture selection, parameter registration,
//! train/eval forward passes, and backward.
//!
//! A model is a description over an external [`ParamStore`]; optimizer state
//! and gradients live in the store, batch-norm running statistics live in
//! the model. Stacked architectures read
//! `convs -> (jumping-knowledge projection) -> dropout -> mean pool -> head`,
//! while SGC is `K propagation steps -> mean pool -> linear`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::numerics::{
    affine_backward, affine_forward, dropout_backward, dropout_forward, glorot_init,
    relu_backward, relu_forward, BnStats, DropoutMask, ParamId, ParamStore, Rng, Tensor2,
};

use super::layers::{
    BnMode, GcnCache, GcnLayer, GinCache, GinLayer, SageCache, SageLayer,
};
use super::{
    global_mean_pool, global_mean_pool_backward, jk_concat, mean_aggregation, sum_adjacency,
    BatchedGraph, GnnError, SparseOp,
};

/// The seven supported architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    Gcn,
    Sage,
    Gin,
    Sgc,
    JkGcn,
    JkSage,
    JkGin,
}

impl Arch {
    pub const ALL: [Arch; 7] =
        [Arch::Gcn, Arch::Sage, Arch::Gin, Arch::Sgc, Arch::JkGcn, Arch::JkSage, Arch::JkGin];

    pub fn name(self) -> &'static str {
        match self {
            Arch::Gcn => "gcn",
            Arch::Sage => "sage",
            Arch::Gin => "gin",
            Arch::Sgc => "sgc",
            Arch::JkGcn => "jk-gcn",
            Arch::JkSage => "jk-sage",
            Arch::JkGin => "jk-gin",
        }
    }

    pub fn is_jk(self) -> bool {
        matches!(self, Arch::JkGcn | Arch::JkSage | Arch::JkGin)
    }

    /// Architectures whose layers carry batch normalization.
    pub fn uses_bn(self) -> bool {
        matches!(self, Arch::Sage | Arch::JkSage)
    }

    /// Grid-selected depth and width for each architecture.
    fn default_shape(self) -> (usize, usize) {
        match self {
            Arch::Gcn => (6, 128),
            Arch::Sage => (6, 64),
            Arch::Gin => (6, 64),
            Arch::Sgc => (5, 128),
            Arch::JkGcn => (6, 128),
            Arch::JkSage => (6, 128),
            Arch::JkGin => (6, 64),
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = GnnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Arch::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| GnnError::InvalidConfig {
                reason: format!(
                    "unknown architecture `{s}` (expected one of gcn, sage, gin, sgc, \
                     jk-gcn, jk-sage, jk-gin)"
                ),
            })
    }
}

/// Hyperparameters for one model run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    /// Stacked depth; for SGC this is the propagation exponent K.
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Grid-selected depth/width per architecture; learning rate 0.001,
    /// dropout 0.5, 200 epochs, batch size 32.
    pub fn defaults_for(arch: Arch) -> ModelConfig {
        let (num_layers, hidden_dim) = arch.default_shape();
        ModelConfig {
            arch,
            num_layers,
            hidden_dim,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            dropout_rate: 0.5,
            epochs: 200,
            batch_size: 32,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), GnnError> {
        let bad = |reason: String| Err(GnnError::InvalidConfig { reason });
        if self.num_layers < 1 {
            return bad(format!("num_layers must be >= 1, got {}", self.num_layers));
        }
        if self.hidden_dim < 1 {
            return bad(format!("hidden_dim must be >= 1, got {}", self.hidden_dim));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate must be in [0, 1), got {}", self.dropout_rate));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if self.batch_size < 1 {
            return bad(format!("batch_size must be >= 1, got {}", self.batch_size));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum ConvLayer {
    Gcn(GcnLayer),
    Sage(SageLayer),
    Gin(GinLayer),
}

#[derive(Debug, Clone)]
struct JkProj {
    weight: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone)]
struct Head {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Debug, Clone)]
enum ModelKind {
    Stacked {
        convs: Vec<ConvLayer>,
        /// One entry per conv layer for batch-norm architectures, else empty.
        bn_stats: Vec<BnStats>,
        jk: Option<JkProj>,
        head: Head,
    },
    Sgc {
        weight: ParamId,
        bias: ParamId,
    },
}

/// A classifier over graphs, generic across [`Arch`].
#[derive(Debug, Clone)]
pub struct GnnModel {
    pub config: ModelConfig,
    pub input_dim: usize,
    pub num_classes: usize,
    kind: ModelKind,
}

/// Logits plus the pooled pre-head embeddings (one row per graph).
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Tensor2,
    pub embeddings: Tensor2,
}

/// Sparse operators a forward pass needs; cloned into the cache so backward
/// does not depend on the batch staying alive.
#[derive(Debug, Clone)]
struct BatchOps {
    norm_adj: Option<SparseOp>,
    mean: Option<SparseOp>,
    mean_t: Option<SparseOp>,
    sum: Option<SparseOp>,
}

impl BatchOps {
    fn build(arch: Arch, batch: &BatchedGraph) -> BatchOps {
        let mut ops =
            BatchOps { norm_adj: None, mean: None, mean_t: None, sum: None };
        match arch {
            Arch::Gcn | Arch::JkGcn | Arch::Sgc => {
                ops.norm_adj = Some(batch.norm_adj().clone());
            }
            Arch::Sage | Arch::JkSage => {
                let mean = mean_aggregation(&batch.graph);
                ops.mean_t = Some(mean.transpose());
                ops.mean = Some(mean);
            }
            Arch::Gin | Arch::JkGin => {
                ops.sum = Some(sum_adjacency(&batch.graph));
            }
        }
        ops
    }

    fn norm_adj(&self) -> &SparseOp {
        self.norm_adj.as_ref().expect("normalized adjacency built for this architecture")
    }

    fn mean(&self) -> &SparseOp {
        self.mean.as_ref().expect("mean aggregation built for this architecture")
    }

    fn mean_t(&self) -> &SparseOp {
        self.mean_t.as_ref().expect("mean aggregation transpose built for this architecture")
    }

    fn sum(&self) -> &SparseOp {
        self.sum.as_ref().expect("sum adjacency built for this architecture")
    }
}

#[derive(Debug)]
enum ConvCache {
    Gcn(GcnCache),
    Sage(SageCache),
    Gin(GinCache),
}

#[derive(Debug)]
struct HeadCache {
    pooled: Tensor2,
    pre1: Tensor2,
    h1d: Tensor2,
    dropout: Option<DropoutMask>,
}

#[derive(Debug)]
enum CacheKind {
    Stacked {
        conv_caches: Vec<ConvCache>,
        jk_concat: Option<Tensor2>,
        node_dropout: Option<DropoutMask>,
        head: HeadCache,
    },
    Sgc {
        pooled: Tensor2,
    },
}

/// Everything backward needs from a training-mode forward pass.
#[derive(Debug)]
pub struct ForwardCache {
    ops: BatchOps,
    graph_id: Vec<usize>,
    counts: Vec<usize>,
    kind: CacheKind,
}

/// Batch-norm statistics handling for one forward pass.
enum StatsMode<'a> {
    Train(&'a mut [BnStats]),
    Eval(&'a [BnStats]),
}

impl GnnModel {
    /// Registers all parameters in `store` (deterministic order and init given
    /// `rng`) and returns the wired model.
    pub fn new(
        config: ModelConfig,
        input_dim: usize,
        num_classes: usize,
        store: &mut ParamStore,
        rng: &mut Rng,
    ) -> Result<Self, GnnError> {
        config.validate()?;
        if input_dim == 0 {
            return Err(GnnError::InvalidConfig { reason: "input_dim must be >= 1".into() });
        }
        if num_classes < 2 {
            return Err(GnnError::InvalidConfig {
                reason: format!("need at least 2 classes, got {num_classes}"),
            });
        }
        let kind = match config.arch {
            Arch::Sgc => ModelKind::Sgc {
                weight: store.add("sgc.weight", glorot_init(input_dim, num_classes, rng)),
                bias: store.add("sgc.bias", Tensor2::zeros(1, num_classes)),
            },
            arch => {
                let hidden = config.hidden_dim;
                let mut convs = Vec::with_capacity(config.num_layers);
                let mut bn_stats = Vec::new();
                for i in 0..config.num_layers {
                    let in_dim = if i == 0 { input_dim } else { hidden };
                    let prefix = format!("conv{i}");
                    let conv = match arch {
                        Arch::Gcn | Arch::JkGcn => {
                            ConvLayer::Gcn(GcnLayer::new(store, &prefix, in_dim, hidden, rng))
                        }
                        Arch::Sage | Arch::JkSage => {
                            bn_stats.push(BnStats::new(hidden));
                            ConvLayer::Sage(SageLayer::new(store, &prefix, in_dim, hidden, rng))
                        }
                        Arch::Gin | Arch::JkGin => {
                            ConvLayer::Gin(GinLayer::new(store, &prefix, in_dim, hidden, rng))
                        }
                        Arch::Sgc => unreachable!(),
                    };
                    convs.push(conv);
                }
                let jk = arch.is_jk().then(|| JkProj {
                    weight: store.add(
                        "jk.weight",
                        glorot_init(config.num_layers * hidden, hidden, rng),
                    ),
                    bias: store.add("jk.bias", Tensor2::zeros(1, hidden)),
                });
                let head = Head {
                    w1: store.add("head.w1", glorot_init(hidden, hidden, rng)),
                    b1: store.add("head.b1", Tensor2::zeros(1, hidden)),
                    w2: store.add("head.w2", glorot_init(hidden, num_classes, rng)),
                    b2: store.add("head.b2", Tensor2::zeros(1, num_classes)),
                };
                ModelKind::Stacked { convs, bn_stats, jk, head }
            }
        };
        Ok(GnnModel { config, input_dim, num_classes, kind })
    }

    /// Batch-norm running statistics, one per conv layer (empty for
    /// architectures without batch norm).
    pub fn bn_stats(&self) -> &[BnStats] {
        match &self.kind {
            ModelKind::Stacked { bn_stats, .. } => bn_stats,
            ModelKind::Sgc { .. } => &[],
        }
    }

    pub fn bn_stats_mut(&mut self) -> &mut [BnStats] {
        match &mut self.kind {
            ModelKind::Stacked { bn_stats, .. } => bn_stats,
            ModelKind::Sgc { .. } => &mut [],
        }
    }

    /// Width of the exported pooled embedding.
    pub fn embedding_dim(&self) -> usize {
        match &self.kind {
            ModelKind::Stacked { .. } => self.config.hidden_dim,
            ModelKind::Sgc { .. } => self.input_dim,
        }
    }

    /// Inference forward: dropout off, batch norm on running statistics.
    pub fn forward_eval(
        &self,
        store: &ParamStore,
        batch: &BatchedGraph,
        x: &Tensor2,
    ) -> Result<ForwardOutput, GnnError> {
        match &self.kind {
            ModelKind::Stacked { convs, bn_stats, jk, head } => {
                let (out, _) = forward_stacked(
                    &self.config,
                    convs,
                    StatsMode::Eval(bn_stats),
                    jk.as_ref(),
                    head,
                    store,
                    batch,
                    x,
                    None,
                )?;
                Ok(out)
            }
            ModelKind::Sgc { weight, bias } => {
                let (out, _) = forward_sgc(&self.config, *weight, *bias, store, batch, x)?;
                Ok(out)
            }
        }
    }

    /// Training forward. `bn_train` selects batch statistics (and updates the
    /// running estimates); `dropout_rng = None` disables dropout, which is
    /// what the gradient check uses together with `bn_train = false`.
    pub fn forward_train(
        &mut self,
        store: &ParamStore,
        batch: &BatchedGraph,
        x: &Tensor2,
        bn_train: bool,
        dropout_rng: Option<&mut Rng>,
    ) -> Result<(ForwardOutput, ForwardCache), GnnError> {
        match &mut self.kind {
            ModelKind::Stacked { convs, bn_stats, jk, head } => {
                let stats = if bn_train {
                    StatsMode::Train(bn_stats)
                } else {
                    StatsMode::Eval(bn_stats)
                };
                forward_stacked(
                    &self.config,
                    convs,
                    stats,
                    jk.as_ref(),
                    head,
                    store,
                    batch,
                    x,
                    dropout_rng,
                )
            }
            ModelKind::Sgc { weight, bias } => {
                forward_sgc(&self.config, *weight, *bias, store, batch, x)
            }
        }
    }

    /// Accumulates parameter gradients for the loss whose logit gradient is
    /// `dlogits`, consuming a cache from [`Self::forward_train`].
    pub fn backward(&self, store: &mut ParamStore, cache: &ForwardCache, dlogits: &Tensor2) {
        match (&self.kind, &cache.kind) {
            (
                ModelKind::Stacked { convs, jk, head, .. },
                CacheKind::Stacked { conv_caches, jk_concat, node_dropout, head: hc },
            ) => {
                let (dh1d, dw2, db2) = affine_backward(dlogits, &hc.h1d, store.value(head.w2));
                store.accumulate_grad(head.w2, &dw2);
                store.accumulate_grad(head.b2, &db2);
                let dh1 = match &hc.dropout {
                    Some(mask) => dropout_backward(&dh1d, mask),
                    None => dh1d,
                };
                let dpre1 = relu_backward(&dh1, &hc.pre1);
                let (dpooled, dw1, db1) = affine_backward(&dpre1, &hc.pooled, store.value(head.w1));
                store.accumulate_grad(head.w1, &dw1);
                store.accumulate_grad(head.b1, &db1);
                let mut dnode =
                    global_mean_pool_backward(&dpooled, &cache.graph_id, &cache.counts);
                if let Some(mask) = node_dropout {
                    dnode = dropout_backward(&dnode, mask);
                }
                let hidden = self.config.hidden_dim;
                if let (Some(jkp), Some(concat)) = (jk, jk_concat) {
                    let (dconcat, djw, djb) = affine_backward(&dnode, concat, store.value(jkp.weight));
                    store.accumulate_grad(jkp.weight, &djw);
                    store.accumulate_grad(jkp.bias, &djb);
                    let n_layers = convs.len();
                    let mut grad = slice_cols(&dconcat, (n_layers - 1) * hidden, hidden);
                    for i in (0..n_layers).rev() {
                        grad = conv_backward(&convs[i], &cache.ops, &conv_caches[i], &grad, store);
                        if i > 0 {
                            grad.add_assign(&slice_cols(&dconcat, (i - 1) * hidden, hidden));
                        }
                    }
                } else {
                    let mut grad = dnode;
                    for i in (0..convs.len()).rev() {
                        grad = conv_backward(&convs[i], &cache.ops, &conv_caches[i], &grad, store);
                    }
                }
            }
            (ModelKind::Sgc { weight, bias }, CacheKind::Sgc { pooled }) => {
                let (_, dw, db) = affine_backward(dlogits, pooled, store.value(*weight));
                store.accumulate_grad(*weight, &dw);
                store.accumulate_grad(*bias, &db);
            }
            _ => unreachable!("cache kind always matches model kind"),
        }
    }
}

/// `adj^k * x` as k successive sparse multiplies; `k = 0` is the identity.
pub fn sgc_propagate(adj: &SparseOp, x: &Tensor2, k: usize) -> Tensor2 {
    let mut h = x.clone();
    for _ in 0..k {
        h = adj.matmul(&h);
    }
    h
}

fn slice_cols(m: &Tensor2, start: usize, width: usize) -> Tensor2 {
    let mut out = Tensor2::zeros(m.rows(), width);
    for r in 0..m.rows() {
        out.row_mut(r).copy_from_slice(&m.row(r)[start..start + width]);
    }
    out
}

fn conv_backward(
    conv: &ConvLayer,
    ops: &BatchOps,
    cache: &ConvCache,
    dout: &Tensor2,
    store: &mut ParamStore,
) -> Tensor2 {
    match (conv, cache) {
        (ConvLayer::Gcn(l), ConvCache::Gcn(c)) => l.backward(store, ops.norm_adj(), c, dout),
        (ConvLayer::Sage(l), ConvCache::Sage(c)) => l.backward(store, ops.mean_t(), c, dout),
        (ConvLayer::Gin(l), ConvCache::Gin(c)) => l.backward(store, ops.sum(), c, dout),
        _ => unreachable!("cache kind always matches layer kind"),
    }
}

#[allow(clippy::too_many_arguments)]
fn forward_stacked(
    config: &ModelConfig,
    convs: &[ConvLayer],
    mut stats: StatsMode<'_>,
    jk: Option<&JkProj>,
    head: &Head,
    store: &ParamStore,
    batch: &BatchedGraph,
    x: &Tensor2,
    mut dropout_rng: Option<&mut Rng>,
) -> Result<(ForwardOutput, ForwardCache), GnnError> {
    if x.cols() != config_input_width(config, convs, store) {
        return Err(GnnError::FeatureWidth {
            index: 0,
            expected: config_input_width(config, convs, store),
            got: x.cols(),
        });
    }
    let ops = BatchOps::build(config.arch, batch);
    let mut conv_caches = Vec::with_capacity(convs.len());
    let mut per_layer: Vec<Tensor2> = Vec::new();
    let mut h = x.clone();
    for (i, conv) in convs.iter().enumerate() {
        let relu = jk.is_some() || i + 1 < convs.len();
        let (out, cache) = match conv {
            ConvLayer::Gcn(l) => {
                let (o, c) = l.forward(store, ops.norm_adj(), &h, relu)?;
                (o, ConvCache::Gcn(c))
            }
            ConvLayer::Sage(l) => {
                let mode = match &mut stats {
                    StatsMode::Train(s) => BnMode::Train(&mut s[i]),
                    StatsMode::Eval(s) => BnMode::Eval(&s[i]),
                };
                let (o, c) = l.forward(store, ops.mean(), &h, mode, relu)?;
                (o, ConvCache::Sage(c))
            }
            ConvLayer::Gin(l) => {
                let (o, c) = l.forward(store, ops.sum(), &h)?;
                (o, ConvCache::Gin(c))
            }
        };
        conv_caches.push(cache);
        if jk.is_some() {
            per_layer.push(out.clone());
        }
        h = out;
    }
    let (node_repr, jk_cache) = match jk {
        Some(jkp) => {
            let refs: Vec<&Tensor2> = per_layer.iter().collect();
            let concat = jk_concat(&refs)?;
            let projected =
                affine_forward(&concat, store.value(jkp.weight), store.value(jkp.bias))?;
            (projected, Some(concat))
        }
        None => (h, None),
    };
    let (node_repr, node_dropout) = match dropout_rng.as_deref_mut() {
        Some(rng) => dropout_forward(&node_repr, config.dropout_rate, true, rng)?,
        None => (node_repr, None),
    };
    let pooled = global_mean_pool(&node_repr, &batch.graph_id, batch.num_graphs)?;
    let pre1 = affine_forward(&pooled, store.value(head.w1), store.value(head.b1))?;
    let h1 = relu_forward(&pre1);
    let (h1d, head_dropout) = match dropout_rng.as_deref_mut() {
        Some(rng) => dropout_forward(&h1, config.dropout_rate, true, rng)?,
        None => (h1, None),
    };
    let logits = affine_forward(&h1d, store.value(head.w2), store.value(head.b2))?;
    let counts = batch.node_counts();
    Ok((
        ForwardOutput { logits, embeddings: pooled.clone() },
        ForwardCache {
            ops,
            graph_id: batch.graph_id.clone(),
            counts,
            kind: CacheKind::Stacked {
                conv_caches,
                jk_concat: jk_cache,
                node_dropout,
                head: HeadCache { pooled, pre1, h1d, dropout: head_dropout },
            },
        },
    ))
}

fn forward_sgc(
    config: &ModelConfig,
    weight: ParamId,
    bias: ParamId,
    store: &ParamStore,
    batch: &BatchedGraph,
    x: &Tensor2,
) -> Result<(ForwardOutput, ForwardCache), GnnError> {
    let expected = store.value(weight).rows();
    if x.cols() != expected {
        return Err(GnnError::FeatureWidth { index: 0, expected, got: x.cols() });
    }
    let ops = BatchOps::build(Arch::Sgc, batch);
    let propagated = sgc_propagate(ops.norm_adj(), x, config.num_layers);
    let pooled = global_mean_pool(&propagated, &batch.graph_id, batch.num_graphs)?;
    let logits = affine_forward(&pooled, store.value(weight), store.value(bias))?;
    let counts = batch.node_counts();
    Ok((
        ForwardOutput { logits, embeddings: pooled.clone() },
        ForwardCache {
            ops,
            graph_id: batch.graph_id.clone(),
            counts,
            kind: CacheKind::Sgc { pooled },
        },
    ))
}

fn config_input_width(config: &ModelConfig, convs: &[ConvLayer], store: &ParamStore) -> usize {
    let _ = config;
    match &convs[0] {
        ConvLayer::Gcn(l) => store.value(l.weight).rows(),
        ConvLayer::Sage(l) => store.value(l.w_self).rows(),
        ConvLayer::Gin(l) => store.value(l.w1).rows(),
    }
}
