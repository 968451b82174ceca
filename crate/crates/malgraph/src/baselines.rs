//! Non-GNN classifiers: a feedforward network over LDP histograms and
//! multinomial logistic regression over WL subtree counts or FEATHER
//! embeddings.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{
    adam_step, affine_backward, affine_forward, dropout_backward, dropout_forward, glorot_init,
    relu_backward, relu_forward, softmax_cross_entropy, AdamConfig, DropoutMask, NumericsError,
    ParamId, ParamStore, Rng, Tensor2,
};
use crate::training::{argmax, EpochRecord, TrainError, TrainHistory};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("training set contains a single class")]
    SingleClass,
    #[error("feature matrix is all zeros")]
    AllZeroFeatures,
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Feedforward classifier hyperparameters. `num_layers` counts affine maps,
/// so the default network is input -> 64 -> 64 -> 64 -> 64 -> classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub dropout_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            num_layers: 5,
            hidden_dim: 64,
            learning_rate: 1e-3,
            dropout_rate: 0.5,
            epochs: 50,
            batch_size: 32,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

/// Multinomial logistic regression hyperparameters. Training runs
/// full-batch Adam until the loss improves by less than `tolerance` or
/// `max_epochs` is hit; `weight_decay` is the L2 strength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub tolerance: f64,
}

impl Default for LinearConfig {
    fn default() -> Self {
        LinearConfig {
            learning_rate: 0.05,
            weight_decay: 1e-4,
            max_epochs: 500,
            tolerance: 1e-6,
        }
    }
}

/// Which non-GNN classifier to run, with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BaselineKind {
    Mlp(MlpConfig),
    Wl { iterations: usize, linear: LinearConfig },
    Feather { scales: usize, linear: LinearConfig },
}

impl BaselineKind {
    /// Grid-selected defaults: 6 WL iterations, FEATHER order 2.
    pub fn default_wl() -> Self {
        BaselineKind::Wl { iterations: 6, linear: LinearConfig::default() }
    }

    pub fn default_feather() -> Self {
        BaselineKind::Feather { scales: 2, linear: LinearConfig::default() }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::Mlp(_) => "mlp",
            BaselineKind::Wl { .. } => "wl",
            BaselineKind::Feather { .. } => "feather",
        }
    }
}

/// Fully-connected ReLU network with dropout between layers, trained with
/// mini-batch Adam and best-validation-accuracy selection.
#[derive(Debug, Clone)]
pub struct MlpModel {
    pub config: MlpConfig,
    pub input_dim: usize,
    pub num_classes: usize,
    store: ParamStore,
    layers: Vec<(ParamId, ParamId)>,
}

struct MlpCache {
    inputs: Vec<Tensor2>,
    pres: Vec<Tensor2>,
    masks: Vec<Option<DropoutMask>>,
}

impl MlpModel {
    pub fn new(
        config: MlpConfig,
        input_dim: usize,
        num_classes: usize,
        rng: &mut Rng,
    ) -> Result<Self, BaselineError> {
        if config.num_layers < 1 || config.hidden_dim < 1 || config.batch_size < 1 {
            return Err(TrainError::LengthMismatch {
                detail: "layers, hidden size, and batch size must all be >= 1".into(),
            }
            .into());
        }
        let mut store = ParamStore::new();
        let mut layers = Vec::with_capacity(config.num_layers);
        for i in 0..config.num_layers {
            let in_dim = if i == 0 { input_dim } else { config.hidden_dim };
            let out_dim = if i + 1 == config.num_layers { num_classes } else { config.hidden_dim };
            layers.push((
                store.add(format!("fc{i}.weight"), glorot_init(in_dim, out_dim, rng)),
                store.add(format!("fc{i}.bias"), Tensor2::zeros(1, out_dim)),
            ));
        }
        Ok(MlpModel { config, input_dim, num_classes, store, layers })
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn forward(
        &self,
        x: &Tensor2,
        mut dropout_rng: Option<&mut Rng>,
    ) -> Result<(Tensor2, MlpCache), NumericsError> {
        let mut cache = MlpCache { inputs: Vec::new(), pres: Vec::new(), masks: Vec::new() };
        let mut h = x.clone();
        for (i, (w, b)) in self.layers.iter().enumerate() {
            cache.inputs.push(h.clone());
            let pre = affine_forward(&h, self.store.value(*w), self.store.value(*b))?;
            if i + 1 == self.layers.len() {
                cache.pres.push(pre.clone());
                cache.masks.push(None);
                h = pre;
            } else {
                let activated = relu_forward(&pre);
                let (dropped, mask) = match dropout_rng.as_deref_mut() {
                    Some(rng) => {
                        dropout_forward(&activated, self.config.dropout_rate, true, rng)?
                    }
                    None => (activated, None),
                };
                cache.pres.push(pre);
                cache.masks.push(mask);
                h = dropped;
            }
        }
        Ok((h, cache))
    }

    fn backward(&mut self, cache: &MlpCache, dlogits: &Tensor2) {
        let mut grad = dlogits.clone();
        for i in (0..self.layers.len()).rev() {
            let (w, b) = self.layers[i];
            if i + 1 != self.layers.len() {
                if let Some(mask) = &cache.masks[i] {
                    grad = dropout_backward(&grad, mask);
                }
                grad = relu_backward(&grad, &cache.pres[i]);
            }
            let (dx, dw, db) = affine_backward(&grad, &cache.inputs[i], self.store.value(w));
            self.store.accumulate_grad(w, &dw);
            self.store.accumulate_grad(b, &db);
            grad = dx;
        }
    }

    pub fn logits(&self, x: &Tensor2) -> Result<Tensor2, BaselineError> {
        let (logits, _) = self.forward(x, None).map_err(BaselineError::Numerics)?;
        Ok(logits)
    }

    pub fn predict(&self, x: &Tensor2) -> Result<Vec<usize>, BaselineError> {
        let logits = self.logits(x)?;
        Ok((0..logits.rows()).map(|r| argmax(logits.row(r))).collect())
    }

    /// Mini-batch training with per-epoch shuffling; parameters from the
    /// epoch with the best validation accuracy are retained (ties go to the
    /// earliest epoch). Pass the training rows again as validation to select
    /// on training accuracy.
    pub fn train(
        &mut self,
        x_train: &Tensor2,
        y_train: &[usize],
        x_val: &Tensor2,
        y_val: &[usize],
        rng: &mut Rng,
    ) -> Result<TrainHistory, BaselineError> {
        if x_train.rows() == 0 {
            return Err(TrainError::EmptySet { what: "training subset" }.into());
        }
        if x_train.rows() != y_train.len() || x_val.rows() != y_val.len() {
            return Err(TrainError::LengthMismatch {
                detail: format!(
                    "{} train rows vs {} labels, {} val rows vs {} labels",
                    x_train.rows(),
                    y_train.len(),
                    x_val.rows(),
                    y_val.len()
                ),
            }
            .into());
        }
        require_two_classes(y_train)?;
        let adam = AdamConfig::new(self.config.learning_rate)
            .with_weight_decay(self.config.weight_decay);
        let mut order: Vec<usize> = (0..x_train.rows()).collect();
        let mut history = TrainHistory::default();
        let mut best: Option<(f64, Vec<Tensor2>)> = None;
        for epoch in 1..=self.config.epochs {
            rng.shuffle(&mut order);
            let mut loss_sum = 0.0;
            for (bi, chunk) in order.chunks(self.config.batch_size).enumerate() {
                let xb = gather_rows(x_train, chunk);
                let yb: Vec<usize> = chunk.iter().map(|&i| y_train[i]).collect();
                let (logits, cache) = self.forward(&xb, Some(rng))?;
                let (loss, dlogits) = softmax_cross_entropy(&logits, &yb)?;
                if !loss.is_finite() {
                    return Err(TrainError::NanLoss { epoch, batch: bi + 1 }.into());
                }
                self.backward(&cache, &dlogits);
                if let Err(e) = adam_step(&mut self.store, &adam) {
                    return Err(match e {
                        NumericsError::NonFiniteGrad(_) => {
                            BaselineError::from(TrainError::NanLoss { epoch, batch: bi + 1 })
                        }
                        other => BaselineError::Numerics(other),
                    });
                }
                loss_sum += loss * chunk.len() as f64;
            }
            let train_loss = loss_sum / x_train.rows() as f64;
            let preds = self.predict(x_val)?;
            let val_accuracy = plain_accuracy(&preds, y_val);
            history.records.push(EpochRecord { epoch, train_loss, val_accuracy });
            if best.as_ref().map_or(true, |(acc, _)| val_accuracy > *acc) {
                best = Some((val_accuracy, self.store.snapshot_values()));
                history.best_epoch = Some(epoch);
            }
        }
        if let Some((acc, params)) = best {
            self.store.restore_values(&params);
            history.best_val_accuracy = acc;
        }
        Ok(history)
    }
}

/// Multinomial logistic regression fit by full-batch Adam. Training is
/// deterministic: weights start at zero, so no seed is involved.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub config: LinearConfig,
    pub input_dim: usize,
    pub num_classes: usize,
    pub epochs_run: usize,
    store: ParamStore,
    weight: ParamId,
    bias: ParamId,
}

impl LinearModel {
    pub fn train(
        x: &Tensor2,
        y: &[usize],
        num_classes: usize,
        config: LinearConfig,
    ) -> Result<Self, BaselineError> {
        if x.rows() == 0 {
            return Err(TrainError::EmptySet { what: "training subset" }.into());
        }
        if x.rows() != y.len() {
            return Err(TrainError::LengthMismatch {
                detail: format!("{} rows vs {} labels", x.rows(), y.len()),
            }
            .into());
        }
        require_two_classes(y)?;
        if x.max_abs() == 0.0 {
            return Err(BaselineError::AllZeroFeatures);
        }
        let mut store = ParamStore::new();
        let weight = store.add("linear.weight", Tensor2::zeros(x.cols(), num_classes));
        let bias = store.add("linear.bias", Tensor2::zeros(1, num_classes));
        let adam = AdamConfig::new(config.learning_rate).with_weight_decay(config.weight_decay);
        let mut prev_loss = f64::INFINITY;
        let mut epochs_run = 0;
        for epoch in 1..=config.max_epochs {
            let logits = affine_forward(x, store.value(weight), store.value(bias))
                .map_err(BaselineError::Numerics)?;
            let (loss, dlogits) =
                softmax_cross_entropy(&logits, y).map_err(BaselineError::Numerics)?;
            if !loss.is_finite() {
                return Err(TrainError::NanLoss { epoch, batch: 1 }.into());
            }
            let (_, dw, db) = affine_backward(&dlogits, x, store.value(weight));
            store.accumulate_grad(weight, &dw);
            store.accumulate_grad(bias, &db);
            adam_step(&mut store, &adam).map_err(BaselineError::Numerics)?;
            epochs_run = epoch;
            if (prev_loss - loss).abs() < config.tolerance {
                break;
            }
            prev_loss = loss;
        }
        Ok(LinearModel {
            config,
            input_dim: x.cols(),
            num_classes,
            epochs_run,
            store,
            weight,
            bias,
        })
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Rebuilds an untrained shell with the given dimensions; used when
    /// loading parameters back from a checkpoint.
    pub fn shell(config: LinearConfig, input_dim: usize, num_classes: usize) -> Self {
        let mut store = ParamStore::new();
        let weight = store.add("linear.weight", Tensor2::zeros(input_dim, num_classes));
        let bias = store.add("linear.bias", Tensor2::zeros(1, num_classes));
        LinearModel { config, input_dim, num_classes, epochs_run: 0, store, weight, bias }
    }

    pub fn logits(&self, x: &Tensor2) -> Result<Tensor2, BaselineError> {
        affine_forward(x, self.store.value(self.weight), self.store.value(self.bias))
            .map_err(BaselineError::Numerics)
    }

    pub fn predict(&self, x: &Tensor2) -> Result<Vec<usize>, BaselineError> {
        let logits = self.logits(x)?;
        Ok((0..logits.rows()).map(|r| argmax(logits.row(r))).collect())
    }
}

fn require_two_classes(y: &[usize]) -> Result<(), BaselineError> {
    let first = y[0];
    if y.iter().all(|&c| c == first) {
        return Err(BaselineError::SingleClass);
    }
    Ok(())
}

fn plain_accuracy(preds: &[usize], truth: &[usize]) -> f64 {
    let hits = preds.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}

fn gather_rows(x: &Tensor2, idx: &[usize]) -> Tensor2 {
    let mut out = Tensor2::zeros(idx.len(), x.cols());
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).copy_from_slice(x.row(i));
    }
    out
}
