//! End-to-end orchestration: feature extraction with train-split fitting,
//! stratified splitting, model training, and evaluation for both graph
//! networks and the non-GNN baselines.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{BaselineError, BaselineKind, LinearModel, MlpModel};
use crate::dataset::{stratified_split, DataError, DatasetSplit, LabeledGraphSet};
use crate::features::{
    feather_embed, graph_histogram, ldp, log1p_ldp, wl_feature_counts, wl_corpus, ChannelStats,
    FeatherConfig, FeatureError, HistogramRanges, WlLabelTable, HIST_BINS,
};
use crate::gnn::model::{GnnModel, ModelConfig};
use crate::gnn::GnnError;
use crate::graph::Graph;
use crate::numerics::{ParamStore, Rng, Tensor2};
use crate::training::{
    evaluate_predictions, gnn_embeddings, predict_gnn, train_gnn, MetricsReport, TrainError,
    TrainHistory,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

/// What to train: a graph network or one of the baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelSpec {
    Gnn(ModelConfig),
    Baseline(BaselineKind),
}

impl ModelSpec {
    pub fn name(&self) -> String {
        match self {
            ModelSpec::Gnn(c) => c.arch.name().to_string(),
            ModelSpec::Baseline(b) => b.name().to_string(),
        }
    }
}

/// Named sub-seeds so every source of randomness is pinned independently.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub split: u64,
    pub init: u64,
    pub dropout: u64,
}

/// A trained classifier together with the feature preprocessing state fitted
/// on its training split, sufficient to score unseen graphs.
#[derive(Debug, Clone)]
pub enum TrainedModel {
    Gnn { model: GnnModel, store: ParamStore, stats: ChannelStats },
    Mlp { model: MlpModel, ranges: HistogramRanges },
    Wl { model: LinearModel, iterations: usize, table: WlLabelTable },
    Feather { model: LinearModel, config: FeatherConfig },
}

#[derive(Debug, Clone)]
pub struct TrainedPipeline {
    pub class_names: Vec<String>,
    pub model: TrainedModel,
}

/// Everything a training run produces.
#[derive(Debug)]
pub struct PipelineResult {
    pub pipeline: TrainedPipeline,
    pub history: TrainHistory,
    /// Test-split metrics; `runtime_seconds` covers train + validate + test.
    pub metrics: MetricsReport,
    pub split: DatasetSplit,
}

/// Standardized log-LDP node features for every graph, with channel
/// statistics fitted on the training indices only.
pub fn gnn_features(
    graphs: &[Graph],
    train_idx: &[usize],
) -> Result<(Vec<Tensor2>, ChannelStats), PipelineError> {
    let raw: Vec<Tensor2> = graphs.par_iter().map(log1p_ldp).collect();
    let train_mats: Vec<Tensor2> = train_idx.iter().map(|&i| raw[i].clone()).collect();
    let stats = ChannelStats::fit(&train_mats)?;
    let features = raw
        .par_iter()
        .map(|f| stats.apply(f))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((features, stats))
}

/// LDP histogram rows (one per graph) with bin ranges fitted on the
/// training indices only.
pub fn histogram_features(
    graphs: &[Graph],
    train_idx: &[usize],
) -> Result<(Tensor2, HistogramRanges), PipelineError> {
    let raw: Vec<Tensor2> = graphs.par_iter().map(ldp).collect();
    let train_mats: Vec<Tensor2> = train_idx.iter().map(|&i| raw[i].clone()).collect();
    let ranges = HistogramRanges::fit(&train_mats)?;
    let rows = raw
        .par_iter()
        .map(|f| graph_histogram(f, &ranges, HIST_BINS))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((Tensor2::from_rows(&rows), ranges))
}

/// WL count features for every graph against a frozen table built from the
/// training indices; counts are normalized by node count.
pub fn wl_features(
    graphs: &[Graph],
    train_idx: &[usize],
    iterations: usize,
) -> (Tensor2, WlLabelTable) {
    let train_refs: Vec<&Graph> = train_idx.iter().map(|&i| &graphs[i]).collect();
    let (_, mut table) = wl_corpus(&train_refs, iterations);
    table.freeze();
    let x = wl_feature_matrix(graphs, iterations, &mut table);
    (x, table)
}

/// Dense rows from per-graph WL counts; requires a frozen table so the
/// feature width is fixed.
pub fn wl_feature_matrix(
    graphs: &[Graph],
    iterations: usize,
    table: &mut WlLabelTable,
) -> Tensor2 {
    assert!(table.is_frozen(), "WL feature width requires a frozen table");
    let width = table.num_labels() as usize;
    let mut x = Tensor2::zeros(graphs.len(), width);
    for (r, g) in graphs.iter().enumerate() {
        let norm = 1.0 / g.num_nodes().max(1) as f64;
        for (label, count) in wl_feature_counts(g, iterations, table) {
            x.set(r, label as usize, count * norm);
        }
    }
    x
}

/// FEATHER rows (one per graph) over log-LDP node values.
pub fn feather_features(graphs: &[Graph], config: &FeatherConfig) -> Tensor2 {
    let rows: Vec<Vec<f64>> = graphs
        .par_iter()
        .map(|g| feather_embed(g, &log1p_ldp(g), config))
        .collect();
    Tensor2::from_rows(&rows)
}

fn gather_rows(x: &Tensor2, idx: &[usize]) -> Tensor2 {
    let mut out = Tensor2::zeros(idx.len(), x.cols());
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).copy_from_slice(x.row(i));
    }
    out
}

fn gather_labels(labels: &[usize], idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| labels[i]).collect()
}

/// Splits the set, fits features on the training split, trains the
/// configured model, and reports test metrics.
pub fn train_pipeline(
    set: &LabeledGraphSet,
    spec: &ModelSpec,
    ratios: (f64, f64, f64),
    seeds: RunSeeds,
) -> Result<PipelineResult, PipelineError> {
    let start = Instant::now();
    let split = stratified_split(set, ratios, seeds.split)?;
    let num_classes = set.num_classes();
    let (pipeline, history, test_preds) = match spec {
        ModelSpec::Gnn(config) => {
            let (features, stats) = gnn_features(&set.graphs, &split.train)?;
            let mut store = ParamStore::new();
            let mut init_rng = Rng::new(seeds.init);
            let mut model = GnnModel::new(
                config.clone(),
                crate::features::LDP_CHANNELS,
                num_classes,
                &mut store,
                &mut init_rng,
            )?;
            let mut train_rng = Rng::new(seeds.dropout);
            let history = train_gnn(
                &mut model,
                &mut store,
                &set.graphs,
                &features,
                &set.labels,
                &split.train,
                &split.val,
                &mut train_rng,
            )?;
            let preds = predict_gnn(&model, &store, &set.graphs, &features, &split.test)?;
            (
                TrainedPipeline {
                    class_names: set.class_names.clone(),
                    model: TrainedModel::Gnn { model, store, stats },
                },
                history,
                preds,
            )
        }
        ModelSpec::Baseline(BaselineKind::Mlp(config)) => {
            let (x, ranges) = histogram_features(&set.graphs, &split.train)?;
            let mut init_rng = Rng::new(seeds.init);
            let mut model =
                MlpModel::new(config.clone(), x.cols(), num_classes, &mut init_rng)?;
            let mut train_rng = Rng::new(seeds.dropout);
            let history = model.train(
                &gather_rows(&x, &split.train),
                &gather_labels(&set.labels, &split.train),
                &gather_rows(&x, &split.val),
                &gather_labels(&set.labels, &split.val),
                &mut train_rng,
            )?;
            let preds = model.predict(&gather_rows(&x, &split.test))?;
            (
                TrainedPipeline {
                    class_names: set.class_names.clone(),
                    model: TrainedModel::Mlp { model, ranges },
                },
                history,
                preds,
            )
        }
        ModelSpec::Baseline(BaselineKind::Wl { iterations, linear }) => {
            let (x, table) = wl_features(&set.graphs, &split.train, *iterations);
            let model = LinearModel::train(
                &gather_rows(&x, &split.train),
                &gather_labels(&set.labels, &split.train),
                num_classes,
                linear.clone(),
            )?;
            let preds = model.predict(&gather_rows(&x, &split.test))?;
            (
                TrainedPipeline {
                    class_names: set.class_names.clone(),
                    model: TrainedModel::Wl { model, iterations: *iterations, table },
                },
                TrainHistory::default(),
                preds,
            )
        }
        ModelSpec::Baseline(BaselineKind::Feather { scales, linear }) => {
            let config = FeatherConfig { scales: *scales, ..FeatherConfig::with_defaults() };
            let x = feather_features(&set.graphs, &config);
            let model = LinearModel::train(
                &gather_rows(&x, &split.train),
                &gather_labels(&set.labels, &split.train),
                num_classes,
                linear.clone(),
            )?;
            let preds = model.predict(&gather_rows(&x, &split.test))?;
            (
                TrainedPipeline {
                    class_names: set.class_names.clone(),
                    model: TrainedModel::Feather { model, config },
                },
                TrainHistory::default(),
                preds,
            )
        }
    };
    let truth = gather_labels(&set.labels, &split.test);
    let mut metrics = evaluate_predictions(&truth, &test_preds, num_classes)?;
    metrics.epochs_run = match &pipeline.model {
        TrainedModel::Gnn { .. } | TrainedModel::Mlp { .. } => history.records.len(),
        TrainedModel::Wl { model, .. } | TrainedModel::Feather { model, .. } => model.epochs_run,
    };
    metrics.runtime_seconds = start.elapsed().as_secs_f64();
    Ok(PipelineResult { pipeline, history, metrics, split })
}

impl TrainedPipeline {
    pub fn model_kind(&self) -> &'static str {
        match &self.model {
            TrainedModel::Gnn { .. } => "gnn",
            TrainedModel::Mlp { .. } => "mlp",
            TrainedModel::Wl { .. } => "wl",
            TrainedModel::Feather { .. } => "feather",
        }
    }

    /// Class predictions for unseen graphs using the stored preprocessing.
    pub fn predict(&self, graphs: &[Graph]) -> Result<Vec<usize>, PipelineError> {
        if graphs.is_empty() {
            return Err(TrainError::EmptySet { what: "evaluation subset" }.into());
        }
        let idx: Vec<usize> = (0..graphs.len()).collect();
        match &self.model {
            TrainedModel::Gnn { model, store, stats } => {
                let features = apply_stats(graphs, stats)?;
                Ok(predict_gnn(model, store, graphs, &features, &idx)?)
            }
            TrainedModel::Mlp { model, ranges } => {
                Ok(model.predict(&histogram_rows(graphs, ranges)?)?)
            }
            TrainedModel::Wl { model, iterations, table } => {
                let mut table = table.clone();
                let x = wl_feature_matrix(graphs, *iterations, &mut table);
                Ok(model.predict(&x)?)
            }
            TrainedModel::Feather { model, config } => {
                Ok(model.predict(&feather_features(graphs, config))?)
            }
        }
    }

    /// Graph-level vectors: pooled embeddings for networks, the model's
    /// input feature vector for the baselines.
    pub fn embeddings(&self, graphs: &[Graph]) -> Result<Tensor2, PipelineError> {
        if graphs.is_empty() {
            return Err(TrainError::EmptySet { what: "embedding subset" }.into());
        }
        let idx: Vec<usize> = (0..graphs.len()).collect();
        match &self.model {
            TrainedModel::Gnn { model, store, stats } => {
                let features = apply_stats(graphs, stats)?;
                Ok(gnn_embeddings(model, store, graphs, &features, &idx)?)
            }
            TrainedModel::Mlp { ranges, .. } => histogram_rows(graphs, ranges),
            TrainedModel::Wl { iterations, table, .. } => {
                let mut table = table.clone();
                Ok(wl_feature_matrix(graphs, *iterations, &mut table))
            }
            TrainedModel::Feather { config, .. } => Ok(feather_features(graphs, config)),
        }
    }

    /// Test-style metrics on an explicit labeled subset.
    pub fn evaluate(
        &self,
        graphs: &[Graph],
        labels: &[usize],
    ) -> Result<MetricsReport, PipelineError> {
        let preds = self.predict(graphs)?;
        Ok(evaluate_predictions(labels, &preds, self.class_names.len())?)
    }
}

fn apply_stats(graphs: &[Graph], stats: &ChannelStats) -> Result<Vec<Tensor2>, PipelineError> {
    graphs
        .par_iter()
        .map(|g| stats.apply(&log1p_ldp(g)).map_err(PipelineError::from))
        .collect()
}

fn histogram_rows(
    graphs: &[Graph],
    ranges: &HistogramRanges,
) -> Result<Tensor2, PipelineError> {
    let rows = graphs
        .par_iter()
        .map(|g| graph_histogram(&ldp(g), ranges, HIST_BINS))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Tensor2::from_rows(&rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synth_families;
    use crate::gnn::model::Arch;
    use crate::baselines::{LinearConfig, MlpConfig};

    fn quick_gnn_spec() -> ModelSpec {
        ModelSpec::Gnn(ModelConfig {
            arch: Arch::Gin,
            num_layers: 2,
            hidden_dim: 16,
            learning_rate: 5e-3,
            weight_decay: 0.0,
            dropout_rate: 0.2,
            epochs: 8,
            batch_size: 16,
            seed: 0,
        })
    }

    const SEEDS: RunSeeds = RunSeeds { split: 5, init: 6, dropout: 7 };

    #[test]
    fn gnn_pipeline_learns_synthetic_families() {
        let set = synth_families(12, 21).unwrap();
        let result = train_pipeline(&set, &quick_gnn_spec(), (0.7, 0.1, 0.2), SEEDS).unwrap();
        assert_eq!(result.history.records.len(), 8);
        assert_eq!(result.metrics.epochs_run, 8);
        assert!(result.metrics.runtime_seconds > 0.0);
        assert!(
            result.metrics.accuracy >= 0.5,
            "toy run should beat chance, got {}",
            result.metrics.accuracy
        );
        let total: u64 = result.metrics.confusion.iter().flatten().sum();
        assert_eq!(total as usize, result.split.test.len());
    }

    #[test]
    fn pipeline_predict_matches_training_report() {
        let set = synth_families(10, 33).unwrap();
        let result = train_pipeline(&set, &quick_gnn_spec(), (0.7, 0.1, 0.2), SEEDS).unwrap();
        let test_graphs: Vec<Graph> =
            result.split.test.iter().map(|&i| set.graphs[i].clone()).collect();
        let test_labels: Vec<usize> =
            result.split.test.iter().map(|&i| set.labels[i]).collect();
        let again = result.pipeline.evaluate(&test_graphs, &test_labels).unwrap();
        assert_eq!(again.accuracy, result.metrics.accuracy);
        assert_eq!(again.confusion, result.metrics.confusion);
    }

    #[test]
    fn wl_pipeline_separates_families() {
        let set = synth_families(10, 40).unwrap();
        let spec = ModelSpec::Baseline(BaselineKind::Wl {
            iterations: 2,
            linear: LinearConfig::default(),
        });
        let result = train_pipeline(&set, &spec, (0.7, 0.1, 0.2), SEEDS).unwrap();
        assert!(result.metrics.accuracy >= 0.5, "got {}", result.metrics.accuracy);
        assert!(result.metrics.epochs_run > 0);
    }

    #[test]
    fn feather_pipeline_runs_end_to_end() {
        let set = synth_families(8, 41).unwrap();
        let spec = ModelSpec::Baseline(BaselineKind::default_feather());
        let result = train_pipeline(&set, &spec, (0.7, 0.1, 0.2), SEEDS).unwrap();
        assert_eq!(result.pipeline.model_kind(), "feather");
        let emb = result.pipeline.embeddings(&set.graphs[..3].to_vec()).unwrap();
        assert_eq!(emb.shape(), (3, 320));
    }

    #[test]
    fn mlp_pipeline_runs_and_embeddings_are_histograms() {
        let set = synth_families(8, 42).unwrap();
        let spec = ModelSpec::Baseline(BaselineKind::Mlp(MlpConfig {
            epochs: 10,
            ..MlpConfig::default()
        }));
        let result = train_pipeline(&set, &spec, (0.7, 0.1, 0.2), SEEDS).unwrap();
        let emb = result.pipeline.embeddings(&set.graphs[..2].to_vec()).unwrap();
        assert_eq!(emb.shape(), (2, 5 * HIST_BINS));
        for r in 0..2 {
            for ch in 0..5 {
                let s: f64 = emb.row(r)[ch * HIST_BINS..(ch + 1) * HIST_BINS].iter().sum();
                assert!((s - 1.0).abs() < 1e-9, "channel {ch} density sums to {s}");
            }
        }
    }

    #[test]
    fn unseen_wl_labels_map_to_unknown_and_still_predict() {
        let set = synth_families(8, 44).unwrap();
        let spec = ModelSpec::Baseline(BaselineKind::Wl {
            iterations: 2,
            linear: LinearConfig::default(),
        });
        let result = train_pipeline(&set, &spec, (0.7, 0.1, 0.2), SEEDS).unwrap();
        // A colossal star has degrees far outside the synthetic corpus, so
        // its root label is unseen; prediction must not panic.
        let edges: Vec<(usize, usize)> = (1..400).map(|v| (0, v)).collect();
        let star = Graph::from_edge_list(&edges, 400).unwrap();
        let preds = result.pipeline.predict(&[star]).unwrap();
        assert_eq!(preds.len(), 1);
    }

    #[test]
    fn same_seeds_reproduce_identical_metrics() {
        let set = synth_families(10, 50).unwrap();
        let a = train_pipeline(&set, &quick_gnn_spec(), (0.7, 0.1, 0.2), SEEDS).unwrap();
        let b = train_pipeline(&set, &quick_gnn_spec(), (0.7, 0.1, 0.2), SEEDS).unwrap();
        assert_eq!(a.metrics.accuracy, b.metrics.accuracy);
        assert_eq!(a.metrics.confusion, b.metrics.confusion);
        assert_eq!(a.history, b.history);
    }
}
