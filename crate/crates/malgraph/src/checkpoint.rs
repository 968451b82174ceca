//! Binary model checkpoints: a JSON header describing the model and its
//! feature preprocessing, followed by raw little-endian f64 tensor blobs.
//!
//! Layout: `b"MALG"` magic, `u32` format version, `u64` header byte length,
//! the header JSON, then every tensor listed in the header in order. Saving
//! the same trained model twice produces byte-identical files.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{LinearConfig, LinearModel, MlpConfig, MlpModel};
use crate::features::{ChannelStats, FeatherConfig, HistogramRanges, WlLabelTable};
use crate::gnn::model::{GnnModel, ModelConfig};
use crate::numerics::{BnStats, ParamStore, Rng, Tensor2};
use crate::pipeline::{TrainedModel, TrainedPipeline};

const MAGIC: &[u8; 4] = b"MALG";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a model checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt checkpoint: {reason}")]
    Corrupt { reason: String },
    #[error("checkpoint header: {0}")]
    Json(#[from] serde_json::Error),
}

fn corrupt(reason: impl Into<String>) -> CheckpointError {
    CheckpointError::Corrupt { reason: reason.into() }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct GnnMeta {
    config: ModelConfig,
    input_dim: usize,
    num_classes: usize,
    stats: ChannelStats,
}

#[derive(Debug, Serialize, Deserialize)]
struct MlpMeta {
    config: MlpConfig,
    input_dim: usize,
    num_classes: usize,
    ranges: HistogramRanges,
}

#[derive(Debug, Serialize, Deserialize)]
struct LinearMeta {
    config: LinearConfig,
    input_dim: usize,
    num_classes: usize,
    epochs_run: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct WlMeta {
    linear: LinearMeta,
    iterations: usize,
    table: WlLabelTable,
}

#[derive(Debug, Serialize, Deserialize)]
struct FeatherMeta {
    linear: LinearMeta,
    config: FeatherConfig,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: String,
    class_names: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gnn: Option<GnnMeta>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mlp: Option<MlpMeta>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wl: Option<WlMeta>,
    #[serde(skip_serializing_if = "Option::is_none")]
    feather: Option<FeatherMeta>,
    tensors: Vec<TensorMeta>,
}

impl Default for Header {
    fn default() -> Self {
        Header {
            kind: String::new(),
            class_names: Vec::new(),
            gnn: None,
            mlp: None,
            wl: None,
            feather: None,
            tensors: Vec::new(),
        }
    }
}

fn linear_meta(model: &LinearModel) -> LinearMeta {
    LinearMeta {
        config: model.config.clone(),
        input_dim: model.input_dim,
        num_classes: model.num_classes,
        epochs_run: model.epochs_run,
    }
}

fn store_tensors(store: &ParamStore) -> (Vec<TensorMeta>, Vec<&Tensor2>) {
    let mut metas = Vec::new();
    let mut values = Vec::new();
    for (name, p) in store.iter() {
        metas.push(TensorMeta {
            name: name.to_string(),
            rows: p.value.rows(),
            cols: p.value.cols(),
        });
        values.push(&p.value);
    }
    (metas, values)
}

/// Serializes a trained pipeline to `path`.
pub fn save(pipeline: &TrainedPipeline, path: &Path) -> Result<(), CheckpointError> {
    let mut header = Header {
        kind: pipeline.model_kind().to_string(),
        class_names: pipeline.class_names.clone(),
        ..Header::default()
    };
    let mut blobs: Vec<Vec<f64>> = Vec::new();
    match &pipeline.model {
        TrainedModel::Gnn { model, store, stats } => {
            header.gnn = Some(GnnMeta {
                config: model.config.clone(),
                input_dim: model.input_dim,
                num_classes: model.num_classes,
                stats: stats.clone(),
            });
            let (metas, values) = store_tensors(store);
            header.tensors = metas;
            blobs.extend(values.iter().map(|t| t.values().to_vec()));
            for (i, bn) in model.bn_stats().iter().enumerate() {
                let cols = bn.running_mean.len();
                header.tensors.push(TensorMeta {
                    name: format!("bn{i}.running_mean"),
                    rows: 1,
                    cols,
                });
                blobs.push(bn.running_mean.clone());
                header.tensors.push(TensorMeta {
                    name: format!("bn{i}.running_var"),
                    rows: 1,
                    cols,
                });
                blobs.push(bn.running_var.clone());
            }
        }
        TrainedModel::Mlp { model, ranges } => {
            header.mlp = Some(MlpMeta {
                config: model.config.clone(),
                input_dim: model.input_dim,
                num_classes: model.num_classes,
                ranges: ranges.clone(),
            });
            let (metas, values) = store_tensors(model.store());
            header.tensors = metas;
            blobs.extend(values.iter().map(|t| t.values().to_vec()));
        }
        TrainedModel::Wl { model, iterations, table } => {
            header.wl = Some(WlMeta {
                linear: linear_meta(model),
                iterations: *iterations,
                table: table.clone(),
            });
            let (metas, values) = store_tensors(model.store());
            header.tensors = metas;
            blobs.extend(values.iter().map(|t| t.values().to_vec()));
        }
        TrainedModel::Feather { model, config } => {
            header.feather = Some(FeatherMeta {
                linear: linear_meta(model),
                config: config.clone(),
            });
            let (metas, values) = store_tensors(model.store());
            header.tensors = metas;
            blobs.extend(values.iter().map(|t| t.values().to_vec()));
        }
    }
    let header_bytes = serde_json::to_vec(&header)?;
    let mut file = fs::File::create(path)?;
    file.write_all(MAGIC)?;
    file.write_all(&VERSION.to_le_bytes())?;
    file.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    file.write_all(&header_bytes)?;
    let mut buf = Vec::new();
    for blob in &blobs {
        buf.clear();
        buf.reserve(blob.len() * 8);
        for v in blob {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        file.write_all(&buf)?;
    }
    file.flush()?;
    Ok(())
}

fn read_exact_vec(reader: &mut impl Read, len: usize) -> Result<Vec<u8>, CheckpointError> {
    let mut buf = vec![0u8; len];
    reader
        .read_exact(&mut buf)
        .map_err(|_| corrupt(format!("expected {len} more bytes")))?;
    Ok(buf)
}

fn read_blob(reader: &mut impl Read, meta: &TensorMeta) -> Result<Vec<f64>, CheckpointError> {
    let n = meta.rows * meta.cols;
    let bytes = read_exact_vec(reader, n * 8)
        .map_err(|_| corrupt(format!("tensor `{}` is truncated", meta.name)))?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

fn restore_store(
    store: &mut ParamStore,
    metas: &[TensorMeta],
    reader: &mut impl Read,
) -> Result<(), CheckpointError> {
    let ids: Vec<_> = store.ids().collect();
    if metas.len() < ids.len() {
        return Err(corrupt(format!(
            "header lists {} tensors but the model needs {}",
            metas.len(),
            ids.len()
        )));
    }
    for (id, meta) in ids.into_iter().zip(metas) {
        if store.name(id) != meta.name {
            return Err(corrupt(format!(
                "tensor `{}` does not match expected parameter `{}`",
                meta.name,
                store.name(id)
            )));
        }
        let value = store.value_mut(id);
        if value.shape() != (meta.rows, meta.cols) {
            return Err(corrupt(format!(
                "tensor `{}` has shape {}x{}, expected {}x{}",
                meta.name,
                meta.rows,
                meta.cols,
                value.rows(),
                value.cols()
            )));
        }
        let blob = read_blob(reader, meta)?;
        value.values_mut().copy_from_slice(&blob);
    }
    Ok(())
}

/// Loads a pipeline saved by [`save`].
pub fn load(path: &Path) -> Result<TrainedPipeline, CheckpointError> {
    let mut file = fs::File::open(path)?;
    let magic = read_exact_vec(&mut file, 4).map_err(|_| CheckpointError::BadMagic)?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version_bytes = read_exact_vec(&mut file, 4)?;
    let version = u32::from_le_bytes(version_bytes.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let len_bytes = read_exact_vec(&mut file, 8)?;
    let header_len = u64::from_le_bytes(len_bytes.try_into().expect("8 bytes")) as usize;
    let header_bytes = read_exact_vec(&mut file, header_len)?;
    let header: Header = serde_json::from_slice(&header_bytes)?;
    let model = match header.kind.as_str() {
        "gnn" => {
            let meta = header.gnn.ok_or_else(|| corrupt("missing gnn metadata"))?;
            let mut store = ParamStore::new();
            // Init draws are discarded immediately; any seed works.
            let mut rng = Rng::new(0);
            let mut model = GnnModel::new(
                meta.config,
                meta.input_dim,
                meta.num_classes,
                &mut store,
                &mut rng,
            )
            .map_err(|e| corrupt(format!("invalid stored config: {e}")))?;
            let n_params = store.ids().count();
            restore_store(&mut store, &header.tensors[..n_params], &mut file)?;
            let bn_metas = &header.tensors[n_params..];
            let expected_bn = model.bn_stats().len() * 2;
            if bn_metas.len() != expected_bn {
                return Err(corrupt(format!(
                    "expected {expected_bn} batch-norm tensors, found {}",
                    bn_metas.len()
                )));
            }
            for (i, pair) in bn_metas.chunks(2).enumerate() {
                let mean = read_blob(&mut file, &pair[0])?;
                let var = read_blob(&mut file, &pair[1])?;
                let slot = &mut model.bn_stats_mut()[i];
                if mean.len() != slot.running_mean.len() {
                    return Err(corrupt(format!("batch-norm tensor {i} has wrong width")));
                }
                *slot = BnStats { running_mean: mean, running_var: var };
            }
            TrainedModel::Gnn { model, store, stats: meta.stats }
        }
        "mlp" => {
            let meta = header.mlp.ok_or_else(|| corrupt("missing mlp metadata"))?;
            let mut rng = Rng::new(0);
            let mut model =
                MlpModel::new(meta.config, meta.input_dim, meta.num_classes, &mut rng)
                    .map_err(|e| corrupt(format!("invalid stored config: {e}")))?;
            restore_store(model.store_mut(), &header.tensors, &mut file)?;
            TrainedModel::Mlp { model, ranges: meta.ranges }
        }
        "wl" => {
            let meta = header.wl.ok_or_else(|| corrupt("missing wl metadata"))?;
            let mut model = LinearModel::shell(
                meta.linear.config,
                meta.linear.input_dim,
                meta.linear.num_classes,
            );
            model.epochs_run = meta.linear.epochs_run;
            restore_store(model.store_mut(), &header.tensors, &mut file)?;
            TrainedModel::Wl { model, iterations: meta.iterations, table: meta.table }
        }
        "feather" => {
            let meta = header.feather.ok_or_else(|| corrupt("missing feather metadata"))?;
            let mut model = LinearModel::shell(
                meta.linear.config,
                meta.linear.input_dim,
                meta.linear.num_classes,
            );
            model.epochs_run = meta.linear.epochs_run;
            restore_store(model.store_mut(), &header.tensors, &mut file)?;
            TrainedModel::Feather { model, config: meta.config }
        }
        other => return Err(corrupt(format!("unknown model kind `{other}`"))),
    };
    Ok(TrainedPipeline { class_names: header.class_names, model })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::BaselineKind;
    use crate::dataset::synth_families;
    use crate::gnn::model::Arch;
    use crate::pipeline::{train_pipeline, ModelSpec, RunSeeds};

    const SEEDS: RunSeeds = RunSeeds { split: 1, init: 2, dropout: 3 };

    fn train_quick(spec: &ModelSpec) -> crate::pipeline::PipelineResult {
        let set = synth_families(8, 77).unwrap();
        train_pipeline(&set, spec, (0.7, 0.1, 0.2), SEEDS).unwrap()
    }

    fn sage_spec() -> ModelSpec {
        ModelSpec::Gnn(ModelConfig {
            arch: Arch::Sage,
            num_layers: 2,
            hidden_dim: 8,
            learning_rate: 5e-3,
            weight_decay: 0.0,
            dropout_rate: 0.2,
            epochs: 3,
            batch_size: 8,
            seed: 0,
        })
    }

    #[test]
    fn gnn_checkpoint_round_trips_bit_exactly() {
        let set = synth_families(8, 77).unwrap();
        let result = train_quick(&sage_spec());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&result.pipeline, &path).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(loaded.class_names, result.pipeline.class_names);
        assert_eq!(
            loaded.predict(&set.graphs).unwrap(),
            result.pipeline.predict(&set.graphs).unwrap()
        );
        match (&loaded.model, &result.pipeline.model) {
            (
                TrainedModel::Gnn { store: a, model: ma, .. },
                TrainedModel::Gnn { store: b, model: mb, .. },
            ) => {
                for (x, y) in a.ids().zip(b.ids()) {
                    assert_eq!(a.value(x).values(), b.value(y).values());
                }
                for (s, t) in ma.bn_stats().iter().zip(mb.bn_stats()) {
                    assert_eq!(s.running_mean, t.running_mean);
                    assert_eq!(s.running_var, t.running_var);
                }
            }
            _ => panic!("kind changed through checkpoint"),
        }
    }

    #[test]
    fn baseline_checkpoints_round_trip() {
        let set = synth_families(8, 77).unwrap();
        let specs = [
            ModelSpec::Baseline(BaselineKind::Mlp(crate::baselines::MlpConfig {
                epochs: 3,
                ..Default::default()
            })),
            ModelSpec::Baseline(BaselineKind::Wl {
                iterations: 2,
                linear: LinearConfig::default(),
            }),
            ModelSpec::Baseline(BaselineKind::default_feather()),
        ];
        let dir = tempfile::tempdir().unwrap();
        for spec in &specs {
            let result = train_quick(spec);
            let path = dir.path().join(format!("{}.ckpt", spec.name()));
            save(&result.pipeline, &path).unwrap();
            let loaded = load(&path).unwrap();
            assert_eq!(
                loaded.predict(&set.graphs).unwrap(),
                result.pipeline.predict(&set.graphs).unwrap(),
                "{} predictions changed through checkpoint",
                spec.name()
            );
        }
    }

    #[test]
    fn saving_twice_is_byte_identical() {
        let result = train_quick(&sage_spec());
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        save(&result.pipeline, &p1).unwrap();
        save(&result.pipeline, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        fs::write(&path, b"NOPEnope").unwrap();
        assert!(matches!(load(&path).unwrap_err(), CheckpointError::BadMagic));
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let result = train_quick(&ModelSpec::Baseline(BaselineKind::default_feather()));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&result.pipeline, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        let cut = path.with_extension("cut");
        fs::write(&cut, &bytes[..bytes.len() - 16]).unwrap();
        assert!(matches!(load(&cut).unwrap_err(), CheckpointError::Corrupt { .. }));
    }

    #[test]
    fn future_version_is_rejected() {
        let result = train_quick(&ModelSpec::Baseline(BaselineKind::default_feather()));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&result.pipeline, &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[4..8].copy_from_slice(&99u32.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load(&path).unwrap_err(),
            CheckpointError::UnsupportedVersion(99)
        ));
    }

    #[test]
    fn wl_table_survives_round_trip_frozen() {
        let result = train_quick(&ModelSpec::Baseline(BaselineKind::Wl {
            iterations: 2,
            linear: LinearConfig::default(),
        }));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wl.ckpt");
        save(&result.pipeline, &path).unwrap();
        let loaded = load(&path).unwrap();
        match loaded.model {
            TrainedModel::Wl { table, iterations, .. } => {
                assert!(table.is_frozen());
                assert_eq!(iterations, 2);
                assert!(table.num_labels() > 0);
            }
            _ => panic!("kind changed"),
        }
    }
}
