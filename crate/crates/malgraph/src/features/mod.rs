//! Structural node and graph features.
//!
//! The core node descriptor is the local degree profile: for each node, its
//! own degree plus min/max/mean/std of its neighbors' degrees. On top of it
//! sit the inputs for every model family in the crate:
//!
//! * message-passing models consume standardized `log1p` degree profiles,
//! * the histogram baseline consumes per-channel density histograms,
//! * [`wl`] builds Weisfeiler-Lehman subtree counts and kernels,
//! * [`feather`] builds characteristic-function graph embeddings.

pub mod feather;
pub mod wl;

pub use feather::{feather_embed, FeatherConfig};
pub use wl::{
    wl_corpus, wl_feature_counts, wl_gram, wl_kernel, wl_node_labels, WlLabelTable, WL_UNKNOWN,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Graph;
use crate::numerics::Tensor2;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("{what} fitted for {expected} channels, input has {got}")]
    ChannelMismatch { what: &'static str, expected: usize, got: usize },
    #[error("cannot fit {what} on an empty corpus")]
    EmptyFit { what: &'static str },
}

/// Number of local-degree-profile channels: degree, neighbor-degree min,
/// max, mean, std.
pub const LDP_CHANNELS: usize = 5;

/// Default number of histogram bins per channel.
pub const HIST_BINS: usize = 32;

/// Local degree profile, one row per node, [`LDP_CHANNELS`] columns.
///
/// Isolated nodes get an all-zero row. Neighbor degrees are scanned in
/// ascending order so every statistic is a deterministic function of the
/// neighborhood multiset: relabeling nodes permutes rows bit-exactly.
pub fn ldp(g: &Graph) -> Tensor2 {
    let n = g.num_nodes();
    let mut out = Tensor2::zeros(n, LDP_CHANNELS);
    for v in 0..n {
        let nbrs = g.neighbors(v);
        if nbrs.is_empty() {
            continue;
        }
        let mut degs: Vec<f64> = nbrs.iter().map(|&u| g.degree(u) as f64).collect();
        degs.sort_by(f64::total_cmp);
        let k = degs.len() as f64;
        let mean = degs.iter().sum::<f64>() / k;
        let var = degs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / k;
        let row = out.row_mut(v);
        row[0] = k;
        row[1] = degs[0];
        row[2] = degs[degs.len() - 1];
        row[3] = mean;
        row[4] = var.max(0.0).sqrt();
    }
    out
}

/// Per-channel mean/std fitted on training features; channels with zero
/// variance keep a std of 1 so standardization is a no-op there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    /// Fits on the concatenated rows of `matrices` (population statistics).
    pub fn fit(matrices: &[Tensor2]) -> Result<Self, FeatureError> {
        let channels = match matrices.first() {
            Some(m) => m.cols(),
            None => return Err(FeatureError::EmptyFit { what: "channel stats" }),
        };
        let mut count = 0usize;
        let mut sum = vec![0.0; channels];
        let mut sumsq = vec![0.0; channels];
        for m in matrices {
            if m.cols() != channels {
                return Err(FeatureError::ChannelMismatch {
                    what: "channel stats",
                    expected: channels,
                    got: m.cols(),
                });
            }
            count += m.rows();
            for r in 0..m.rows() {
                for (c, &v) in m.row(r).iter().enumerate() {
                    sum[c] += v;
                    sumsq[c] += v * v;
                }
            }
        }
        if count == 0 {
            return Err(FeatureError::EmptyFit { what: "channel stats" });
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std: Vec<f64> = sumsq
            .iter()
            .zip(&mean)
            .map(|(sq, m)| {
                let var = (sq / n - m * m).max(0.0);
                let s = var.sqrt();
                if s == 0.0 { 1.0 } else { s }
            })
            .collect();
        Ok(ChannelStats { mean, std })
    }

    /// Standardizes `x` per channel: `(x - mean) / std`.
    pub fn apply(&self, x: &Tensor2) -> Result<Tensor2, FeatureError> {
        if x.cols() != self.mean.len() {
            return Err(FeatureError::ChannelMismatch {
                what: "channel stats",
                expected: self.mean.len(),
                got: x.cols(),
            });
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.mean[c]) / self.std[c];
            }
        }
        Ok(out)
    }
}

/// `log1p` of the local degree profile, the raw input for message-passing
/// models and characteristic-function embeddings.
pub fn log1p_ldp(g: &Graph) -> Tensor2 {
    ldp(g).map(f64::ln_1p)
}

/// Standardized `log1p` degree profile: the per-node input matrix for
/// message-passing models, using statistics fitted on the training split.
pub fn ldp_node_features(g: &Graph, stats: &ChannelStats) -> Result<Tensor2, FeatureError> {
    stats.apply(&log1p_ldp(g))
}

/// Per-channel value ranges fitted on raw training profiles; out-of-range
/// values at transform time clamp into the edge bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRanges {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl HistogramRanges {
    pub fn fit(matrices: &[Tensor2]) -> Result<Self, FeatureError> {
        let channels = match matrices.first() {
            Some(m) => m.cols(),
            None => return Err(FeatureError::EmptyFit { what: "histogram ranges" }),
        };
        let mut lo = vec![f64::INFINITY; channels];
        let mut hi = vec![f64::NEG_INFINITY; channels];
        let mut any = false;
        for m in matrices {
            if m.cols() != channels {
                return Err(FeatureError::ChannelMismatch {
                    what: "histogram ranges",
                    expected: channels,
                    got: m.cols(),
                });
            }
            for r in 0..m.rows() {
                any = true;
                for (c, &v) in m.row(r).iter().enumerate() {
                    lo[c] = lo[c].min(v);
                    hi[c] = hi[c].max(v);
                }
            }
        }
        if !any {
            return Err(FeatureError::EmptyFit { what: "histogram ranges" });
        }
        Ok(HistogramRanges { lo, hi })
    }
}

/// Flattens a node-feature matrix into per-channel density histograms
/// (channel-major, `bins` buckets each, every channel summing to 1).
///
/// A channel whose fitted range is degenerate puts all mass in bin 0.
pub fn graph_histogram(
    features: &Tensor2,
    ranges: &HistogramRanges,
    bins: usize,
) -> Result<Vec<f64>, FeatureError> {
    assert!(bins > 0, "histogram needs at least one bin");
    let channels = ranges.lo.len();
    if features.cols() != channels {
        return Err(FeatureError::ChannelMismatch {
            what: "histogram ranges",
            expected: channels,
            got: features.cols(),
        });
    }
    let mut out = vec![0.0; channels * bins];
    let n = features.rows();
    if n == 0 {
        return Ok(out);
    }
    for r in 0..n {
        for (c, &v) in features.row(r).iter().enumerate() {
            let span = ranges.hi[c] - ranges.lo[c];
            let bin = if span > 0.0 {
                let pos = (v - ranges.lo[c]) / span * bins as f64;
                (pos.floor() as i64).clamp(0, bins as i64 - 1) as usize
            } else {
                0
            };
            out[c * bins + bin] += 1.0;
        }
    }
    for v in &mut out {
        *v /= n as f64;
    }
    Ok(out)
}
