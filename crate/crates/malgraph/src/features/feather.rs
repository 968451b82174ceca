//! Characteristic-function graph embeddings from random-walk weights.
//!
//! For each feature channel, walk scale `r` and evaluation point `theta`,
//! the embedding holds the graph mean of the r-step random-walk expectation
//! of `cos(theta * x)` and `sin(theta * x)` over node values `x`. The walk
//! matrix is the row-normalized adjacency; isolated nodes fall back to the
//! identity row (the walk stays put), so every row remains stochastic.

use serde::{Deserialize, Serialize};

use crate::graph::Graph;
use crate::numerics::{sum_order_independent, Tensor2};

/// Evaluation grid for the characteristic function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatherConfig {
    /// Points `theta` where the characteristic function is sampled.
    pub eval_points: Vec<f64>,
    /// Number of walk scales; scale `r` uses the r-step walk matrix.
    pub scales: usize,
}

impl FeatherConfig {
    /// Sixteen evenly spaced points in (0, 5] and two walk scales.
    pub fn with_defaults() -> Self {
        FeatherConfig {
            eval_points: (1..=16).map(|j| 5.0 * j as f64 / 16.0).collect(),
            scales: 2,
        }
    }

    /// Embedding length for inputs with `channels` feature columns.
    pub fn embedding_dim(&self, channels: usize) -> usize {
        channels * self.scales * self.eval_points.len() * 2
    }
}

/// One step of the row-normalized walk, `out[u] = mean of x over N(u)`.
///
/// Neighbor contributions are summed in value order, so the result is
/// bit-identical under any relabeling of the graph.
fn walk_step(g: &Graph, x: &[f64]) -> Vec<f64> {
    (0..g.num_nodes())
        .map(|u| {
            let nbrs = g.neighbors(u);
            if nbrs.is_empty() {
                x[u]
            } else {
                let mut vals: Vec<f64> = nbrs.iter().map(|&v| x[v]).collect();
                sum_order_independent(&mut vals) / nbrs.len() as f64
            }
        })
        .collect()
}

fn graph_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut vals = values.to_vec();
    sum_order_independent(&mut vals) / values.len() as f64
}

/// Pooled characteristic-function embedding of one graph.
///
/// `node_values` must have one row per node; the layout of the result is
/// channel-major, then scale, then evaluation point, with the real part
/// before the imaginary part:
/// `index = ((channel * scales + (scale-1)) * points + point) * 2 + {0 re, 1 im}`.
pub fn feather_embed(g: &Graph, node_values: &Tensor2, cfg: &FeatherConfig) -> Vec<f64> {
    assert_eq!(
        node_values.rows(),
        g.num_nodes(),
        "node_values must have one row per node"
    );
    assert!(cfg.scales >= 1, "at least one walk scale required");
    assert!(!cfg.eval_points.is_empty(), "at least one evaluation point required");
    let n = g.num_nodes();
    let channels = node_values.cols();
    let points = cfg.eval_points.len();
    let mut out = vec![0.0; cfg.embedding_dim(channels)];
    if n == 0 {
        return out;
    }
    for c in 0..channels {
        let column: Vec<f64> = (0..n).map(|v| node_values.get(v, c)).collect();
        for (t, &theta) in cfg.eval_points.iter().enumerate() {
            let mut re: Vec<f64> = column.iter().map(|&x| (theta * x).cos()).collect();
            let mut im: Vec<f64> = column.iter().map(|&x| (theta * x).sin()).collect();
            for r in 1..=cfg.scales {
                re = walk_step(g, &re);
                im = walk_step(g, &im);
                let base = ((c * cfg.scales + (r - 1)) * points + t) * 2;
                out[base] = graph_mean(&re);
                out[base + 1] = graph_mean(&im);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_shape() {
        let cfg = FeatherConfig::with_defaults();
        assert_eq!(cfg.eval_points.len(), 16);
        assert!((cfg.eval_points[0] - 0.3125).abs() < 1e-15);
        assert!((cfg.eval_points[15] - 5.0).abs() < 1e-15);
        assert_eq!(cfg.scales, 2);
        assert_eq!(cfg.embedding_dim(5), 320);
    }

    #[test]
    fn single_node_is_its_own_characteristic_function() {
        let g = Graph::from_edge_list(&[], 1).unwrap();
        let x = Tensor2::from_rows(&[vec![0.5]]);
        let cfg = FeatherConfig { eval_points: vec![1.0], scales: 1 };
        let emb = feather_embed(&g, &x, &cfg);
        assert_eq!(emb.len(), 2);
        assert!((emb[0] - 0.5f64.cos()).abs() < 1e-15);
        assert!((emb[1] - 0.5f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn path_walk_matches_hand_computation() {
        // Path 0-1-2 with values [0, 1, 2] and theta = 1.
        // cos values [1, cos 1, cos 2]; one walk step gives
        // [cos 1, (1 + cos 2)/2, cos 1]; a second gives
        // [(1 + cos 2)/2, cos 1, (1 + cos 2)/2].
        let g = Graph::from_edge_list(&[(0, 1), (1, 2)], 3).unwrap();
        let x = Tensor2::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]);
        let cfg = FeatherConfig { eval_points: vec![1.0], scales: 2 };
        let emb = feather_embed(&g, &x, &cfg);
        assert_eq!(emb.len(), 4);
        let (c1, c2) = (1.0f64.cos(), 2.0f64.cos());
        let (s1, s2) = (1.0f64.sin(), 2.0f64.sin());
        let scale1_re = (2.0 * c1 + (1.0 + c2) / 2.0) / 3.0;
        let scale1_im = (2.0 * s1 + (0.0 + s2) / 2.0) / 3.0;
        let scale2_re = ((1.0 + c2) + c1) / 3.0;
        let scale2_im = ((0.0 + s2) + s1) / 3.0;
        assert!((emb[0] - scale1_re).abs() < 1e-12, "{} vs {scale1_re}", emb[0]);
        assert!((emb[1] - scale1_im).abs() < 1e-12);
        assert!((emb[2] - scale2_re).abs() < 1e-12);
        assert!((emb[3] - scale2_im).abs() < 1e-12);
    }

    #[test]
    fn layout_is_channel_major() {
        let g = Graph::from_edge_list(&[], 1).unwrap();
        let x = Tensor2::from_rows(&[vec![0.0, 2.0]]);
        let cfg = FeatherConfig { eval_points: vec![1.0], scales: 1 };
        let emb = feather_embed(&g, &x, &cfg);
        assert_eq!(emb.len(), 4);
        assert!((emb[0] - 1.0).abs() < 1e-15); // cos 0
        assert!(emb[1].abs() < 1e-15); // sin 0
        assert!((emb[2] - 2.0f64.cos()).abs() < 1e-15);
        assert!((emb[3] - 2.0f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn isolated_node_keeps_its_own_value() {
        // Edge 0-1 plus isolated node 2: the walk from 2 stays at 2.
        let g = Graph::from_edge_list(&[(0, 1)], 3).unwrap();
        let x = Tensor2::from_rows(&[vec![0.2], vec![0.9], vec![1.7]]);
        let cfg = FeatherConfig { eval_points: vec![1.0], scales: 1 };
        let emb = feather_embed(&g, &x, &cfg);
        let expected_re = (0.9f64.cos() + 0.2f64.cos() + 1.7f64.cos()) / 3.0;
        assert!((emb[0] - expected_re).abs() < 1e-12);
    }

    #[test]
    fn embedding_is_bit_exact_under_permutation() {
        let mut rng = crate::numerics::Rng::new(41);
        let cfg = FeatherConfig::with_defaults();
        for _ in 0..10 {
            let n = 14;
            let mut edges = Vec::new();
            for u in 0..n {
                for v in (u + 1)..n {
                    if rng.chance(0.25) {
                        edges.push((u, v));
                    }
                }
            }
            let g = Graph::from_edge_list(&edges, n).unwrap();
            let mut perm: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut perm);
            let gp = g.permute(&perm).unwrap();
            let x = crate::features::log1p_ldp(&g);
            let mut xp = Tensor2::zeros(n, x.cols());
            for v in 0..n {
                for c in 0..x.cols() {
                    xp.set(perm[v], c, x.get(v, c));
                }
            }
            let a = feather_embed(&g, &x, &cfg);
            let b = feather_embed(&gp, &xp, &cfg);
            assert_eq!(a, b, "embedding changed under relabeling");
        }
    }

    #[test]
    fn empty_graph_yields_zero_vector() {
        let g = Graph::from_edge_list(&[], 0).unwrap();
        let x = Tensor2::zeros(0, 3);
        let cfg = FeatherConfig { eval_points: vec![1.0, 2.0], scales: 2 };
        let emb = feather_embed(&g, &x, &cfg);
        assert_eq!(emb, vec![0.0; 3 * 2 * 2 * 2]);
    }
}
