//! Message-passing infrastructure: block-diagonal batching, sparse
//! neighborhood operators, readout pooling and layer aggregation.
//!
//! Every reduction over a neighborhood or a graph sums its operands in value
//! order (see [`sum_order_independent`]), which makes layer outputs
//! bit-exactly equivariant under node relabeling and batch assembly order.

pub mod layers;
pub mod model;

use std::sync::OnceLock;

use rayon::prelude::*;
use thiserror::Error;

use crate::graph::{Graph, GraphError};
use crate::numerics::{sum_order_independent, NumericsError, Tensor2};

#[derive(Debug, Error)]
pub enum GnnError {
    #[error("batch has {graphs} graphs but {features} feature matrices")]
    BatchLengthMismatch { graphs: usize, features: usize },
    #[error("feature matrix {index} has {got} columns, expected {expected}")]
    FeatureWidth { index: usize, expected: usize, got: usize },
    #[error("feature matrix {index} has {got} rows for a graph with {nodes} nodes")]
    FeatureRows { index: usize, nodes: usize, got: usize },
    #[error("cannot batch zero graphs")]
    EmptyBatch,
    #[error("graph {index} in batch has no nodes")]
    EmptyGraphInBatch { index: usize },
    #[error("jumping-knowledge inputs disagree on row count: {expected} vs {got}")]
    JkRowMismatch { expected: usize, got: usize },
    #[error("invalid model config: {reason}")]
    InvalidConfig { reason: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Several graphs merged into one block-diagonal graph.
#[derive(Debug)]
pub struct BatchedGraph {
    pub graph: Graph,
    /// Per-node index of the member graph; non-decreasing.
    pub graph_id: Vec<usize>,
    pub num_graphs: usize,
    norm_adj: OnceLock<SparseOp>,
}

impl BatchedGraph {
    /// Wraps a single graph as a one-member batch.
    pub fn single(graph: Graph) -> Result<Self, GnnError> {
        if graph.num_nodes() == 0 {
            return Err(GnnError::EmptyGraphInBatch { index: 0 });
        }
        let graph_id = vec![0; graph.num_nodes()];
        Ok(BatchedGraph { graph, graph_id, num_graphs: 1, norm_adj: OnceLock::new() })
    }

    /// Number of nodes per member graph.
    pub fn node_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_graphs];
        for &g in &self.graph_id {
            counts[g] += 1;
        }
        counts
    }

    /// Cached self-loop symmetric-normalized adjacency of the merged graph.
    pub fn norm_adj(&self) -> &SparseOp {
        self.norm_adj.get_or_init(|| normalized_adjacency(&self.graph))
    }
}

/// Merges `graphs` into a block-diagonal [`BatchedGraph`] and stacks the
/// matching feature matrices in the same node order.
pub fn batch(
    graphs: &[&Graph],
    features: &[&Tensor2],
) -> Result<(BatchedGraph, Tensor2), GnnError> {
    if graphs.len() != features.len() {
        return Err(GnnError::BatchLengthMismatch {
            graphs: graphs.len(),
            features: features.len(),
        });
    }
    if graphs.is_empty() {
        return Err(GnnError::EmptyBatch);
    }
    let width = features[0].cols();
    let mut total_nodes = 0usize;
    for (i, (g, &f)) in graphs.iter().zip(features).enumerate() {
        if g.num_nodes() == 0 {
            return Err(GnnError::EmptyGraphInBatch { index: i });
        }
        if f.cols() != width {
            return Err(GnnError::FeatureWidth { index: i, expected: width, got: f.cols() });
        }
        if f.rows() != g.num_nodes() {
            return Err(GnnError::FeatureRows {
                index: i,
                nodes: g.num_nodes(),
                got: f.rows(),
            });
        }
        total_nodes += g.num_nodes();
    }
    let mut edges = Vec::new();
    let mut graph_id = Vec::with_capacity(total_nodes);
    let mut offset = 0usize;
    for (i, g) in graphs.iter().enumerate() {
        edges.extend(g.edges().into_iter().map(|(u, v)| (u + offset, v + offset)));
        graph_id.extend(std::iter::repeat(i).take(g.num_nodes()));
        offset += g.num_nodes();
    }
    let merged = Graph::from_edge_list(&edges, total_nodes)?;
    let stacked = Tensor2::vstack(features);
    Ok((
        BatchedGraph {
            graph: merged,
            graph_id,
            num_graphs: graphs.len(),
            norm_adj: OnceLock::new(),
        },
        stacked,
    ))
}

/// Sparse square operator in CSR form, multiply-capable against dense
/// node-feature matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOp {
    dim: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    weights: Vec<f64>,
}

const PAR_SPMM_THRESHOLD: usize = 1 << 14;

impl SparseOp {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    /// Entry (i, j), zero when absent.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.row_offsets[i];
        let hi = self.row_offsets[i + 1];
        match self.col_indices[lo..hi].binary_search(&j) {
            Ok(k) => self.weights[lo + k],
            Err(_) => 0.0,
        }
    }

    /// Dense product `self * x`.
    ///
    /// Each output entry sums its terms in value order, so results do not
    /// depend on column ordering within rows; parallel and serial paths are
    /// bit-identical.
    pub fn matmul(&self, x: &Tensor2) -> Tensor2 {
        assert_eq!(
            self.dim,
            x.rows(),
            "sparse matmul dimension mismatch: {} vs {} rows",
            self.dim,
            x.rows()
        );
        let cols = x.cols();
        let mut out = Tensor2::zeros(self.dim, cols);
        if cols == 0 {
            return out;
        }
        let fill_row = |i: usize, out_row: &mut [f64], scratch: &mut (Vec<f64>, Vec<f64>)| {
            let (stage, buf) = scratch;
            let lo = self.row_offsets[i];
            let hi = self.row_offsets[i + 1];
            match hi - lo {
                0 => {}
                1 => {
                    let w = self.weights[lo];
                    for (o, &v) in out_row.iter_mut().zip(x.row(self.col_indices[lo])) {
                        *o = w * v;
                    }
                }
                // Two-term sums are order-independent without sorting.
                2 => {
                    let w0 = self.weights[lo];
                    let w1 = self.weights[lo + 1];
                    let r0 = x.row(self.col_indices[lo]);
                    let r1 = x.row(self.col_indices[lo + 1]);
                    for ((o, &a), &b) in out_row.iter_mut().zip(r0).zip(r1) {
                        *o = w0 * a + w1 * b;
                    }
                }
                // Stage the weighted neighbor rows contiguously, then reduce
                // each column in value order.
                deg => {
                    stage.clear();
                    for k in lo..hi {
                        let w = self.weights[k];
                        stage.extend(x.row(self.col_indices[k]).iter().map(|&v| w * v));
                    }
                    for (c, slot) in out_row.iter_mut().enumerate() {
                        buf.clear();
                        buf.extend((0..deg).map(|j| stage[j * cols + c]));
                        *slot = sum_order_independent(buf);
                    }
                }
            }
        };
        if self.nnz() * cols >= PAR_SPMM_THRESHOLD {
            out.values_mut()
                .par_chunks_mut(cols)
                .enumerate()
                .for_each_init(
                    || (Vec::new(), Vec::new()),
                    |scratch, (i, row)| fill_row(i, row, scratch),
                );
        } else {
            let mut scratch = (Vec::new(), Vec::new());
            for (i, row) in out.values_mut().chunks_mut(cols).enumerate() {
                fill_row(i, row, &mut scratch);
            }
        }
        out
    }

    /// Transposed operator (needed to backpropagate through non-symmetric
    /// operators such as row-normalized mean aggregation).
    pub fn transpose(&self) -> SparseOp {
        let mut counts = vec![0usize; self.dim];
        for &j in &self.col_indices {
            counts[j] += 1;
        }
        let mut row_offsets = vec![0usize; self.dim + 1];
        for i in 0..self.dim {
            row_offsets[i + 1] = row_offsets[i] + counts[i];
        }
        let mut col_indices = vec![0usize; self.nnz()];
        let mut weights = vec![0.0; self.nnz()];
        let mut cursor = row_offsets.clone();
        for i in 0..self.dim {
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                let j = self.col_indices[k];
                col_indices[cursor[j]] = i;
                weights[cursor[j]] = self.weights[k];
                cursor[j] += 1;
            }
        }
        // Source rows are scanned in ascending i, so each output row is
        // already sorted by column.
        SparseOp { dim: self.dim, row_offsets, col_indices, weights }
    }
}

/// Self-loop symmetric normalization `D^{-1/2} (A + I) D^{-1/2}` where the
/// degrees include the added self-loops.
pub fn normalized_adjacency(g: &Graph) -> SparseOp {
    let n = g.num_nodes();
    let dt: Vec<f64> = (0..n).map(|v| g.degree(v) as f64 + 1.0).collect();
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::new();
    let mut weights = Vec::new();
    row_offsets.push(0);
    for v in 0..n {
        let mut self_inserted = false;
        for &u in g.neighbors(v) {
            if !self_inserted && u > v {
                col_indices.push(v);
                weights.push(1.0 / dt[v]);
                self_inserted = true;
            }
            col_indices.push(u);
            weights.push(1.0 / (dt[v] * dt[u]).sqrt());
        }
        if !self_inserted {
            col_indices.push(v);
            weights.push(1.0 / dt[v]);
        }
        row_offsets.push(col_indices.len());
    }
    SparseOp { dim: n, row_offsets, col_indices, weights }
}

/// Row-normalized adjacency: row v averages over N(v); isolated nodes get an
/// empty row, so their aggregated message is the zero vector.
pub fn mean_aggregation(g: &Graph) -> SparseOp {
    let n = g.num_nodes();
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::new();
    let mut weights = Vec::new();
    row_offsets.push(0);
    for v in 0..n {
        let nbrs = g.neighbors(v);
        let w = if nbrs.is_empty() { 0.0 } else { 1.0 / nbrs.len() as f64 };
        for &u in nbrs {
            col_indices.push(u);
            weights.push(w);
        }
        row_offsets.push(col_indices.len());
    }
    SparseOp { dim: n, row_offsets, col_indices, weights }
}

/// Plain adjacency: row v sums over N(v) with unit weights (symmetric).
pub fn sum_adjacency(g: &Graph) -> SparseOp {
    let n = g.num_nodes();
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::new();
    row_offsets.push(0);
    for v in 0..n {
        col_indices.extend_from_slice(g.neighbors(v));
        row_offsets.push(col_indices.len());
    }
    let weights = vec![1.0; col_indices.len()];
    SparseOp { dim: n, row_offsets, col_indices, weights }
}

/// Graph-level readout: row g is the mean of the node rows with
/// `graph_id = g`, summed in value order.
pub fn global_mean_pool(
    h: &Tensor2,
    graph_id: &[usize],
    num_graphs: usize,
) -> Result<Tensor2, GnnError> {
    assert_eq!(h.rows(), graph_id.len(), "one graph id per node row");
    let mut counts = vec![0usize; num_graphs];
    for &g in graph_id {
        assert!(g < num_graphs, "graph id {g} out of range");
        counts[g] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(GnnError::EmptyGraphInBatch { index: empty });
    }
    let cols = h.cols();
    let mut out = Tensor2::zeros(num_graphs, cols);
    // Bucket node rows by graph (ascending within each bucket) so every
    // reduction touches only its own members.
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_graphs];
    for (v, &g) in graph_id.iter().enumerate() {
        members[g].push(v);
    }
    let mut buf = Vec::new();
    for (g, rows) in members.iter().enumerate() {
        for c in 0..cols {
            buf.clear();
            buf.extend(rows.iter().map(|&v| h.get(v, c)));
            out.set(g, c, sum_order_independent(&mut buf) / counts[g] as f64);
        }
    }
    Ok(out)
}

/// Backward of [`global_mean_pool`]: spread each pooled gradient row evenly
/// over its member nodes.
pub fn global_mean_pool_backward(
    dpooled: &Tensor2,
    graph_id: &[usize],
    counts: &[usize],
) -> Tensor2 {
    let mut dnodes = Tensor2::zeros(graph_id.len(), dpooled.cols());
    for (v, &g) in graph_id.iter().enumerate() {
        let scale = 1.0 / counts[g] as f64;
        let src = dpooled.row(g);
        let dst = dnodes.row_mut(v);
        for (d, s) in dst.iter_mut().zip(src) {
            *d = s * scale;
        }
    }
    dnodes
}

/// Column-wise concatenation of per-layer node representations.
pub fn jk_concat(per_layer: &[&Tensor2]) -> Result<Tensor2, GnnError> {
    assert!(!per_layer.is_empty(), "jk_concat needs at least one layer output");
    let rows = per_layer[0].rows();
    for m in per_layer {
        if m.rows() != rows {
            return Err(GnnError::JkRowMismatch { expected: rows, got: m.rows() });
        }
    }
    Ok(Tensor2::hconcat(per_layer))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p3() -> Graph {
        Graph::from_edge_list(&[(0, 1), (1, 2)], 3).unwrap()
    }

    fn triangle() -> Graph {
        Graph::from_edge_list(&[(0, 1), (1, 2), (2, 0)], 3).unwrap()
    }

    #[test]
    fn batch_of_two_paths() {
        let a = p3();
        let f = Tensor2::filled(3, 2, 1.0);
        let (b, x) = batch(&[&a, &a], &[&f, &f]).unwrap();
        assert_eq!(b.graph.num_nodes(), 6);
        assert_eq!(b.graph.num_edges(), 4);
        assert_eq!(b.graph_id, vec![0, 0, 0, 1, 1, 1]);
        assert_eq!(b.num_graphs, 2);
        assert_eq!(x.shape(), (6, 2));
        // No cross-graph edges.
        for (u, v) in b.graph.edges() {
            assert_eq!(b.graph_id[u], b.graph_id[v]);
        }
    }

    #[test]
    fn batch_of_single_graph_is_identity() {
        let g = triangle();
        let f = Tensor2::filled(3, 1, 0.5);
        let (b, x) = batch(&[&g], &[&f]).unwrap();
        assert_eq!(b.graph.edges(), g.edges());
        assert_eq!(x.values(), f.values());
        assert_eq!(b.num_graphs, 1);
    }

    #[test]
    fn batch_of_32_triangles() {
        let graphs: Vec<Graph> = (0..32).map(|_| triangle()).collect();
        let refs: Vec<&Graph> = graphs.iter().collect();
        let feats: Vec<Tensor2> = (0..32).map(|_| Tensor2::filled(3, 1, 1.0)).collect();
        let (b, _) = batch(&refs, &feats.iter().collect::<Vec<_>>()).unwrap();
        assert_eq!(b.graph.num_nodes(), 96);
        assert_eq!(b.graph.num_edges(), 96);
        assert_eq!(b.node_counts(), vec![3; 32]);
    }

    #[test]
    fn batch_validates_inputs() {
        let g = p3();
        let f = Tensor2::zeros(3, 2);
        assert!(matches!(
            batch(&[&g], &[]).unwrap_err(),
            GnnError::BatchLengthMismatch { .. }
        ));
        assert!(matches!(
            batch(&[&g, &g], &[&f, &Tensor2::zeros(3, 5)]).unwrap_err(),
            GnnError::FeatureWidth { index: 1, .. }
        ));
        assert!(matches!(
            batch(&[&g], &[&Tensor2::zeros(7, 2)]).unwrap_err(),
            GnnError::FeatureRows { .. }
        ));
        let empty = Graph::from_edge_list(&[], 0).unwrap();
        assert!(matches!(
            batch(&[&empty], &[&Tensor2::zeros(0, 2)]).unwrap_err(),
            GnnError::EmptyGraphInBatch { index: 0 }
        ));
    }

    #[test]
    fn normalized_adjacency_isolated_node_is_identity() {
        let g = Graph::from_edge_list(&[], 1).unwrap();
        let a = normalized_adjacency(&g);
        assert_eq!(a.get(0, 0), 1.0);
        assert_eq!(a.nnz(), 1);
    }

    #[test]
    fn normalized_adjacency_edge_pair_is_half_everywhere() {
        let g = Graph::from_edge_list(&[(0, 1)], 2).unwrap();
        let a = normalized_adjacency(&g);
        for i in 0..2 {
            for j in 0..2 {
                assert!((a.get(i, j) - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn normalized_adjacency_path_entry() {
        let a = normalized_adjacency(&p3());
        // Self-loop degrees are 2, 3, 2.
        assert!((a.get(0, 1) - 1.0 / 6.0f64.sqrt()).abs() < 1e-15);
        assert!((a.get(1, 0) - 1.0 / 6.0f64.sqrt()).abs() < 1e-15);
        assert!((a.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((a.get(1, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(a.get(0, 2), 0.0);
    }

    #[test]
    fn normalized_adjacency_rows_sum_to_at_most_one() {
        // Each row of the normalized operator on a regular graph sums to 1.
        let a = normalized_adjacency(&triangle());
        for i in 0..3 {
            let s: f64 = (0..3).map(|j| a.get(i, j)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_aggregation_averages_neighbors() {
        let m = mean_aggregation(&p3());
        let x = Tensor2::from_rows(&[vec![2.0], vec![4.0], vec![8.0]]);
        let y = m.matmul(&x);
        assert_eq!(y.row(0), &[4.0]);
        assert_eq!(y.row(1), &[5.0]);
        assert_eq!(y.row(2), &[4.0]);
    }

    #[test]
    fn mean_aggregation_isolated_row_is_zero() {
        let g = Graph::from_edge_list(&[(0, 1)], 3).unwrap();
        let m = mean_aggregation(&g);
        let x = Tensor2::filled(3, 2, 7.0);
        let y = m.matmul(&x);
        assert_eq!(y.row(2), &[0.0, 0.0]);
    }

    #[test]
    fn sum_adjacency_counts_neighbors() {
        let s = sum_adjacency(&triangle());
        let x = Tensor2::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]);
        let y = s.matmul(&x);
        assert_eq!(y.row(0), &[5.0]);
        assert_eq!(y.row(1), &[4.0]);
        assert_eq!(y.row(2), &[3.0]);
    }

    #[test]
    fn transpose_round_trips_and_matches_dense() {
        let g = Graph::from_edge_list(&[(0, 1), (1, 2), (1, 3)], 4).unwrap();
        let m = mean_aggregation(&g);
        let t = m.transpose();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m.get(i, j), t.get(j, i));
            }
        }
        assert_eq!(t.transpose(), m);
    }

    #[test]
    fn mean_aggregation_transpose_is_adjoint() {
        // <Mx, y> == <x, M^T y> for random vectors.
        let mut rng = crate::numerics::Rng::new(7);
        let g = Graph::from_edge_list(&[(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)], 4).unwrap();
        let m = mean_aggregation(&g);
        let t = m.transpose();
        let x = Tensor2::from_vec(4, 1, (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect());
        let y = Tensor2::from_vec(4, 1, (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect());
        let lhs: f64 = m.matmul(&x).values().iter().zip(y.values()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.values().iter().zip(t.matmul(&y).values()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn pool_single_graph_means_rows() {
        let h = Tensor2::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let p = global_mean_pool(&h, &[0, 0], 1).unwrap();
        assert_eq!(p.row(0), &[2.0, 3.0]);
    }

    #[test]
    fn pool_singletons_pass_through() {
        let h = Tensor2::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let p = global_mean_pool(&h, &[0, 1], 2).unwrap();
        assert_eq!(p.values(), h.values());
    }

    #[test]
    fn pool_rejects_empty_graph() {
        let h = Tensor2::zeros(2, 1);
        assert!(matches!(
            global_mean_pool(&h, &[0, 0], 2).unwrap_err(),
            GnnError::EmptyGraphInBatch { index: 1 }
        ));
    }

    #[test]
    fn pool_is_invariant_to_row_order_within_graph() {
        let h = Tensor2::from_rows(&[vec![0.1], vec![0.7], vec![0.3]]);
        let hp = Tensor2::from_rows(&[vec![0.7], vec![0.3], vec![0.1]]);
        let a = global_mean_pool(&h, &[0, 0, 0], 1).unwrap();
        let b = global_mean_pool(&hp, &[0, 0, 0], 1).unwrap();
        assert_eq!(a.values(), b.values(), "pooling must ignore node order");
    }

    #[test]
    fn pool_backward_spreads_gradient() {
        let dp = Tensor2::from_rows(&[vec![3.0], vec![10.0]]);
        let d = global_mean_pool_backward(&dp, &[0, 0, 0, 1], &[3, 1]);
        assert_eq!(d.row(0), &[1.0]);
        assert_eq!(d.row(2), &[1.0]);
        assert_eq!(d.row(3), &[10.0]);
    }

    #[test]
    fn jk_concat_widths_add_up() {
        let a = Tensor2::filled(4, 3, 1.0);
        let b = Tensor2::filled(4, 5, 2.0);
        let c = jk_concat(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), (4, 8));
        assert_eq!(c.get(0, 2), 1.0);
        assert_eq!(c.get(0, 3), 2.0);
        let single = jk_concat(&[&a]).unwrap();
        assert_eq!(single.values(), a.values());
        assert!(matches!(
            jk_concat(&[&a, &Tensor2::zeros(3, 2)]).unwrap_err(),
            GnnError::JkRowMismatch { expected: 4, got: 3 }
        ));
    }

    #[test]
    fn norm_adj_cache_returns_same_operator() {
        let b = BatchedGraph::single(p3()).unwrap();
        let first = b.norm_adj() as *const SparseOp;
        let second = b.norm_adj() as *const SparseOp;
        assert_eq!(first, second);
    }

    #[test]
    fn sparse_matmul_parallel_matches_serial_threshold_crossing() {
        // Same operator applied to a wide and a narrow matrix; results on the
        // shared columns must be bit-identical even though one path runs
        // under rayon and the other serially.
        let set = crate::dataset::synth_families(2, 13).unwrap();
        let g = &set.graphs[0];
        let a = normalized_adjacency(g);
        let n = g.num_nodes();
        let mut rng = crate::numerics::Rng::new(3);
        let wide_vals: Vec<f64> =
            (0..n * 600).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let wide = Tensor2::from_vec(n, 600, wide_vals);
        let narrow = Tensor2::from_vec(
            n,
            1,
            (0..n).map(|v| wide.get(v, 0)).collect(),
        );
        assert!(a.nnz() * 600 >= PAR_SPMM_THRESHOLD);
        assert!(a.nnz() < PAR_SPMM_THRESHOLD);
        let yw = a.matmul(&wide);
        let yn = a.matmul(&narrow);
        for v in 0..n {
            assert_eq!(yw.get(v, 0), yn.get(v, 0));
        }
    }

    #[test]
    fn sparse_matmul_is_equivariant_bit_exactly() {
        let mut rng = crate::numerics::Rng::new(29);
        for _ in 0..20 {
            let n = 16;
            let mut edges = Vec::new();
            for u in 0..n {
                for v in (u + 1)..n {
                    if rng.chance(0.3) {
                        edges.push((u, v));
                    }
                }
            }
            let g = Graph::from_edge_list(&edges, n).unwrap();
            let mut perm: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut perm);
            let gp = g.permute(&perm).unwrap();
            let x = Tensor2::from_vec(
                n,
                3,
                (0..n * 3).map(|_| rng.uniform(-2.0, 2.0)).collect(),
            );
            let mut xp = Tensor2::zeros(n, 3);
            for v in 0..n {
                for c in 0..3 {
                    xp.set(perm[v], c, x.get(v, c));
                }
            }
            for (op, opp) in [
                (normalized_adjacency(&g), normalized_adjacency(&gp)),
                (mean_aggregation(&g), mean_aggregation(&gp)),
                (sum_adjacency(&g), sum_adjacency(&gp)),
            ] {
                let y = op.matmul(&x);
                let yp = opp.matmul(&xp);
                for v in 0..n {
                    assert_eq!(y.row(v), yp.row(perm[v]), "operator not equivariant");
                }
            }
        }
    }
}
