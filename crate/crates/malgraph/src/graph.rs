//! Immutable undirected graphs in compressed sparse row form.
//!
//! Function-call graphs arrive as directed edge lists; for classification we
//! work on the symmetrized simple graph: self-loops dropped, duplicates
//! merged, neighbor lists sorted. CSR keeps neighbor iteration allocation-free
//! and makes the structure cheap to share across threads.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("edge {index} ({u}, {v}) references a node outside 0..{num_nodes}")]
    EdgeOutOfRange { index: usize, u: usize, v: usize, num_nodes: usize },
    #[error("permutation of length {len} is not a bijection on 0..{num_nodes}")]
    InvalidPermutation { len: usize, num_nodes: usize },
}

/// Undirected simple graph. Node ids are dense `0..num_nodes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    num_nodes: usize,
    /// `row_offsets[v]..row_offsets[v+1]` indexes `col_indices` for node `v`.
    row_offsets: Vec<usize>,
    /// Sorted neighbor ids per node; every undirected edge appears twice.
    col_indices: Vec<usize>,
}

impl Graph {
    /// Builds a graph from an arbitrary edge list over `0..num_nodes`.
    ///
    /// Edges are symmetrized, self-loops dropped and duplicates merged, so
    /// the input may freely mix directions and repeats. An edge touching a
    /// node `>= num_nodes` is rejected with its position in the list.
    pub fn from_edge_list(edges: &[(usize, usize)], num_nodes: usize) -> Result<Self, GraphError> {
        let mut arcs = Vec::with_capacity(edges.len() * 2);
        for (index, &(u, v)) in edges.iter().enumerate() {
            if u >= num_nodes || v >= num_nodes {
                return Err(GraphError::EdgeOutOfRange { index, u, v, num_nodes });
            }
            if u != v {
                arcs.push((u, v));
                arcs.push((v, u));
            }
        }
        arcs.sort_unstable();
        arcs.dedup();
        let mut row_offsets = vec![0usize; num_nodes + 1];
        for &(u, _) in &arcs {
            row_offsets[u + 1] += 1;
        }
        for i in 0..num_nodes {
            row_offsets[i + 1] += row_offsets[i];
        }
        let col_indices = arcs.into_iter().map(|(_, v)| v).collect();
        Ok(Graph { num_nodes, row_offsets, col_indices })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.col_indices.len() / 2
    }

    /// Degree of `v`.
    ///
    /// Panics if `v >= num_nodes`; an out-of-range query is a caller bug.
    pub fn degree(&self, v: usize) -> usize {
        assert!(v < self.num_nodes, "node {v} out of range 0..{}", self.num_nodes);
        self.row_offsets[v + 1] - self.row_offsets[v]
    }

    /// Sorted neighbors of `v`. Panics if `v` is out of range.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        assert!(v < self.num_nodes, "node {v} out of range 0..{}", self.num_nodes);
        &self.col_indices[self.row_offsets[v]..self.row_offsets[v + 1]]
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    /// The edge set as `(u, v)` pairs with `u < v`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for u in 0..self.num_nodes {
            for &v in self.neighbors(u) {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    /// Relabels nodes: node `v` becomes `perm[v]`.
    ///
    /// `perm` must be a bijection on `0..num_nodes`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self, GraphError> {
        let n = self.num_nodes;
        let mut seen = vec![false; n];
        if perm.len() != n {
            return Err(GraphError::InvalidPermutation { len: perm.len(), num_nodes: n });
        }
        for &p in perm {
            if p >= n || seen[p] {
                return Err(GraphError::InvalidPermutation { len: perm.len(), num_nodes: n });
            }
            seen[p] = true;
        }
        let edges: Vec<(usize, usize)> =
            self.edges().into_iter().map(|(u, v)| (perm[u], perm[v])).collect();
        Graph::from_edge_list(&edges, n)
    }
}
