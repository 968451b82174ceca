//! Weisfeiler-Lehman subtree features and the induced graph kernel.
//!
//! Nodes start from their degree, then each refinement round hashes
//! `(own label, sorted neighbor labels)` into a compressed label drawn from
//! a table shared across the whole corpus. Ids are assigned in first-
//! encounter order from a single counter spanning all rounds, so a label id
//! alone identifies both the round and the subtree pattern. After fitting,
//! the table can be frozen: unseen patterns then map to [`WL_UNKNOWN`] and
//! contribute nothing to features or kernel values.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::graph::Graph;
use crate::numerics::Tensor2;

/// Label returned by a frozen table for patterns never seen during fitting.
pub const WL_UNKNOWN: u32 = u32::MAX;

/// Corpus-wide compressed-label table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "WlTableData", into = "WlTableData")]
pub struct WlLabelTable {
    frozen: bool,
    next_id: u32,
    degree_ids: HashMap<u64, u32>,
    /// One map per refinement round (round 1 at index 0).
    refine_ids: Vec<HashMap<(u32, Vec<u32>), u32>>,
}

impl WlLabelTable {
    pub fn new() -> Self {
        WlLabelTable {
            frozen: false,
            next_id: 0,
            degree_ids: HashMap::new(),
            refine_ids: Vec::new(),
        }
    }

    /// Stops id assignment; unseen patterns map to [`WL_UNKNOWN`] afterwards.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Total number of distinct labels across all rounds.
    pub fn num_labels(&self) -> u32 {
        self.next_id
    }

    fn label_for_degree(&mut self, degree: u64) -> u32 {
        if let Some(&id) = self.degree_ids.get(&degree) {
            return id;
        }
        if self.frozen {
            return WL_UNKNOWN;
        }
        let id = self.next_id;
        self.next_id += 1;
        self.degree_ids.insert(degree, id);
        id
    }

    fn label_for_refinement(&mut self, round: usize, sig: (u32, Vec<u32>)) -> u32 {
        debug_assert!(round >= 1);
        if sig.0 == WL_UNKNOWN || sig.1.contains(&WL_UNKNOWN) {
            return WL_UNKNOWN;
        }
        while self.refine_ids.len() < round {
            self.refine_ids.push(HashMap::new());
        }
        let map = &mut self.refine_ids[round - 1];
        if let Some(&id) = map.get(&sig) {
            return id;
        }
        if self.frozen {
            return WL_UNKNOWN;
        }
        let id = self.next_id;
        self.next_id += 1;
        map.insert(sig, id);
        id
    }
}

impl Default for WlLabelTable {
    fn default() -> Self {
        Self::new()
    }
}

/// Serialized form: entry lists sorted by id, which reflects first-encounter
/// order and keeps the encoding canonical.
#[derive(Serialize, Deserialize, Clone)]
struct WlTableData {
    frozen: bool,
    next_id: u32,
    degrees: Vec<(u64, u32)>,
    refinements: Vec<Vec<(u32, Vec<u32>, u32)>>,
}

impl From<WlLabelTable> for WlTableData {
    fn from(t: WlLabelTable) -> Self {
        let mut degrees: Vec<(u64, u32)> = t.degree_ids.into_iter().collect();
        degrees.sort_by_key(|&(_, id)| id);
        let refinements = t
            .refine_ids
            .into_iter()
            .map(|m| {
                let mut entries: Vec<(u32, Vec<u32>, u32)> =
                    m.into_iter().map(|((own, nbrs), id)| (own, nbrs, id)).collect();
                entries.sort_by_key(|&(_, _, id)| id);
                entries
            })
            .collect();
        WlTableData { frozen: t.frozen, next_id: t.next_id, degrees, refinements }
    }
}

impl From<WlTableData> for WlLabelTable {
    fn from(d: WlTableData) -> Self {
        WlLabelTable {
            frozen: d.frozen,
            next_id: d.next_id,
            degree_ids: d.degrees.into_iter().collect(),
            refine_ids: d
                .refinements
                .into_iter()
                .map(|entries| {
                    entries.into_iter().map(|(own, nbrs, id)| ((own, nbrs), id)).collect()
                })
                .collect(),
        }
    }
}

/// Node labels for rounds `0..=rounds`, in order; round 0 is the degree
/// label. Unseen patterns under a frozen table come back as [`WL_UNKNOWN`].
pub fn wl_node_labels(g: &Graph, rounds: usize, table: &mut WlLabelTable) -> Vec<Vec<u32>> {
    let n = g.num_nodes();
    let mut all = Vec::with_capacity(rounds + 1);
    let mut current: Vec<u32> =
        (0..n).map(|v| table.label_for_degree(g.degree(v) as u64)).collect();
    all.push(current.clone());
    for round in 1..=rounds {
        let next: Vec<u32> = (0..n)
            .map(|v| {
                let mut nbr_labels: Vec<u32> =
                    g.neighbors(v).iter().map(|&u| current[u]).collect();
                nbr_labels.sort_unstable();
                table.label_for_refinement(round, (current[v], nbr_labels))
            })
            .collect();
        all.push(next.clone());
        current = next;
    }
    all
}

/// Subtree-pattern counts for one graph: label id -> multiplicity, summed
/// over all rounds. [`WL_UNKNOWN`] labels are dropped.
pub fn wl_feature_counts(
    g: &Graph,
    rounds: usize,
    table: &mut WlLabelTable,
) -> BTreeMap<u32, f64> {
    let mut counts = BTreeMap::new();
    for labels in wl_node_labels(g, rounds, table) {
        for label in labels {
            if label != WL_UNKNOWN {
                *counts.entry(label).or_insert(0.0) += 1.0;
            }
        }
    }
    counts
}

/// Fits a shared table over `graphs` in order and returns their counts plus
/// the table (not yet frozen, so the caller decides when to freeze).
pub fn wl_corpus(
    graphs: &[&Graph],
    rounds: usize,
) -> (Vec<BTreeMap<u32, f64>>, WlLabelTable) {
    let mut table = WlLabelTable::new();
    let counts = graphs
        .iter()
        .map(|g| wl_feature_counts(g, rounds, &mut table))
        .collect();
    (counts, table)
}

/// Kernel value: dot product of two sparse count vectors.
pub fn wl_kernel(a: &BTreeMap<u32, f64>, b: &BTreeMap<u32, f64>) -> f64 {
    // Walk the smaller map, probe the larger.
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small
        .iter()
        .filter_map(|(label, &ca)| large.get(label).map(|&cb| ca * cb))
        .sum()
}

/// Gram matrix over a corpus of count vectors; exactly symmetric because
/// each off-diagonal entry is computed once and mirrored.
pub fn wl_gram(counts: &[BTreeMap<u32, f64>]) -> Tensor2 {
    let n = counts.len();
    let mut gram = Tensor2::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let k = wl_kernel(&counts[i], &counts[j]);
            gram.set(i, j, k);
            gram.set(j, i, k);
        }
    }
    gram
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Graph {
        Graph::from_edge_list(&[(0, 1), (1, 2)], 3).unwrap()
    }

    fn triangle() -> Graph {
        Graph::from_edge_list(&[(0, 1), (1, 2), (2, 0)], 3).unwrap()
    }

    #[test]
    fn path_and_triangle_one_round_kernel_is_three() {
        // Hand derivation. Degrees: path {1,2,1}, triangle {2,2,2}.
        // First encounter: deg1 -> 0, deg2 -> 1.
        // Round 1 signatures: path ends (0,[1]) -> 2, path middle (1,[0,0]) -> 3,
        // triangle nodes (1,[1,1]) -> 4.
        // Counts: path {0:2, 1:1, 2:2, 3:1}, triangle {1:3, 4:3}.
        // Shared label is only 1: kernel = 1 * 3 = 3.
        let p = path3();
        let t = triangle();
        let (counts, table) = wl_corpus(&[&p, &t], 1);
        assert_eq!(table.num_labels(), 5);
        assert_eq!(wl_kernel(&counts[0], &counts[1]), 3.0);
        // Self-kernels from the same derivation.
        assert_eq!(wl_kernel(&counts[0], &counts[0]), 4.0 + 1.0 + 4.0 + 1.0);
        assert_eq!(wl_kernel(&counts[1], &counts[1]), 9.0 + 9.0);
    }

    #[test]
    fn first_encounter_assigns_dense_ids() {
        let p = path3();
        let mut table = WlLabelTable::new();
        let labels = wl_node_labels(&p, 0, &mut table);
        assert_eq!(labels, vec![vec![0, 1, 0]]);
        assert_eq!(table.num_labels(), 2);
    }

    #[test]
    fn frozen_table_maps_unseen_patterns_to_unknown() {
        let p = path3();
        let (_, mut table) = wl_corpus(&[&p], 1);
        table.freeze();
        // Star center has degree 3, never seen.
        let star = Graph::from_edge_list(&[(0, 1), (0, 2), (0, 3)], 4).unwrap();
        let labels = wl_node_labels(&star, 1, &mut table);
        assert_eq!(labels[0][0], WL_UNKNOWN);
        // Leaves have degree 1 (seen), but their round-1 signature (0, [MAX])
        // contains an unknown, so it must also be unknown.
        assert_eq!(labels[0][1], 0);
        assert_eq!(labels[1][1], WL_UNKNOWN);
        // Unknowns are excluded from counts.
        let counts = wl_feature_counts(&star, 1, &mut table);
        assert_eq!(counts, BTreeMap::from([(0, 3.0)]));
        // Freezing really stopped id growth.
        assert_eq!(table.num_labels(), 4);
    }

    #[test]
    fn refinement_distinguishes_path_nodes_identical_by_degree() {
        // In a path of 4 nodes, both middles have degree 2 but different
        // round-2 environments than the ends.
        let g = Graph::from_edge_list(&[(0, 1), (1, 2), (2, 3)], 4).unwrap();
        let mut table = WlLabelTable::new();
        let labels = wl_node_labels(&g, 1, &mut table);
        assert_eq!(labels[0], vec![0, 1, 1, 0]);
        // Ends attach to a middle; middles attach to one end and one middle.
        assert_eq!(labels[1][0], labels[1][3]);
        assert_eq!(labels[1][1], labels[1][2]);
        assert_ne!(labels[1][0], labels[1][1]);
    }

    #[test]
    fn counts_are_permutation_invariant_under_frozen_table() {
        let mut rng = crate::numerics::Rng::new(23);
        for _ in 0..20 {
            let n = 10;
            let mut edges = Vec::new();
            for u in 0..n {
                for v in (u + 1)..n {
                    if rng.chance(0.35) {
                        edges.push((u, v));
                    }
                }
            }
            let g = Graph::from_edge_list(&edges, n).unwrap();
            let (_, mut table) = wl_corpus(&[&g], 3);
            table.freeze();
            let mut perm: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut perm);
            let gp = g.permute(&perm).unwrap();
            let a = wl_feature_counts(&g, 3, &mut table);
            let b = wl_feature_counts(&gp, 3, &mut table);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn gram_is_symmetric_and_positive_semidefinite() {
        let set = crate::dataset::synth_families(6, 31).unwrap();
        let graphs: Vec<&Graph> = set.graphs.iter().collect();
        let (counts, _) = wl_corpus(&graphs, 2);
        let gram = wl_gram(&counts);
        for i in 0..gram.rows() {
            for j in 0..gram.cols() {
                assert_eq!(gram.get(i, j), gram.get(j, i));
            }
        }
        let n = gram.rows();
        let dm = nalgebra::DMatrix::from_fn(n, n, |i, j| gram.get(i, j));
        let eigs = dm.symmetric_eigenvalues();
        let min_eig = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        let max_eig = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(
            min_eig >= -1e-8 * max_eig.max(1.0),
            "gram not PSD: min eigenvalue {min_eig}"
        );
    }

    #[test]
    fn table_serialization_round_trips() {
        let p = path3();
        let t = triangle();
        let (_, mut table) = wl_corpus(&[&p, &t], 2);
        table.freeze();
        let json = serde_json::to_string(&table).unwrap();
        let mut back: WlLabelTable = serde_json::from_str(&json).unwrap();
        assert_eq!(back, table);
        // The restored table must label a known graph identically.
        let a = wl_feature_counts(&p, 2, &mut table);
        let b = wl_feature_counts(&p, 2, &mut back);
        assert_eq!(a, b);
        assert!(back.is_frozen());
    }

    #[test]
    fn zero_rounds_is_degree_histogram() {
        let g = triangle();
        let mut table = WlLabelTable::new();
        let counts = wl_feature_counts(&g, 0, &mut table);
        assert_eq!(counts, BTreeMap::from([(0, 3.0)]));
    }
}
