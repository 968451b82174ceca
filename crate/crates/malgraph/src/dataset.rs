//! Labeled graph corpora: on-disk ingestion, stratified splitting, family
//! statistics and a synthetic five-family generator for tests and demos.
//!
//! The on-disk layout is one subdirectory per family, each holding
//! `<sample_id>.edgelist` files. An edge-list line is either a comment
//! (optional whitespace then `#`) or two base-10 node ids separated by
//! whitespace; blank lines are tolerated. Node ids may be arbitrary
//! non-negative integers and are remapped to dense indices in ascending id
//! order.

use std::collections::HashSet;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::graph::{Graph, GraphError};
use crate::numerics::Rng;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: expected `u v` or a # comment, got {content:?}")]
    Parse { path: PathBuf, line: usize, content: String },
    #[error("{path}: no edges")]
    NoEdges { path: PathBuf },
    #[error("{path}: no family subdirectories")]
    EmptyRoot { path: PathBuf },
    #[error("{path}: family directory holds no .edgelist files")]
    EmptyFamily { path: PathBuf },
    #[error("split ratios must be positive and sum to 1, got {train}/{val}/{test}")]
    InvalidRatios { train: f64, val: f64, test: f64 },
    #[error("class `{class}` has {count} samples; stratified splitting needs at least 3")]
    ClassTooSmall { class: String, count: usize },
    #[error("class `{class}` has no graphs")]
    EmptyClass { class: String },
    #[error("dataset is empty")]
    Empty,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// A corpus of graphs with integer labels into `class_names`.
///
/// `class_names` is sorted lexicographically so label indices are stable
/// across runs and machines; `source_ids` keeps per-graph provenance for
/// diagnostics and exports.
#[derive(Debug, Clone)]
pub struct LabeledGraphSet {
    pub graphs: Vec<Graph>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub source_ids: Vec<String>,
}

impl LabeledGraphSet {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.class_names.len()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Train/validation/test indices into a [`LabeledGraphSet`].
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub ratios: (f64, f64, f64),
    pub seed: u64,
}

/// Distribution summary for one integer-valued count (vertices or edges).
#[derive(Debug, Clone, serde::Serialize)]
pub struct CountSummary {
    pub min: u64,
    pub max: u64,
    /// Lower-middle element for even-length samples.
    pub median: u64,
    /// Population standard deviation.
    pub std: f64,
}

/// Per-family structure statistics.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FamilyStats {
    pub family: String,
    pub count: usize,
    pub vertices: CountSummary,
    pub edges: CountSummary,
    /// Mean over the family's graphs of `edges / nodes` (undirected edge
    /// count over node count), the convention used for call-graph corpora.
    pub avg_degree: f64,
}

// ---------------------------------------------------------------------------
// Edge-list parsing
// ---------------------------------------------------------------------------

/// Parses one edge-list file into a graph plus the original node ids, in the
/// ascending order they were remapped from (dense index -> original id).
pub fn parse_edgelist_file(path: &Path) -> Result<(Graph, Vec<u64>), DataError> {
    let mut text = String::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
    let mut raw_edges: Vec<(u64, u64)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut it = trimmed.split_whitespace();
        let parsed = match (it.next(), it.next(), it.next()) {
            (Some(a), Some(b), None) => match (a.parse::<u64>(), b.parse::<u64>()) {
                (Ok(u), Ok(v)) => Some((u, v)),
                _ => None,
            },
            _ => None,
        };
        match parsed {
            Some(edge) => raw_edges.push(edge),
            None => {
                return Err(DataError::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    content: line.to_string(),
                })
            }
        }
    }
    if raw_edges.is_empty() {
        return Err(DataError::NoEdges { path: path.to_path_buf() });
    }
    let mut ids: Vec<u64> = raw_edges.iter().flat_map(|&(u, v)| [u, v]).collect();
    ids.sort_unstable();
    ids.dedup();
    let dense = |id: u64| ids.binary_search(&id).expect("id collected above");
    let edges: Vec<(usize, usize)> =
        raw_edges.iter().map(|&(u, v)| (dense(u), dense(v))).collect();
    let graph = Graph::from_edge_list(&edges, ids.len())?;
    Ok((graph, ids))
}

/// Loads a `<root>/<family>/<sample>.edgelist` tree.
///
/// Families and files are visited in lexicographic order regardless of
/// filesystem enumeration order, so labels and graph indices are
/// deterministic. Files are parsed in parallel.
pub fn load_malnet_dir(root: &Path) -> Result<LabeledGraphSet, DataError> {
    let read_dir = |p: &Path| {
        fs::read_dir(p).map_err(|source| DataError::Io { path: p.to_path_buf(), source })
    };
    let mut families: Vec<(String, PathBuf)> = Vec::new();
    for entry in read_dir(root)? {
        let entry = entry.map_err(|source| DataError::Io { path: root.to_path_buf(), source })?;
        if entry.path().is_dir() {
            families.push((entry.file_name().to_string_lossy().into_owned(), entry.path()));
        }
    }
    if families.is_empty() {
        return Err(DataError::EmptyRoot { path: root.to_path_buf() });
    }
    families.sort();
    let mut work: Vec<(usize, PathBuf)> = Vec::new();
    for (label, (_, dir)) in families.iter().enumerate() {
        let mut files: Vec<PathBuf> = Vec::new();
        for entry in read_dir(dir)? {
            let entry = entry.map_err(|source| DataError::Io { path: dir.clone(), source })?;
            let path = entry.path();
            if path.is_file() && path.extension().is_some_and(|e| e == "edgelist") {
                files.push(path);
            }
        }
        if files.is_empty() {
            return Err(DataError::EmptyFamily { path: dir.clone() });
        }
        files.sort();
        work.extend(files.into_iter().map(|f| (label, f)));
    }
    let parsed: Vec<Result<Graph, DataError>> = work
        .par_iter()
        .map(|(_, path)| parse_edgelist_file(path).map(|(g, _)| g))
        .collect();
    let mut graphs = Vec::with_capacity(work.len());
    let mut labels = Vec::with_capacity(work.len());
    let mut source_ids = Vec::with_capacity(work.len());
    for ((label, path), graph) in work.into_iter().zip(parsed) {
        graphs.push(graph?);
        labels.push(label);
        source_ids.push(format!(
            "{}/{}",
            families[label].0,
            path.file_name().unwrap_or_default().to_string_lossy()
        ));
    }
    Ok(LabeledGraphSet {
        graphs,
        labels,
        class_names: families.into_iter().map(|(n, _)| n).collect(),
        source_ids,
    })
}

// ---------------------------------------------------------------------------
// Stratified splitting
// ---------------------------------------------------------------------------

/// Splits per class with the given `(train, val, test)` ratios.
///
/// Within each class the counts follow the largest-remainder rule, so they
/// sit within one sample of the exact proportions; every class lands in
/// every split at least once. Identical seeds produce identical splits.
pub fn stratified_split(
    set: &LabeledGraphSet,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplit, DataError> {
    let (rt, rv, rte) = ratios;
    let sum = rt + rv + rte;
    if !(rt > 0.0 && rv > 0.0 && rte > 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(DataError::InvalidRatios { train: rt, val: rv, test: rte });
    }
    if set.is_empty() {
        return Err(DataError::Empty);
    }
    let mut rng = Rng::new(seed);
    let mut split = DatasetSplit {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        ratios,
        seed,
    };
    for (class, name) in set.class_names.iter().enumerate() {
        let mut idx: Vec<usize> =
            (0..set.len()).filter(|&i| set.labels[i] == class).collect();
        if idx.len() < 3 {
            return Err(DataError::ClassTooSmall { class: name.clone(), count: idx.len() });
        }
        rng.shuffle(&mut idx);
        let counts = apportion(idx.len(), [rt, rv, rte]);
        let (a, b) = (counts[0], counts[0] + counts[1]);
        split.train.extend_from_slice(&idx[..a]);
        split.val.extend_from_slice(&idx[a..b]);
        split.test.extend_from_slice(&idx[b..]);
    }
    Ok(split)
}

/// Largest-remainder apportionment of `n` items over three ratios, with every
/// bucket guaranteed at least one item (requires `n >= 3`).
fn apportion(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let shares: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = shares[a] - counts[a] as f64;
        let fb = shares[b] - counts[b] as f64;
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for i in 0..(n - assigned) {
        counts[order[i % 3]] += 1;
    }
    // Guarantee non-empty buckets by stealing from the largest.
    for i in 0..3 {
        while counts[i] == 0 {
            let donor = (0..3).max_by_key(|&j| counts[j]).unwrap();
            counts[donor] -= 1;
            counts[i] += 1;
        }
    }
    [counts[0], counts[1], counts[2]]
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

/// Parameter bands for the five synthetic families, chosen so the family
/// means of the LDP degree channel are far apart:
///
/// * `addisplay_like`: preferential attachment, m=2, 40-100 nodes (mean degree ~3.9)
/// * `adware_like`: preferential attachment, m=4, 40-100 nodes (mean degree ~7.7)
/// * `benign_like`: ring lattice k=6 with 10% rewiring, 40-100 nodes (mean degree 6)
/// * `downloader_like`: random trees plus a few shortcut edges, 40-117 nodes,
///   edge count pinned to round(1.14 * n) to match the near-tree call-graph
///   profile (edges/nodes ~ 1.14)
/// * `trojan_like`: Erdos-Renyi with expected degree 12, 40-100 nodes
pub const SYNTH_FAMILY_NAMES: [&str; 5] =
    ["addisplay_like", "adware_like", "benign_like", "downloader_like", "trojan_like"];

/// Generates `per_class` graphs for each of the five synthetic families.
/// Fully determined by `seed`.
pub fn synth_families(per_class: usize, seed: u64) -> Result<LabeledGraphSet, DataError> {
    if per_class == 0 {
        return Err(DataError::Empty);
    }
    let mut rng = Rng::new(seed);
    let mut graphs = Vec::with_capacity(per_class * 5);
    let mut labels = Vec::with_capacity(per_class * 5);
    let mut source_ids = Vec::with_capacity(per_class * 5);
    for (label, name) in SYNTH_FAMILY_NAMES.iter().enumerate() {
        for i in 0..per_class {
            let g = match *name {
                "addisplay_like" => preferential_attachment(rng.int_in(40, 100), 2, &mut rng),
                "adware_like" => preferential_attachment(rng.int_in(40, 100), 4, &mut rng),
                "benign_like" => ring_lattice_rewired(rng.int_in(40, 100), 6, 0.1, &mut rng),
                "downloader_like" => near_tree(rng.int_in(40, 117), &mut rng),
                "trojan_like" => erdos_renyi_degree(rng.int_in(40, 100), 12.0, &mut rng),
                _ => unreachable!(),
            };
            graphs.push(g);
            labels.push(label);
            source_ids.push(format!("synth/{name}/{i}"));
        }
    }
    Ok(LabeledGraphSet {
        graphs,
        labels,
        class_names: SYNTH_FAMILY_NAMES.iter().map(|s| s.to_string()).collect(),
        source_ids,
    })
}

/// Uniform-attachment random tree plus shortcuts until `edges = round(1.14 n)`.
fn near_tree(n: usize, rng: &mut Rng) -> Graph {
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut present: HashSet<(usize, usize)> = HashSet::new();
    for v in 1..n {
        let u = rng.below(v);
        edges.push((u, v));
        present.insert((u.min(v), u.max(v)));
    }
    let target = ((1.14 * n as f64).round() as usize).max(n - 1);
    let mut guard = 0;
    while edges.len() < target && guard < 10_000 {
        guard += 1;
        let u = rng.below(n);
        let v = rng.below(n);
        let key = (u.min(v), u.max(v));
        if u != v && !present.contains(&key) {
            present.insert(key);
            edges.push((u, v));
        }
    }
    Graph::from_edge_list(&edges, n).expect("generated edges are in range")
}

/// Barabasi-Albert-style growth: seed clique on m+1 nodes, then each new node
/// attaches to m distinct targets drawn proportionally to degree.
fn preferential_attachment(n: usize, m: usize, rng: &mut Rng) -> Graph {
    assert!(n > m + 1, "preferential attachment needs n > m + 1");
    let mut edges: Vec<(usize, usize)> = Vec::new();
    // Degree-weighted sampling pool: each node appears once per incident edge.
    let mut pool: Vec<usize> = Vec::new();
    for u in 0..=m {
        for v in (u + 1)..=m {
            edges.push((u, v));
            pool.push(u);
            pool.push(v);
        }
    }
    for v in (m + 1)..n {
        let mut targets: Vec<usize> = Vec::with_capacity(m);
        let mut guard = 0;
        while targets.len() < m && guard < 10_000 {
            guard += 1;
            let t = pool[rng.below(pool.len())];
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for &t in &targets {
            edges.push((v, t));
            pool.push(v);
            pool.push(t);
        }
    }
    Graph::from_edge_list(&edges, n).expect("generated edges are in range")
}

/// Ring lattice where each node links to `k/2` neighbors on each side, then
/// each edge's far endpoint is rewired with probability `beta` (collisions
/// keep the original edge so the edge count stays `k*n/2`).
fn ring_lattice_rewired(n: usize, k: usize, beta: f64, rng: &mut Rng) -> Graph {
    let half = k / 2;
    let mut present: HashSet<(usize, usize)> = HashSet::new();
    let key = |u: usize, v: usize| (u.min(v), u.max(v));
    for u in 0..n {
        for d in 1..=half {
            present.insert(key(u, (u + d) % n));
        }
    }
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for u in 0..n {
        for d in 1..=half {
            let v = (u + d) % n;
            let mut e = (u, v);
            if rng.chance(beta) {
                let w = rng.below(n);
                if w != u && !present.contains(&key(u, w)) {
                    present.remove(&key(u, v));
                    present.insert(key(u, w));
                    e = (u, w);
                }
            }
            edges.push(e);
        }
    }
    Graph::from_edge_list(&edges, n).expect("generated edges are in range")
}

/// G(n, p) with `p` chosen so the expected degree is `mean_degree`.
fn erdos_renyi_degree(n: usize, mean_degree: f64, rng: &mut Rng) -> Graph {
    let p = (mean_degree / (n as f64 - 1.0)).min(1.0);
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.chance(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edge_list(&edges, n).expect("generated edges are in range")
}

// ---------------------------------------------------------------------------
// Family statistics
// ---------------------------------------------------------------------------

/// Per-family vertex/edge distributions and average degree.
pub fn family_stats(set: &LabeledGraphSet) -> Result<Vec<FamilyStats>, DataError> {
    if set.is_empty() {
        return Err(DataError::Empty);
    }
    let mut rows = Vec::with_capacity(set.num_classes());
    for (class, name) in set.class_names.iter().enumerate() {
        let graphs: Vec<&Graph> = set
            .graphs
            .iter()
            .zip(&set.labels)
            .filter(|(_, &l)| l == class)
            .map(|(g, _)| g)
            .collect();
        if graphs.is_empty() {
            return Err(DataError::EmptyClass { class: name.clone() });
        }
        let vertices: Vec<u64> = graphs.iter().map(|g| g.num_nodes() as u64).collect();
        let edges: Vec<u64> = graphs.iter().map(|g| g.num_edges() as u64).collect();
        let avg_degree = graphs
            .iter()
            .map(|g| g.num_edges() as f64 / g.num_nodes().max(1) as f64)
            .sum::<f64>()
            / graphs.len() as f64;
        rows.push(FamilyStats {
            family: name.clone(),
            count: graphs.len(),
            vertices: summarize(&vertices),
            edges: summarize(&edges),
            avg_degree,
        });
    }
    Ok(rows)
}

fn summarize(values: &[u64]) -> CountSummary {
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let mean = sorted.iter().sum::<u64>() as f64 / n as f64;
    let var = sorted.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n as f64;
    CountSummary {
        min: sorted[0],
        max: sorted[n - 1],
        median: sorted[(n - 1) / 2],
        std: var.sqrt(),
    }
}
