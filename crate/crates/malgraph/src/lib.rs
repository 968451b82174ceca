//! Malware function-call-graph classification.
//!
//! Everything needed to go from directories of edge lists to trained,
//! reloadable classifiers: CSR graphs, local-degree-profile features,
//! Weisfeiler-Lehman and characteristic-function baselines, and a family of
//! message-passing networks built on an in-crate dense f64 tensor engine.

pub mod baselines;
pub mod checkpoint;
pub mod dataset;
pub mod features;
pub mod gnn;
pub mod graph;
pub mod numerics;
pub mod pipeline;
pub mod training;

pub use graph::Graph;
