//! Continuous-time dynamic graphs: interaction records, chronological
//! splitting, window node pools, batching, and kernel density estimators
//! over timestamps and edge features.

mod io;
mod kde;

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    load_interactions, load_perturbation_manifest, read_graph_meta, save_interactions,
    save_perturbation_manifest, ColumnMapping, GraphMeta,
};
pub use kde::{
    fit_feature_kde, fit_time_kde, FeatureKde, Kde1d, KdeSampler, DEFAULT_BANDWIDTH, MAX_PROPOSALS,
};

pub type NodeId = usize;

/// One timestamped dyadic event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalInteraction {
    pub u: NodeId,
    pub v: NodeId,
    pub t: f64,
    pub features: Option<Vec<f64>>,
    pub is_adversarial: bool,
}

impl TemporalInteraction {
    pub fn new(u: NodeId, v: NodeId, t: f64) -> Self {
        Self {
            u,
            v,
            t,
            features: None,
            is_adversarial: false,
        }
    }

    pub fn with_features(mut self, features: Vec<f64>) -> Self {
        self.features = Some(features);
        self
    }
}

/// A chronologically ordered interaction sequence over a fixed node universe.
///
/// Immutable after construction; equal timestamps keep their ingestion order.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicGraph {
    interactions: Vec<TemporalInteraction>,
    num_nodes: usize,
    bipartite: bool,
    source_ids: Vec<NodeId>,
    destination_ids: Vec<NodeId>,
    feature_dim: Option<usize>,
}

impl DynamicGraph {
    /// Builds a graph from raw rows, deriving the node universe from the data.
    pub fn new(interactions: Vec<TemporalInteraction>, bipartite: bool) -> Result<Self> {
        if interactions.is_empty() {
            return Err(Error::Empty);
        }
        let num_nodes = 1 + interactions
            .iter()
            .map(|e| e.u.max(e.v))
            .max()
            .unwrap_or(0);
        let (sources, destinations) = if bipartite {
            let s: BTreeSet<_> = interactions.iter().map(|e| e.u).collect();
            let d: BTreeSet<_> = interactions.iter().map(|e| e.v).collect();
            (s.into_iter().collect(), d.into_iter().collect())
        } else {
            let all: Vec<_> = (0..num_nodes).collect();
            (all.clone(), all)
        };
        Self::from_parts(interactions, num_nodes, bipartite, sources, destinations)
    }

    /// Builds a graph over an explicit node universe (used when a corrupted
    /// graph must keep the universe of its source graph).
    pub fn from_parts(
        mut interactions: Vec<TemporalInteraction>,
        num_nodes: usize,
        bipartite: bool,
        mut source_ids: Vec<NodeId>,
        mut destination_ids: Vec<NodeId>,
    ) -> Result<Self> {
        if interactions.is_empty() {
            return Err(Error::Empty);
        }
        let mut feature_dim = None;
        for (i, e) in interactions.iter().enumerate() {
            if !(e.t >= 0.0) || !e.t.is_finite() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("invalid timestamp {}", e.t),
                });
            }
            if e.u >= num_nodes || e.v >= num_nodes {
                return Err(Error::invalid(format!(
                    "interaction {i} references node outside universe of {num_nodes}"
                )));
            }
            let dim = e.features.as_ref().map(Vec::len);
            if i == 0 {
                feature_dim = dim;
            } else if dim != feature_dim {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("ragged feature row: {dim:?} vs {feature_dim:?}"),
                });
            }
        }
        source_ids.sort_unstable();
        source_ids.dedup();
        destination_ids.sort_unstable();
        destination_ids.dedup();
        if !bipartite {
            debug_assert_eq!(source_ids, destination_ids);
        }
        for e in &interactions {
            if source_ids.binary_search(&e.u).is_err() {
                return Err(Error::invalid(format!("source {} not in source set", e.u)));
            }
            if destination_ids.binary_search(&e.v).is_err() {
                return Err(Error::invalid(format!(
                    "destination {} not in destination set",
                    e.v
                )));
            }
        }
        // stable: equal timestamps keep ingestion order
        interactions.sort_by(|a, b| a.t.total_cmp(&b.t));
        Ok(Self {
            interactions,
            num_nodes,
            bipartite,
            source_ids,
            destination_ids,
            feature_dim,
        })
    }

    pub fn interactions(&self) -> &[TemporalInteraction] {
        &self.interactions
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn bipartite(&self) -> bool {
        self.bipartite
    }

    pub fn source_ids(&self) -> &[NodeId] {
        &self.source_ids
    }

    pub fn destination_ids(&self) -> &[NodeId] {
        &self.destination_ids
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.feature_dim
    }

    pub fn num_adversarial(&self) -> usize {
        self.interactions.iter().filter(|e| e.is_adversarial).count()
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.interactions.iter().map(|e| e.t).collect()
    }

    /// Graph with the same universe but only the non-adversarial interactions.
    pub fn genuine_only(&self) -> Result<Self> {
        let kept = self
            .interactions
            .iter()
            .filter(|e| !e.is_adversarial)
            .cloned()
            .collect();
        Self::from_parts(
            kept,
            self.num_nodes,
            self.bipartite,
            self.source_ids.clone(),
            self.destination_ids.clone(),
        )
    }

    /// Same universe, new interaction list (re-sorted chronologically).
    pub fn with_interactions(&self, interactions: Vec<TemporalInteraction>) -> Result<Self> {
        Self::from_parts(
            interactions,
            self.num_nodes,
            self.bipartite,
            self.source_ids.clone(),
            self.destination_ids.clone(),
        )
    }
}

/// Contiguous train / validation / test index ranges into one graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBundle {
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
}

impl SplitBundle {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }

    pub fn total(&self) -> usize {
        self.test.end
    }
}

pub const DEFAULT_SPLIT: (f64, f64, f64) = (0.70, 0.15, 0.15);

/// Splits by interaction index: floor rule for train and validation, the
/// remainder goes to test.
pub fn chronological_split(g: &DynamicGraph, fractions: (f64, f64, f64)) -> Result<SplitBundle> {
    split_len(g.len(), fractions)
}

pub fn split_len(n: usize, (train, val, test): (f64, f64, f64)) -> Result<SplitBundle> {
    if n < 3 {
        return Err(Error::invalid(format!("need at least 3 interactions to split, got {n}")));
    }
    if !(train > 0.0 && val > 0.0 && test > 0.0) || ((train + val + test) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("split fractions must be positive and sum to 1"));
    }
    // guard against 0.7 * 100 = 69.999...
    let floor = |x: f64| (x + 1e-9).floor() as usize;
    let n_train = floor(train * n as f64);
    let n_val = floor(val * n as f64);
    Ok(SplitBundle {
        train: 0..n_train,
        validation: n_train..n_train + n_val,
        test: n_train + n_val..n,
    })
}

/// Endpoint pool of a window of interactions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodePool {
    Unipartite(Vec<NodeId>),
    Bipartite {
        sources: Vec<NodeId>,
        destinations: Vec<NodeId>,
    },
}

impl NodePool {
    pub fn from_edges<'a>(
        edges: impl IntoIterator<Item = &'a TemporalInteraction>,
        bipartite: bool,
    ) -> Self {
        if bipartite {
            let mut s = BTreeSet::new();
            let mut d = BTreeSet::new();
            for e in edges {
                s.insert(e.u);
                d.insert(e.v);
            }
            NodePool::Bipartite {
                sources: s.into_iter().collect(),
                destinations: d.into_iter().collect(),
            }
        } else {
            let mut all = BTreeSet::new();
            for e in edges {
                all.insert(e.u);
                all.insert(e.v);
            }
            NodePool::Unipartite(all.into_iter().collect())
        }
    }

    /// Row and column node lists for a cost matrix over this pool.
    pub fn rows_cols(&self) -> (&[NodeId], &[NodeId]) {
        match self {
            NodePool::Unipartite(n) => (n, n),
            NodePool::Bipartite {
                sources,
                destinations,
            } => (sources, destinations),
        }
    }

    pub fn contains_pair(&self, u: NodeId, v: NodeId) -> bool {
        match self {
            NodePool::Unipartite(n) => n.binary_search(&u).is_ok() && n.binary_search(&v).is_ok(),
            NodePool::Bipartite {
                sources,
                destinations,
            } => sources.binary_search(&u).is_ok() && destinations.binary_search(&v).is_ok(),
        }
    }

    /// Distinct nodes across both sides.
    pub fn node_count(&self) -> usize {
        match self {
            NodePool::Unipartite(n) => n.len(),
            NodePool::Bipartite {
                sources,
                destinations,
            } => {
                let all: BTreeSet<_> = sources.iter().chain(destinations).collect();
                all.len()
            }
        }
    }

    /// Maximum number of node-disjoint edges that can be formed in the pool.
    pub fn max_disjoint_edges(&self) -> usize {
        match self {
            NodePool::Unipartite(n) => n.len() / 2,
            NodePool::Bipartite {
                sources,
                destinations,
            } => sources.len().min(destinations.len()),
        }
    }
}

/// Endpoints of interactions `max(0, i-W+1) ..= i`.
pub fn window_nodes(g: &DynamicGraph, i: usize, window: usize) -> NodePool {
    let end = (i + 1).min(g.len());
    let start = (i + 1).saturating_sub(window.max(1)).min(end);
    NodePool::from_edges(&g.interactions[start..end], g.bipartite)
}

/// Contiguous index ranges of at most `batch_size` interactions.
pub fn batch_iter(len: usize, batch_size: usize) -> Vec<Range<usize>> {
    assert!(batch_size >= 1, "batch_size must be positive");
    (0..len)
        .step_by(batch_size)
        .map(|s| s..(s + batch_size).min(len))
        .collect()
}
