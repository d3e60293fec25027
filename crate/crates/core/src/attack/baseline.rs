use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ctdg::{NodeId, NodePool};
use crate::error::{Error, Result};

use super::assignment::CostMatrix;

/// Structural statistic used in place of surrogate scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Random,
    /// Preferential attachment `|N(u)| |N(v)|`.
    Pa,
    Jaccard,
    /// Sum of neighbor counts.
    StructD,
    /// Sum of PageRank centralities.
    StructPr,
}

pub const PAGERANK_DAMPING: f64 = 0.85;
pub const PAGERANK_TOLERANCE: f64 = 1e-10;

/// Undirected simple graph accumulated from an interaction stream.
#[derive(Debug, Clone, PartialEq)]
pub struct PlainGraph {
    adj: Vec<BTreeSet<NodeId>>,
}

impl PlainGraph {
    pub fn new(num_nodes: usize) -> Self {
        Self {
            adj: vec![BTreeSet::new(); num_nodes],
        }
    }

    pub fn add(&mut self, u: NodeId, v: NodeId) {
        if u != v {
            self.adj[u].insert(v);
            self.adj[v].insert(u);
        }
    }

    pub fn degree(&self, u: NodeId) -> usize {
        self.adj[u].len()
    }

    pub fn num_nodes(&self) -> usize {
        self.adj.len()
    }

    /// `|N(u) ∩ N(v)| / |N(u) ∪ N(v)|`, zero when both are isolated.
    pub fn jaccard(&self, u: NodeId, v: NodeId) -> f64 {
        let inter = self.adj[u].intersection(&self.adj[v]).count();
        let union = self.adj[u].len() + self.adj[v].len() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Power iteration with uniform teleport; dangling mass is spread
    /// uniformly. Stops when the L1 change drops below `tol`.
    pub fn pagerank(&self, damping: f64, tol: f64) -> Vec<f64> {
        let n = self.adj.len();
        if n == 0 {
            return Vec::new();
        }
        let nf = n as f64;
        let mut r = vec![1.0 / nf; n];
        for _ in 0..100_000 {
            let dangling: f64 = (0..n).filter(|&u| self.adj[u].is_empty()).map(|u| r[u]).sum();
            let base = (1.0 - damping) / nf + damping * dangling / nf;
            let mut next = vec![base; n];
            for u in 0..n {
                let d = self.adj[u].len();
                if d > 0 {
                    let share = damping * r[u] / d as f64;
                    for &v in &self.adj[u] {
                        next[v] += share;
                    }
                }
            }
            let diff: f64 = next.iter().zip(&r).map(|(a, b)| (a - b).abs()).sum();
            r = next;
            if diff < tol {
                break;
            }
        }
        r
    }
}

/// Cost matrix over the pool from the baseline statistic (lower = chosen first).
pub fn baseline_costs(kind: BaselineKind, plain: &PlainGraph, pool: &NodePool) -> Result<CostMatrix> {
    let (rows, cols) = pool.rows_cols();
    if kind == BaselineKind::Jaccard && matches!(pool, NodePool::Bipartite { .. }) {
        return Err(Error::invalid("jaccard cannot be applied to bipartite graphs"));
    }
    let pr = if kind == BaselineKind::StructPr {
        plain.pagerank(PAGERANK_DAMPING, PAGERANK_TOLERANCE)
    } else {
        Vec::new()
    };
    let stat = |u: NodeId, v: NodeId| -> f64 {
        match kind {
            BaselineKind::Pa => (plain.degree(u) * plain.degree(v)) as f64,
            BaselineKind::Jaccard => plain.jaccard(u, v),
            BaselineKind::StructD => (plain.degree(u) + plain.degree(v)) as f64,
            BaselineKind::StructPr => pr[u] + pr[v],
            BaselineKind::Random => 0.0,
        }
    };
    let cost = rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
        .map(|(r, c)| stat(r, c))
        .collect();
    CostMatrix::new(rows.to_vec(), cols.to_vec(), cost)
}

/// `k` uniformly drawn pool pairs without self-loops; draws that would push
/// a node past `n` adversarial edges are rejected and redrawn.
pub fn random_pairs(pool: &NodePool, k: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<(NodeId, NodeId)> {
    let (rows, cols) = pool.rows_cols();
    let mut count = std::collections::HashMap::new();
    let mut out = Vec::with_capacity(k);
    if rows.is_empty() || cols.is_empty() {
        return out;
    }
    let mut attempts = 0usize;
    while out.len() < k && attempts < 1000 * k.max(1) {
        attempts += 1;
        let u = rows[rng.random_range(0..rows.len())];
        let v = cols[rng.random_range(0..cols.len())];
        if u == v {
            continue;
        }
        let cu = count.get(&u).copied().unwrap_or(0);
        let cv = count.get(&v).copied().unwrap_or(0);
        if cu >= n || cv >= n {
            continue;
        }
        *count.entry(u).or_insert(0) += 1;
        *count.entry(v).or_insert(0) += 1;
        out.push((u, v));
    }
    if out.len() < k {
        log::warn!("random baseline drew {} of {k} pairs", out.len());
    }
    out
}
