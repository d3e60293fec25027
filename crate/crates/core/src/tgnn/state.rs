use std::collections::VecDeque;

use crate::ctdg::{NodeId, TemporalInteraction};
use crate::error::{Error, Result};

use super::forward::Forward;
use super::TgnnModel;

/// Inputs of the GRU step that produced a node's current memory. Kept so
/// training can re-run the step under current parameters and differentiate
/// through it.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryStep {
    pub prev: Vec<f64>,
    pub other: Vec<f64>,
    pub dt: f64,
    pub features: Option<Vec<f64>>,
}

/// Per-node memory `s_u` and last update time `t_u^-`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMemoryBank {
    dim: usize,
    memory: Vec<Vec<f64>>,
    last_update: Vec<f64>,
    touched: Vec<bool>,
    steps: Vec<Option<MemoryStep>>,
}

impl NodeMemoryBank {
    pub fn new(num_nodes: usize, dim: usize) -> Self {
        Self {
            dim,
            memory: vec![vec![0.0; dim]; num_nodes],
            last_update: vec![0.0; num_nodes],
            touched: vec![false; num_nodes],
            steps: vec![None; num_nodes],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_nodes(&self) -> usize {
        self.memory.len()
    }

    pub fn memory(&self, u: NodeId) -> &[f64] {
        &self.memory[u]
    }

    pub fn last_update(&self, u: NodeId) -> f64 {
        self.last_update[u]
    }

    /// Whether the node has had any interaction yet.
    pub fn touched(&self, u: NodeId) -> bool {
        self.touched[u]
    }

    pub fn last_step(&self, u: NodeId) -> Option<&MemoryStep> {
        self.steps[u].as_ref()
    }

    /// Elapsed time since the node's previous update; zero for untouched nodes
    /// so that encodings depend only on timestamp differences.
    pub fn elapsed(&self, u: NodeId, t: f64) -> f64 {
        if self.touched[u] {
            t - self.last_update[u]
        } else {
            0.0
        }
    }

    pub(crate) fn check_order(&self, u: NodeId, t: f64) -> Result<()> {
        if u >= self.memory.len() {
            return Err(Error::invalid(format!("node {u} out of range")));
        }
        if self.touched[u] && t < self.last_update[u] {
            return Err(Error::OutOfOrder {
                node: u,
                t,
                last: self.last_update[u],
            });
        }
        Ok(())
    }

    pub(crate) fn commit(&mut self, u: NodeId, t: f64, new: Vec<f64>, step: MemoryStep) {
        self.memory[u] = new;
        self.last_update[u] = t;
        self.touched[u] = true;
        self.steps[u] = Some(step);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub node: NodeId,
    pub t: f64,
    pub features: Option<Vec<f64>>,
}

/// The `capacity` most recent interactions of each node.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborIndex {
    capacity: usize,
    lists: Vec<VecDeque<Neighbor>>,
}

impl NeighborIndex {
    pub fn new(num_nodes: usize, capacity: usize) -> Self {
        Self {
            capacity,
            lists: vec![VecDeque::with_capacity(capacity); num_nodes],
        }
    }

    pub fn insert(&mut self, u: NodeId, n: Neighbor) {
        let list = &mut self.lists[u];
        if list.len() == self.capacity {
            list.pop_front();
        }
        list.push_back(n);
    }

    /// Most recent neighbors with timestamp `<= t`, oldest first.
    pub fn recent(&self, u: NodeId, t: f64) -> impl Iterator<Item = &Neighbor> {
        self.lists[u].iter().filter(move |n| n.t <= t)
    }

    pub fn count(&self, u: NodeId) -> usize {
        self.lists[u].len()
    }
}

/// Node memory plus neighbor index: everything the model reads that evolves
/// with the event stream.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalState {
    pub bank: NodeMemoryBank,
    pub neighbors: NeighborIndex,
}

impl TemporalState {
    pub fn new(model: &TgnnModel, num_nodes: usize) -> Self {
        let c = model.config();
        Self {
            bank: NodeMemoryBank::new(num_nodes, c.memory_dim),
            neighbors: NeighborIndex::new(num_nodes, c.neighbors),
        }
    }

    /// Consumes one event: GRU update of both endpoints from pre-event
    /// memories, then neighbor insertion.
    pub fn apply(&mut self, model: &TgnnModel, e: &TemporalInteraction) -> Result<()> {
        self.bank.check_order(e.u, e.t)?;
        self.bank.check_order(e.v, e.t)?;
        let feats = e.features.as_deref();
        let (new_u, step_u, new_v) = {
            let mut f = Forward::inference(model, self);
            let (su, step_u) = f.memory_update_value(e.u, e.v, e.t, feats)?;
            let sv = if e.u != e.v {
                Some(f.memory_update_value(e.v, e.u, e.t, feats)?)
            } else {
                None
            };
            (su, step_u, sv)
        };
        self.bank.commit(e.u, e.t, new_u, step_u);
        if let Some((sv, step_v)) = new_v {
            self.bank.commit(e.v, e.t, sv, step_v);
        }
        let feat_vec = e.features.clone();
        self.neighbors.insert(
            e.u,
            Neighbor {
                node: e.v,
                t: e.t,
                features: feat_vec.clone(),
            },
        );
        if e.u != e.v {
            self.neighbors.insert(
                e.v,
                Neighbor {
                    node: e.u,
                    t: e.t,
                    features: feat_vec,
                },
            );
        }
        Ok(())
    }
}
