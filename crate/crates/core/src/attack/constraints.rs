use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ctdg::{batch_iter, DynamicGraph, NodeId, NodePool, TemporalInteraction};
use crate::stats::{ks_critical_two_sample, ks_two_sample};

use super::PerturbationSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityViolation {
    pub batch: usize,
    pub node: NodeId,
    pub count: usize,
    pub bound: usize,
}

/// Outcome of the four constraint checks, recomputed from the corrupted graph
/// and the perturbation set alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub num_adversarial: usize,
    pub budget: usize,
    pub budget_ok: bool,
    pub ks_statistic: f64,
    pub ks_critical: f64,
    pub timing_ok: bool,
    /// Adversarial edges whose endpoints or timestamp fall outside their batch.
    pub locality_violations: Vec<TemporalInteraction>,
    pub locality_ok: bool,
    pub multiplicity_violations: Vec<MultiplicityViolation>,
    pub multiplicity_ok: bool,
    /// The graph's adversarial flags disagree with the perturbation set.
    pub inconsistent: bool,
}

impl ComplianceReport {
    pub fn compliant(&self) -> bool {
        self.budget_ok && self.timing_ok && self.locality_ok && self.multiplicity_ok && !self.inconsistent
    }
}

fn normalize(ts: &mut [f64], lo: f64, hi: f64) {
    let span = hi - lo;
    for t in ts {
        *t = if span > 0.0 { (*t - lo) / span } else { 0.5 };
    }
}

/// Checks budget, timing, locality and multiplicity. The timing check is a
/// two-sided KS test between adversarial timestamps and the genuine
/// timestamps of the attackable horizon (everything after the first batch).
pub fn validate_constraints(corrupted: &DynamicGraph, pset: &PerturbationSet) -> ComplianceReport {
    let cfg = &pset.config;
    let genuine: Vec<&TemporalInteraction> = corrupted.interactions().iter().filter(|e| !e.is_adversarial).collect();
    let budget = cfg.budget(genuine.len());
    let inconsistent =
        corrupted.num_adversarial() != pset.len() || pset.batch_ids.len() != pset.len() || pset.edges.iter().any(|e| !e.is_adversarial);

    let batches = batch_iter(genuine.len(), cfg.batch_size().max(1));
    let horizon = batches.get(1).map_or(genuine.len(), |r| r.start);

    let mut original: Vec<f64> = genuine[horizon..].iter().map(|e| e.t).collect();
    let mut adversarial: Vec<f64> = pset.edges.iter().map(|e| e.t).collect();
    let (lo, hi) = genuine
        .iter()
        .map(|e| e.t)
        .chain(adversarial.iter().copied())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), t| (a.min(t), b.max(t)));
    normalize(&mut original, lo, hi);
    normalize(&mut adversarial, lo, hi);
    let (ks_statistic, ks_critical) = if adversarial.is_empty() || original.is_empty() {
        (0.0, f64::INFINITY)
    } else {
        (
            ks_two_sample(&adversarial, &original),
            ks_critical_two_sample(cfg.ks_alpha, adversarial.len(), original.len()),
        )
    };

    let mut by_batch: BTreeMap<usize, Vec<&TemporalInteraction>> = BTreeMap::new();
    for (e, &b) in pset.edges.iter().zip(&pset.batch_ids) {
        by_batch.entry(b).or_default().push(e);
    }
    let k = cfg.per_batch_k();
    let mut used = 0usize;
    let mut locality_violations = Vec::new();
    let mut multiplicity_violations = Vec::new();
    for (&b, edges) in &by_batch {
        let range = match batches.get(b) {
            Some(r) if b > 0 => r.clone(),
            _ => {
                locality_violations.extend(edges.iter().map(|&e| e.clone()));
                used += edges.len();
                continue;
            }
        };
        let prev = batches[b - 1].clone();
        let pool = NodePool::from_edges(genuine[prev].iter().copied(), corrupted.bipartite());
        let (t_lo, t_hi) = (genuine[range.start].t, genuine[range.end - 1].t);
        for &e in edges {
            let outside = e.u == e.v || !pool.contains_pair(e.u, e.v) || e.t < t_lo || e.t > t_hi;
            if outside {
                locality_violations.push(e.clone());
            }
        }
        let k_b = k.min(budget.saturating_sub(used));
        let bound = k_b.div_ceil(pool.max_disjoint_edges().max(1));
        let mut count: BTreeMap<NodeId, usize> = BTreeMap::new();
        for &e in edges {
            *count.entry(e.u).or_default() += 1;
            *count.entry(e.v).or_default() += 1;
        }
        multiplicity_violations.extend(count.into_iter().filter(|&(_, c)| c > bound).map(|(node, c)| {
            MultiplicityViolation {
                batch: b,
                node,
                count: c,
                bound,
            }
        }));
        used += edges.len();
    }

    ComplianceReport {
        num_adversarial: pset.len(),
        budget,
        budget_ok: pset.len() <= budget,
        ks_statistic,
        ks_critical,
        timing_ok: ks_statistic < ks_critical,
        locality_ok: locality_violations.is_empty(),
        locality_violations,
        multiplicity_ok: multiplicity_violations.is_empty(),
        multiplicity_violations,
        inconsistent,
    }
}
