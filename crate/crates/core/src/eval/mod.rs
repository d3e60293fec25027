//! Ranking metrics against sampled negatives, AUROC for adversarial-edge
//! detection, and the split-specific evaluation protocol.

use std::fmt;
use std::ops::Range;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ctdg::{DynamicGraph, NodeId, SplitBundle, TemporalInteraction};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::stats::harmonic;
use crate::tgnn::{warm_replay, EdgeFilter, Forward, TemporalState, TgnnModel};

pub const DEFAULT_NEGATIVES: usize = 100;
pub const DEFAULT_K: usize = 10;

/// Pessimistic rank: ties with the true edge count against it.
pub fn rank_from_scores(true_score: f64, negatives: &[f64]) -> usize {
    1 + negatives.iter().filter(|&&s| s >= true_score).count()
}

/// Up to `count` distinct destinations other than `exclude`, drawn uniformly
/// without replacement.
pub fn sample_negatives(
    destinations: &[NodeId],
    exclude: NodeId,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<NodeId> {
    let pool: Vec<NodeId> = destinations.iter().copied().filter(|&d| d != exclude).collect();
    let amount = count.min(pool.len());
    index::sample(rng, pool.len(), amount)
        .into_iter()
        .map(|i| pool[i])
        .collect()
}

fn rank_with(
    model: &TgnnModel,
    state: &TemporalState,
    e: &TemporalInteraction,
    negatives: &[NodeId],
) -> Result<usize> {
    let mut f = Forward::inference(model, state);
    let hu = f.embed(e.u, e.t)?;
    let hv = f.embed(e.v, e.t)?;
    let pos = f.score(hu, hv);
    let score = f.tape.scalar(pos);
    let mut neg = Vec::with_capacity(negatives.len());
    for &n in negatives {
        let hn = f.embed(n, e.t)?;
        let s = f.score(hu, hn);
        neg.push(f.tape.scalar(s));
    }
    Ok(rank_from_scores(score, &neg))
}

/// Rank of the true edge among itself and `negatives`, against the current
/// (pre-edge) state.
pub fn rank_edge(
    model: &TgnnModel,
    state: &TemporalState,
    edge: &TemporalInteraction,
    negatives: &[NodeId],
) -> Result<usize> {
    rank_with(model, state, edge, negatives)
}

/// `100 * mean(1 / rank)`.
pub fn mrr_from_ranks(ranks: &[usize]) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::invalid("no edges evaluated"));
    }
    Ok(100.0 * ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64)
}

/// `100 * mean(rank <= k)`.
pub fn hit_at_k_from_ranks(ranks: &[usize], k: usize) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::invalid("no edges evaluated"));
    }
    Ok(100.0 * ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64)
}

/// Expected MRR of a ranker that orders the true edge uniformly at random
/// among `negatives + 1` candidates.
pub fn expected_random_mrr(negatives: usize) -> f64 {
    100.0 * harmonic(negatives + 1) / (negatives + 1) as f64
}

pub fn expected_random_hit_at_k(negatives: usize, k: usize) -> f64 {
    100.0 * k.min(negatives + 1) as f64 / (negatives + 1) as f64
}

/// Probability that a random genuine edge outscores a random adversarial one,
/// ties counted one half. Labels are `true` for adversarial edges.
pub fn auroc(pairs: &[(f64, bool)]) -> Result<f64> {
    let n_adv = pairs.iter().filter(|p| p.1).count();
    let n_gen = pairs.len() - n_adv;
    if n_adv == 0 || n_gen == 0 {
        return Err(Error::invalid("auroc needs both genuine and adversarial edges"));
    }
    let mut sorted: Vec<(f64, bool)> = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // average ascending ranks over tie groups
    let mut rank_sum_gen = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0;
        rank_sum_gen += avg * sorted[i..j].iter().filter(|p| !p.1).count() as f64;
        i = j;
    }
    let ng = n_gen as f64;
    Ok((rank_sum_gen - ng * (ng + 1.0) / 2.0) / (ng * n_adv as f64))
}

/// Which edges of a stream contribute to the metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountRule {
    All,
    GenuineOnly,
    /// Edges passing the stream filter; all edges when there is none.
    Kept,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamOptions {
    pub negatives: usize,
    pub seed: u64,
    pub count: CountRule,
    /// Edges failing the filter are not applied to memory.
    pub filter: Option<EdgeFilter>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StreamOutcome {
    pub ranks: Vec<usize>,
    /// Smallest negative pool size seen; below the requested count when the
    /// destination set is small.
    pub min_pool: usize,
    /// `(edge index, filter statistic, kept)` for every edge when filtering.
    pub filter_rows: Vec<(usize, f64, bool)>,
}

fn statistic(model: &TgnnModel, state: &TemporalState, e: &TemporalInteraction, flt: EdgeFilter) -> Result<f64> {
    let mut f = Forward::inference(model, state);
    let hu = f.embed(e.u, e.t)?;
    let hv = f.embed(e.v, e.t)?;
    Ok(match flt {
        EdgeFilter::Score { .. } => {
            let s = f.score(hu, hv);
            f.tape.scalar(s)
        }
        EdgeFilter::Cosine { .. } => f.cosine_value(hu, hv),
    })
}

/// Ranks every counted edge of `range` against pre-edge state, then applies
/// the edge to memory unless the filter drops it.
pub fn evaluate_stream(
    model: &TgnnModel,
    state: &mut TemporalState,
    g: &DynamicGraph,
    range: Range<usize>,
    opts: &StreamOptions,
) -> Result<StreamOutcome> {
    let mut out = StreamOutcome {
        min_pool: usize::MAX,
        ..StreamOutcome::default()
    };
    for i in range {
        let e = &g.interactions()[i];
        let kept = match opts.filter {
            None => true,
            Some(flt) => {
                let stat = statistic(model, state, e, flt)?;
                let kept = flt.keeps(stat);
                out.filter_rows.push((i, stat, kept));
                kept
            }
        };
        let counted = match opts.count {
            CountRule::All => true,
            CountRule::GenuineOnly => !e.is_adversarial,
            CountRule::Kept => kept,
        };
        if counted {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, i as u64));
            let negs = sample_negatives(g.destination_ids(), e.v, opts.negatives, &mut rng);
            out.min_pool = out.min_pool.min(negs.len());
            out.ranks.push(rank_with(model, state, e, &negs)?);
        }
        state.apply(model, e)?;
    }
    if out.min_pool == usize::MAX {
        out.min_pool = 0;
    }
    Ok(out)
}

/// MRR over `range` from a state already replayed to its start.
pub fn mrr(
    model: &TgnnModel,
    state: &mut TemporalState,
    g: &DynamicGraph,
    range: Range<usize>,
    seed: u64,
) -> Result<f64> {
    let opts = StreamOptions {
        negatives: DEFAULT_NEGATIVES,
        seed,
        count: CountRule::All,
        filter: None,
    };
    mrr_from_ranks(&evaluate_stream(model, state, g, range, &opts)?.ranks)
}

pub fn hit_at_k(
    model: &TgnnModel,
    state: &mut TemporalState,
    g: &DynamicGraph,
    range: Range<usize>,
    k: usize,
    seed: u64,
) -> Result<f64> {
    let opts = StreamOptions {
        negatives: DEFAULT_NEGATIVES,
        seed,
        count: CountRule::All,
        filter: None,
    };
    hit_at_k_from_ranks(&evaluate_stream(model, state, g, range, &opts)?.ranks, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Validation,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub split: Split,
    pub seed: u64,
    pub mrr: f64,
    pub hit10: f64,
    pub auroc: Option<f64>,
    pub num_evaluated: usize,
    pub negative_pool: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolOptions {
    pub negatives: usize,
    pub k: usize,
    pub seed: u64,
    /// Set for filtering defenses: validation counts only the edges this
    /// filter keeps. Memory still consumes every edge.
    pub filter: Option<EdgeFilter>,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        Self {
            negatives: DEFAULT_NEGATIVES,
            k: DEFAULT_K,
            seed: 0,
            filter: None,
        }
    }
}

/// Validation counts every edge (kept edges only under a filtering
/// defense); test counts ground-truth edges only and is never filtered.
/// Memory consumes every edge, adversarial ones included. A validation
/// filter that keeps nothing yields zero validation metrics.
pub fn evaluate_protocol(
    model: &TgnnModel,
    g: &DynamicGraph,
    splits: &SplitBundle,
    opts: &ProtocolOptions,
) -> Result<(MetricsReport, MetricsReport)> {
    let mut state = TemporalState::new(model, g.num_nodes());
    warm_replay(model, &mut state, &g.interactions()[splits.train.clone()])?;
    let report = |split, out: &StreamOutcome| -> Result<MetricsReport> {
        let empty_ok = split == Split::Validation && opts.filter.is_some() && out.ranks.is_empty();
        Ok(MetricsReport {
            split,
            seed: opts.seed,
            mrr: if empty_ok { 0.0 } else { mrr_from_ranks(&out.ranks)? },
            hit10: if empty_ok { 0.0 } else { hit_at_k_from_ranks(&out.ranks, opts.k)? },
            auroc: None,
            num_evaluated: out.ranks.len(),
            negative_pool: out.min_pool,
        })
    };
    let val = evaluate_stream(
        model,
        &mut state,
        g,
        splits.validation.clone(),
        &StreamOptions {
            negatives: opts.negatives,
            seed: derive_seed(opts.seed, 1),
            count: CountRule::Kept,
            filter: opts.filter,
        },
    )?;
    let test = evaluate_stream(
        model,
        &mut state,
        g,
        splits.test.clone(),
        &StreamOptions {
            negatives: opts.negatives,
            seed: derive_seed(opts.seed, 2),
            count: CountRule::GenuineOnly,
            filter: None,
        },
    )?;
    Ok((report(Split::Validation, &val)?, report(Split::Test, &test)?))
}

/// Sample mean and (n-1)-denominator standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tie_rule_is_pessimistic() {
        assert_eq!(rank_from_scores(0.5, &[0.5; 100]), 101);
        assert_eq!(rank_from_scores(0.9, &[0.1; 100]), 1);
        assert_eq!(rank_from_scores(0.0, &[0.1; 100]), 101);
    }

    #[test]
    fn mrr_arithmetic() {
        let m = mrr_from_ranks(&[1, 101]).unwrap();
        assert!((m - 100.0 * (1.0 + 1.0 / 101.0) / 2.0).abs() < 1e-12);
        assert_eq!(hit_at_k_from_ranks(&[10, 11], 10).unwrap(), 50.0);
        assert!(mrr_from_ranks(&[]).is_err());
    }

    #[test]
    fn auroc_hand_case() {
        let pairs = [
            (0.9, false),
            (0.8, false),
            (0.7, true),
            (0.6, false),
            (0.5, true),
            (0.4, true),
        ];
        assert!((auroc(&pairs).unwrap() - 8.0 / 9.0).abs() < 1e-12);
        assert_eq!(auroc(&[(0.1, true), (0.1, false)]).unwrap(), 0.5);
        assert!(auroc(&[(0.1, true)]).is_err());
    }

    #[test]
    fn negatives_exclude_truth_and_cap_at_pool() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let dest: Vec<NodeId> = (10..30).collect();
        let n = sample_negatives(&dest, 12, 100, &mut rng);
        assert_eq!(n.len(), 19);
        assert!(!n.contains(&12));
        let mut s = n.clone();
        s.sort();
        s.dedup();
        assert_eq!(s.len(), 19);
    }

    #[test]
    fn random_baselines() {
        assert!((expected_random_mrr(100) - 5.1458).abs() < 1e-3);
        assert!((expected_random_hit_at_k(100, 10) - 9.90099).abs() < 1e-4);
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-12);
    }
}
