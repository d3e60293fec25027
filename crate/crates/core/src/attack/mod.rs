//! Poisoning attacks: surrogate-guided selection (naive, Low-K, Hungarian)
//! and five structural baselines, all injecting edges batch by batch under
//! budget, timing, locality and per-node multiplicity constraints.

mod assignment;
mod baseline;
mod constraints;
mod select;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ctdg::{
    batch_iter, fit_feature_kde, fit_time_kde, DynamicGraph, NodeId, NodePool, SplitBundle, TemporalInteraction,
    DEFAULT_BANDWIDTH,
};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::tgnn::{train, TemporalState, TgnnConfig, TgnnModel, TrainConfig, TrainReport};

pub use assignment::{solve_assignment, solve_assignment_partial, Assignment, CostMatrix};
pub use baseline::{baseline_costs, random_pairs, BaselineKind, PlainGraph, PAGERANK_DAMPING, PAGERANK_TOLERANCE};
pub use constraints::{validate_constraints, ComplianceReport, MultiplicityViolation};
pub use select::{hungarian_pool, low_k_select, naive_select, score_pool, PoolSelection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Naive,
    LowK,
    Hungarian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    TSpear,
    Baseline(BaselineKind),
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackKind::TSpear => "tspear",
            AttackKind::Baseline(BaselineKind::Random) => "random",
            AttackKind::Baseline(BaselineKind::Pa) => "pa",
            AttackKind::Baseline(BaselineKind::Jaccard) => "jaccard",
            AttackKind::Baseline(BaselineKind::StructD) => "struct_d",
            AttackKind::Baseline(BaselineKind::StructPr) => "struct_pr",
        })
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "tspear" => AttackKind::TSpear,
            "random" => AttackKind::Baseline(BaselineKind::Random),
            "pa" => AttackKind::Baseline(BaselineKind::Pa),
            "jaccard" => AttackKind::Baseline(BaselineKind::Jaccard),
            "struct_d" => AttackKind::Baseline(BaselineKind::StructD),
            "struct_pr" => AttackKind::Baseline(BaselineKind::StructPr),
            other => return Err(Error::invalid(format!("unknown attack kind {other:?}"))),
        })
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Selection::Naive => "naive",
            Selection::LowK => "low_k",
            Selection::Hungarian => "hungarian",
        })
    }
}

impl FromStr for Selection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Selection::Naive),
            "low_k" => Ok(Selection::LowK),
            "hungarian" => Ok(Selection::Hungarian),
            other => Err(Error::invalid(format!("unknown selection {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// Perturbation rate in `(0, 1]`.
    pub p: f64,
    /// Window length `W`; the attack batch is `W / 2` edges.
    pub window: usize,
    pub selection: Selection,
    pub seed: u64,
    /// KDE bandwidth on min-max normalized values.
    pub bandwidth: f64,
    /// Significance level of the timing check.
    pub ks_alpha: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            kind: AttackKind::TSpear,
            p: 0.1,
            window: 1200,
            selection: Selection::Hungarian,
            seed: 0,
            bandwidth: DEFAULT_BANDWIDTH,
            ks_alpha: 0.01,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::invalid("perturbation rate must lie in (0, 1]"));
        }
        if self.window < 2 {
            return Err(Error::invalid("window must be at least 2"));
        }
        if !(self.bandwidth > 0.0) {
            return Err(Error::invalid("bandwidth must be positive"));
        }
        if !(self.ks_alpha > 0.0 && self.ks_alpha < 1.0) {
            return Err(Error::invalid("ks_alpha must lie in (0, 1)"));
        }
        Ok(())
    }

    /// `|B| = floor(W / 2)`.
    pub fn batch_size(&self) -> usize {
        self.window / 2
    }

    /// `K = floor(p |B|)`.
    pub fn per_batch_k(&self) -> usize {
        (self.p * self.batch_size() as f64 + 1e-9).floor() as usize
    }

    /// `floor(p |E|)`.
    pub fn budget(&self, num_edges: usize) -> usize {
        (self.p * num_edges as f64 + 1e-9).floor() as usize
    }
}

/// What happened in one attack batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub batch: usize,
    /// Requested edges for this batch.
    pub k: usize,
    /// Per-node multiplicity bound `ceil(k / E_max)`.
    pub n: usize,
    pub selected: usize,
    pub skipped: bool,
}

/// Generated adversarial edges and the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSet {
    pub edges: Vec<TemporalInteraction>,
    /// Generating batch of each edge.
    pub batch_ids: Vec<usize>,
    pub batches: Vec<BatchRecord>,
    pub config: AttackConfig,
}

impl PerturbationSet {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Multiplicity bound `N` of a batch, if it was attacked.
    pub fn batch_n(&self, batch: usize) -> Option<usize> {
        self.batches
            .iter()
            .find(|r| r.batch == batch && !r.skipped)
            .map(|r| r.n)
    }
}

/// Surrogate model used by the surrogate-guided attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub model: TgnnConfig,
    pub train: TrainConfig,
}

/// Corrupted graph with its remapped splits and per-edge batch ids
/// (`None` for genuine edges).
#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub graph: DynamicGraph,
    pub splits: SplitBundle,
    pub batch_ids: Vec<Option<usize>>,
    pub perturbations: PerturbationSet,
    pub surrogate: Option<(TgnnModel, TrainReport)>,
}

trait Strategy {
    fn select(
        &mut self,
        pool: &NodePool,
        times: &[f64],
        k: usize,
        n: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<(NodeId, NodeId)>>;

    /// Consumes a batch of the corrupted stream in chronological order.
    fn advance(&mut self, merged: &[TemporalInteraction]) -> Result<()>;
}

struct SurrogateStrategy<'m> {
    model: &'m TgnnModel,
    state: TemporalState,
    selection: Selection,
}

fn to_nodes(c: &CostMatrix, pairs: &[(usize, usize)]) -> Vec<(NodeId, NodeId)> {
    pairs.iter().map(|&(i, j)| (c.rows[i], c.cols[j])).collect()
}

impl Strategy for SurrogateStrategy<'_> {
    fn select(
        &mut self,
        pool: &NodePool,
        times: &[f64],
        k: usize,
        _n: usize,
        _rng: &mut ChaCha8Rng,
    ) -> Result<Vec<(NodeId, NodeId)>> {
        match self.selection {
            Selection::Hungarian => {
                let c = score_pool(self.model, &self.state, pool, times[0])?;
                Ok(to_nodes(&c, &hungarian_pool(&c, k)?.pairs))
            }
            Selection::LowK => {
                let c = score_pool(self.model, &self.state, pool, times[0])?;
                let pairs = low_k_select(&c, k.min(select::feasible_count(&c)))?;
                Ok(to_nodes(&c, &pairs))
            }
            Selection::Naive => {
                let mut tmp = self.state.clone();
                let mut out = Vec::with_capacity(times.len());
                for &t in times {
                    let (u, v) = naive_select(self.model, &tmp, pool, t)?;
                    let mut e = TemporalInteraction::new(u, v, t);
                    e.is_adversarial = true;
                    tmp.apply(self.model, &e)?;
                    out.push((u, v));
                }
                Ok(out)
            }
        }
    }

    fn advance(&mut self, merged: &[TemporalInteraction]) -> Result<()> {
        merged.iter().try_for_each(|e| self.state.apply(self.model, e))
    }
}

struct BaselineStrategy {
    kind: BaselineKind,
    plain: PlainGraph,
}

impl Strategy for BaselineStrategy {
    fn select(
        &mut self,
        pool: &NodePool,
        _times: &[f64],
        k: usize,
        n: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<(NodeId, NodeId)>> {
        if self.kind == BaselineKind::Random {
            return Ok(random_pairs(pool, k, n, rng));
        }
        let c = baseline_costs(self.kind, &self.plain, pool)?;
        Ok(to_nodes(&c, &hungarian_pool(&c, k)?.pairs))
    }

    fn advance(&mut self, merged: &[TemporalInteraction]) -> Result<()> {
        for e in merged {
            self.plain.add(e.u, e.v);
        }
        Ok(())
    }
}

fn pool_too_small(pool: &NodePool) -> bool {
    pool.max_disjoint_edges() == 0 || pool.node_count() < 2
}

/// Genuine then adversarial edges of one batch in chronological order, genuine first on ties.
fn merge_batch(genuine: &[TemporalInteraction], injected: &[TemporalInteraction]) -> Vec<TemporalInteraction> {
    let mut all: Vec<TemporalInteraction> = genuine.iter().chain(injected).cloned().collect();
    all.sort_by(|a, b| a.t.total_cmp(&b.t));
    all
}

fn run_batched(g: &DynamicGraph, cfg: &AttackConfig, strategy: &mut dyn Strategy) -> Result<PerturbationSet> {
    cfg.validate()?;
    let edges = g.interactions();
    let batches = batch_iter(g.len(), cfg.batch_size().max(1));
    let k = cfg.per_batch_k();
    let budget = cfg.budget(g.len());
    let mut time_kde = fit_time_kde(edges, cfg.bandwidth, derive_seed(cfg.seed, 1))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 2));
    let mut out = PerturbationSet {
        edges: Vec::new(),
        batch_ids: Vec::new(),
        batches: Vec::new(),
        config: cfg.clone(),
    };
    for (b, range) in batches.iter().enumerate() {
        let mut injected = Vec::new();
        if b > 0 && k > 0 {
            let k_b = k.min(budget - out.edges.len());
            let pool = NodePool::from_edges(&edges[batches[b - 1].clone()], g.bipartite());
            let mut record = BatchRecord {
                batch: b,
                k: k_b,
                n: 0,
                selected: 0,
                skipped: true,
            };
            if k_b == 0 || pool_too_small(&pool) {
                log::warn!("attack batch {b} skipped (pool or budget exhausted)");
            } else {
                let n = k_b.div_ceil(pool.max_disjoint_edges());
                let (lo, hi) = (edges[range.start].t, edges[range.end - 1].t);
                let mut times = time_kde.sample_times_in(k_b, lo, hi)?;
                let pairs = strategy.select(&pool, &times, k_b, n, &mut rng)?;
                times.shuffle(&mut rng);
                times.truncate(pairs.len());
                let mut feats = match g.feature_dim() {
                    Some(_) => {
                        let start = range.start.saturating_sub(cfg.window);
                        Some(fit_feature_kde(
                            &edges[start..range.start],
                            cfg.bandwidth,
                            derive_seed(cfg.seed, 1_000_000 + b as u64),
                        )?)
                    }
                    None => None,
                };
                for ((u, v), t) in pairs.into_iter().zip(times) {
                    let mut e = TemporalInteraction::new(u, v, t);
                    if let Some(fk) = feats.as_mut() {
                        e = e.with_features(fk.sample());
                    }
                    e.is_adversarial = true;
                    injected.push(e);
                }
                record.n = n;
                record.selected = injected.len();
                record.skipped = false;
            }
            out.batches.push(record);
        }
        // chronological order within the batch so memory replay sees the corrupted stream
        injected.sort_by(|a, b| a.t.total_cmp(&b.t));
        strategy.advance(&merge_batch(&edges[range.clone()], &injected))?;
        out.batch_ids.extend(std::iter::repeat_n(b, injected.len()));
        out.edges.extend(injected);
    }
    Ok(out)
}

/// Interleaves the perturbations into the clean graph (genuine edges first on
/// equal timestamps) and returns per-edge batch ids.
pub fn inject(g: &DynamicGraph, pset: &PerturbationSet) -> Result<(DynamicGraph, Vec<Option<usize>>)> {
    let mut rows: Vec<(TemporalInteraction, Option<usize>)> = g
        .interactions()
        .iter()
        .map(|e| (e.clone(), None))
        .chain(pset.edges.iter().cloned().zip(pset.batch_ids.iter().map(|&b| Some(b))))
        .collect();
    rows.sort_by(|a, b| a.0.t.total_cmp(&b.0.t));
    let (edges, ids): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    Ok((g.with_interactions(edges)?, ids))
}

/// Split boundaries of the corrupted graph: each boundary sits at the
/// position of the genuine edge that started the split in the clean graph.
pub fn remap_splits(corrupted: &DynamicGraph, clean: &SplitBundle) -> Result<SplitBundle> {
    let mut genuine_seen = 0usize;
    let mut val_start = None;
    let mut test_start = None;
    for (i, e) in corrupted.interactions().iter().enumerate() {
        if e.is_adversarial {
            continue;
        }
        if genuine_seen == clean.validation.start && val_start.is_none() {
            val_start = Some(i);
        }
        if genuine_seen == clean.test.start && test_start.is_none() {
            test_start = Some(i);
        }
        genuine_seen += 1;
    }
    if genuine_seen != clean.total() {
        return Err(Error::invalid("splits do not match the clean graph"));
    }
    let (v, t) = match (val_start, test_start) {
        (Some(v), Some(t)) => (v, t),
        _ => return Err(Error::invalid("split boundary not found")),
    };
    Ok(SplitBundle {
        train: 0..v,
        validation: v..t,
        test: t..corrupted.len(),
    })
}

fn assemble(
    g: &DynamicGraph,
    splits: &SplitBundle,
    pset: PerturbationSet,
    surrogate: Option<(TgnnModel, TrainReport)>,
) -> Result<AttackOutcome> {
    let (graph, batch_ids) = inject(g, &pset)?;
    let splits = remap_splits(&graph, splits)?;
    Ok(AttackOutcome {
        graph,
        splits,
        batch_ids,
        perturbations: pset,
        surrogate,
    })
}

/// Trains a surrogate on the clean training split, then attacks every batch
/// of the whole timeline with frozen surrogate parameters while replaying
/// memory over the corrupted stream.
pub fn run_tspear(
    g: &DynamicGraph,
    splits: &SplitBundle,
    cfg: &AttackConfig,
    surrogate: &SurrogateConfig,
) -> Result<AttackOutcome> {
    cfg.validate()?;
    if cfg.kind != AttackKind::TSpear {
        return Err(Error::invalid("run_tspear needs kind = tspear"));
    }
    let mut model = TgnnModel::new(surrogate.model.clone())?;
    let report = train(&mut model, g, splits, &surrogate.train).map_err(|e| e.in_stage("surrogate"))?;
    let pset = {
        let mut strategy = SurrogateStrategy {
            model: &model,
            state: TemporalState::new(&model, g.num_nodes()),
            selection: cfg.selection,
        };
        run_batched(g, cfg, &mut strategy)?
    };
    assemble(g, splits, pset, Some((model, report)))
}

/// Surrogate-guided attack with an already trained surrogate.
pub fn run_tspear_with(
    g: &DynamicGraph,
    splits: &SplitBundle,
    cfg: &AttackConfig,
    model: &TgnnModel,
) -> Result<AttackOutcome> {
    let mut strategy = SurrogateStrategy {
        model,
        state: TemporalState::new(model, g.num_nodes()),
        selection: cfg.selection,
    };
    let pset = run_batched(g, cfg, &mut strategy)?;
    assemble(g, splits, pset, None)
}

/// Baseline attack with the same batching, timing and constraint machinery;
/// statistics come from the plain graph of every edge before the batch.
pub fn baseline_attack(
    g: &DynamicGraph,
    splits: &SplitBundle,
    cfg: &AttackConfig,
    kind: BaselineKind,
) -> Result<AttackOutcome> {
    if kind == BaselineKind::Jaccard && g.bipartite() {
        return Err(Error::invalid("jaccard cannot be applied to bipartite graphs"));
    }
    let mut strategy = BaselineStrategy {
        kind,
        plain: PlainGraph::new(g.num_nodes()),
    };
    let pset = run_batched(g, cfg, &mut strategy)?;
    assemble(g, splits, pset, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_arithmetic() {
        let cfg = AttackConfig {
            p: 0.3,
            window: 1200,
            ..AttackConfig::default()
        };
        assert_eq!(cfg.batch_size(), 600);
        assert_eq!(cfg.per_batch_k(), 180);
        assert_eq!(cfg.budget(2000), 600);
    }

    #[test]
    fn kinds_parse() {
        for s in ["tspear", "random", "pa", "jaccard", "struct_d", "struct_pr"] {
            assert_eq!(s.parse::<AttackKind>().unwrap().to_string(), s);
        }
        assert!("x".parse::<AttackKind>().is_err());
    }
}
