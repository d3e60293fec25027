use std::collections::HashMap;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, Grads, Var};
use crate::ctdg::{batch_iter, DynamicGraph, NodeId, SplitBundle, TemporalInteraction};
use crate::error::{Error, Result};
use crate::eval::{evaluate_stream, mrr_from_ranks, CountRule, StreamOptions};
use crate::seed::derive_seed;

use super::forward::{Forward, SCORE_CLAMP};
use super::state::TemporalState;
use super::TgnnModel;

const VALIDATION_STREAM: u64 = 0x7661_6c69_6461_7465;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub negative_seed: u64,
    /// Negatives per edge when ranking validation edges.
    pub eval_negatives: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 600,
            epochs: 100,
            patience: 10,
            negative_seed: 0,
            eval_negatives: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.patience == 0 || self.eval_negatives == 0 {
            return Err(Error::invalid("batch_size, epochs, patience and eval_negatives must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Validation MRR after each completed epoch.
    pub validation_mrr: Vec<f64>,
    /// Mean training objective per epoch; `None` when the filter dropped
    /// every training edge.
    pub train_loss: Vec<Option<f64>>,
    pub best_epoch: usize,
    pub best_validation_mrr: f64,
    pub epochs_run: usize,
}

/// Pre-training edge filter: an edge is kept iff its statistic is `>= tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EdgeFilter {
    /// Statistic is the edge score.
    Score { tau: f64 },
    /// Statistic is the cosine similarity of the endpoint embeddings.
    Cosine { tau: f64 },
}

impl EdgeFilter {
    pub fn tau(&self) -> f64 {
        match *self {
            EdgeFilter::Score { tau } | EdgeFilter::Cosine { tau } => tau,
        }
    }

    pub fn keeps(&self, statistic: f64) -> bool {
        statistic >= self.tau()
    }
}

/// Customization points of the training loop used by the defenses.
pub trait TrainHooks {
    fn begin_epoch(&mut self, _epoch: usize, _total_epochs: usize) {}

    /// Filter applied to training batches and to validation counting.
    fn filter(&self) -> Option<EdgeFilter> {
        None
    }

    /// Called for every training edge when a filter is active.
    fn record(&mut self, _epoch: usize, _edge_index: usize, _statistic: f64, _kept: bool) {}

    /// Multiplier on the edge's link-loss term.
    fn edge_weight(&self, _edge_index: usize) -> f64 {
        1.0
    }

    /// `(lambda, theta)` of the temporal smoothness term.
    fn smoothness(&self) -> Option<(f64, f64)> {
        None
    }
}

/// Plain negative-sampling training.
#[derive(Debug, Clone, Copy, Default)]
pub struct PlainTraining;

impl TrainHooks for PlainTraining {}

/// Embedding of each node at its previous kept interaction and that
/// interaction's time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingCache {
    entries: HashMap<NodeId, (Vec<f64>, f64)>,
}

impl EmbeddingCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, u: NodeId) -> Option<(&[f64], f64)> {
        self.entries.get(&u).map(|(h, t)| (h.as_slice(), *t))
    }

    pub fn insert(&mut self, u: NodeId, h: Vec<f64>, t: f64) {
        self.entries.insert(u, (h, t));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub(crate) struct EdgeTerms {
    pub link: Var,
    pub smooth: Option<Var>,
    pub h_u: Var,
    pub h_v: Var,
}

/// `-Σ_i exp(-theta (t - t_i)) cos(h_i, cached h_i)` over the distinct
/// endpoints that have a cached embedding.
pub(crate) fn smoothness_term(
    f: &mut Forward<'_>,
    cache: &EmbeddingCache,
    nodes: &[(NodeId, Var)],
    t: f64,
    theta: f64,
) -> Option<Var> {
    let mut terms = Vec::new();
    for (k, &(node, h)) in nodes.iter().enumerate() {
        if nodes[..k].iter().any(|&(m, _)| m == node) {
            continue;
        }
        if let Some((prev, tp)) = cache.get(node) {
            let w = (-theta * (t - tp)).exp();
            let c = f.tape.cosine_to_const(h, prev.to_vec());
            terms.push(f.tape.scale(c, -w));
        }
    }
    if terms.is_empty() {
        None
    } else {
        Some(f.tape.sum(&terms))
    }
}

/// Link-loss term `-log ŷ_uvt - log(1 - ŷ_unt)` of one edge, optionally with
/// its smoothness term.
pub(crate) fn edge_terms(
    f: &mut Forward<'_>,
    e: &TemporalInteraction,
    negative: NodeId,
    smooth: Option<(&EmbeddingCache, f64)>,
) -> Result<EdgeTerms> {
    let h_u = f.embed(e.u, e.t)?;
    let h_v = f.embed(e.v, e.t)?;
    let h_n = f.embed(negative, e.t)?;
    let pos = f.score(h_u, h_v);
    let neg = f.score(h_u, h_n);
    let lp = f.tape.neg_log_clamped(pos, SCORE_CLAMP, 1.0 - SCORE_CLAMP);
    let one_minus = f.tape.one_minus(neg);
    let ln = f.tape.neg_log_clamped(one_minus, SCORE_CLAMP, 1.0 - SCORE_CLAMP);
    let link = f.tape.add(lp, ln);
    let smooth = match smooth {
        Some((cache, theta)) => smoothness_term(f, cache, &[(e.u, h_u), (e.v, h_v)], e.t, theta),
        None => None,
    };
    Ok(EdgeTerms {
        link,
        smooth,
        h_u,
        h_v,
    })
}

/// The filter statistic of one edge: its score or the cosine similarity of
/// its endpoint embeddings.
pub(crate) fn edge_statistic(f: &mut Forward<'_>, e: &TemporalInteraction, flt: EdgeFilter) -> Result<f64> {
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

fn check_batch(edges: &[TemporalInteraction], negatives: &[NodeId]) -> Result<()> {
    if edges.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if edges.len() != negatives.len() {
        return Err(Error::Dimension {
            expected: edges.len(),
            actual: negatives.len(),
        });
    }
    Ok(())
}

/// Mean link loss of a batch scored against `state`, with one negative
/// destination per edge. Memory is not updated.
pub fn link_loss(
    model: &TgnnModel,
    state: &TemporalState,
    edges: &[TemporalInteraction],
    negatives: &[NodeId],
) -> Result<f64> {
    check_batch(edges, negatives)?;
    let mut total = 0.0;
    for (e, &n) in edges.iter().zip(negatives) {
        let mut f = Forward::training(model, state, None);
        let t = edge_terms(&mut f, e, n, None)?;
        total += f.tape.scalar(t.link);
    }
    Ok(total / edges.len() as f64)
}

/// [`link_loss`] and its gradient with respect to every parameter.
pub fn link_loss_with_grads(
    model: &TgnnModel,
    state: &TemporalState,
    edges: &[TemporalInteraction],
    negatives: &[NodeId],
) -> Result<(f64, Grads)> {
    check_batch(edges, negatives)?;
    let inv = 1.0 / edges.len() as f64;
    let mut grads = model.params().zeros_like();
    let mut total = 0.0;
    for (e, &n) in edges.iter().zip(negatives) {
        let mut f = Forward::training(model, state, None);
        let t = edge_terms(&mut f, e, n, None)?;
        total += f.tape.scalar(t.link);
        let root = f.tape.scale(t.link, inv);
        f.tape.backward(root, &mut grads);
    }
    Ok((total * inv, grads))
}

/// One uniformly drawn destination per edge in `range`, never the true one.
pub fn sample_training_negatives(g: &DynamicGraph, range: Range<usize>, seed: u64) -> Result<Vec<NodeId>> {
    let dest = g.destination_ids();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    range
        .map(|i| {
            let v = g.interactions()[i].v;
            if dest.iter().all(|&d| d == v) {
                return Err(Error::invalid(format!("no negative destination available for edge {i}")));
            }
            loop {
                let n = dest[rng.random_range(0..dest.len())];
                if n != v {
                    return Ok(n);
                }
            }
        })
        .collect()
}

/// Applies one event to memory and the neighbor index.
pub fn update_memory(model: &TgnnModel, state: &mut TemporalState, e: &TemporalInteraction) -> Result<()> {
    state.apply(model, e)
}

/// Applies `edges` in order without touching parameters.
pub fn warm_replay(model: &TgnnModel, state: &mut TemporalState, edges: &[TemporalInteraction]) -> Result<()> {
    edges.iter().try_for_each(|e| state.apply(model, e))
}

/// Plain training; see [`train_with`].
pub fn train(model: &mut TgnnModel, g: &DynamicGraph, splits: &SplitBundle, cfg: &TrainConfig) -> Result<TrainReport> {
    train_with(model, g, splits, cfg, &mut PlainTraining)
}

/// Trains on `splits.train` with Adam, resetting memory every epoch and
/// selecting the parameters with the best validation MRR. Each batch is
/// scored against pre-batch memory; kept edges then update memory in order.
pub fn train_with(
    model: &mut TgnnModel,
    g: &DynamicGraph,
    splits: &SplitBundle,
    cfg: &TrainConfig,
    hooks: &mut dyn TrainHooks,
) -> Result<TrainReport> {
    cfg.validate()?;
    if splits.train.is_empty() || splits.validation.is_empty() {
        return Err(Error::invalid("train and validation splits must be non-empty"));
    }
    if splits.test.end > g.len() {
        return Err(Error::invalid("splits exceed the graph"));
    }
    let edges = g.interactions();
    let mut adam = Adam::new(model.params(), cfg.learning_rate);
    let mut report = TrainReport {
        best_validation_mrr: f64::NEG_INFINITY,
        ..TrainReport::default()
    };
    let mut best_params = model.params().clone();
    let batches = batch_iter(splits.train.len(), cfg.batch_size);
    let val_seed = derive_seed(cfg.negative_seed, VALIDATION_STREAM);

    for epoch in 0..cfg.epochs {
        hooks.begin_epoch(epoch, cfg.epochs);
        let filter = hooks.filter();
        let smooth = hooks.smoothness().filter(|(lambda, _)| *lambda > 0.0);
        let negatives = sample_training_negatives(
            g,
            splits.train.clone(),
            derive_seed(cfg.negative_seed, epoch as u64),
        )?;
        let dropout_base = derive_seed(model.config().seed, epoch as u64);
        let mut state = TemporalState::new(model, g.num_nodes());
        let mut cache = EmbeddingCache::new();
        let mut epoch_loss = 0.0;
        let mut loss_batches = 0usize;

        for (b, local) in batches.iter().enumerate() {
            let range = splits.train.start + local.start..splits.train.start + local.end;
            let kept: Vec<usize> = match filter {
                None => range.collect(),
                Some(flt) => {
                    let mut f = Forward::inference(model, &state);
                    let mut kept = Vec::with_capacity(range.len());
                    for i in range {
                        let stat = edge_statistic(&mut f, &edges[i], flt)?;
                        let keep = flt.keeps(stat);
                        hooks.record(epoch, i, stat, keep);
                        if keep {
                            kept.push(i);
                        }
                    }
                    kept
                }
            };
            if kept.is_empty() {
                continue;
            }
            let inv = 1.0 / kept.len() as f64;
            let mut grads = model.params().zeros_like();
            let mut batch_loss = 0.0;
            let mut pending = Vec::new();
            for &i in &kept {
                let e = &edges[i];
                let neg = negatives[i - splits.train.start];
                let mut f = Forward::training(model, &state, Some(derive_seed(dropout_base, i as u64)));
                let terms = edge_terms(&mut f, e, neg, smooth.map(|(_, theta)| (&cache, theta)))?;
                let w = hooks.edge_weight(i);
                let mut obj = if w == 1.0 {
                    terms.link
                } else {
                    f.tape.scale(terms.link, w)
                };
                if let (Some((lambda, _)), Some(s)) = (smooth, terms.smooth) {
                    let ls = f.tape.scale(s, lambda);
                    obj = f.tape.add(obj, ls);
                }
                batch_loss += f.tape.scalar(obj);
                let root = f.tape.scale(obj, inv);
                f.tape.backward(root, &mut grads);
                if smooth.is_some() {
                    pending.push((e.u, f.tape.value(terms.h_u).to_vec(), e.t));
                    pending.push((e.v, f.tape.value(terms.h_v).to_vec(), e.t));
                }
            }
            let batch_loss = batch_loss * inv;
            if !batch_loss.is_finite() || !grads.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    loss: batch_loss,
                });
            }
            for &i in &kept {
                state.apply(model, &edges[i])?;
            }
            adam.step(model.params_mut(), &grads);
            for (u, h, t) in pending {
                cache.insert(u, h, t);
            }
            epoch_loss += batch_loss;
            loss_batches += 1;
        }

        let outcome = evaluate_stream(
            model,
            &mut state,
            g,
            splits.validation.clone(),
            &StreamOptions {
                negatives: cfg.eval_negatives,
                seed: val_seed,
                count: CountRule::Kept,
                filter,
            },
        )?;
        let val_mrr = mrr_from_ranks(&outcome.ranks).unwrap_or(0.0);
        let mean_loss = (loss_batches > 0).then(|| epoch_loss / loss_batches as f64);
        log::info!("epoch {epoch}: loss {mean_loss:?}, validation MRR {val_mrr:.3}");
        report.validation_mrr.push(val_mrr);
        report.train_loss.push(mean_loss);
        report.epochs_run = epoch + 1;
        if val_mrr > report.best_validation_mrr {
            report.best_validation_mrr = val_mrr;
            report.best_epoch = epoch;
            best_params = model.params().clone();
        }
        if 2 * (epoch + 1) >= cfg.epochs && epoch - report.best_epoch >= cfg.patience {
            log::info!("early stop at epoch {epoch}, best epoch {}", report.best_epoch);
            break;
        }
    }
    *model.params_mut() = best_params;
    Ok(report)
}
