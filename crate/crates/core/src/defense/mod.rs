//! T-Shield robust training (scheduled score filtering plus temporal
//! smoothness) and the TGN-SVD and TGN-Cosine baselines.

mod ledger;
mod svd;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::Grads;
use crate::ctdg::{DynamicGraph, SplitBundle, TemporalInteraction};
use crate::error::{Error, Result};
use crate::tgnn::{
    edge_statistic, smoothness_term, train_with, EdgeFilter, EmbeddingCache, Forward, PlainTraining, TemporalState,
    TgnnModel, TrainConfig, TrainHooks, TrainReport,
};

pub use ledger::{classify_adversarial, FilterLedger, LedgerRow};
pub use svd::tgnsvd_weights;

pub const DEFAULT_THETA: f64 = 0.01;

/// Cosine-annealed filtering threshold rising from `tau_start` to `tau_end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSchedule {
    pub tau_start: f64,
    pub tau_end: f64,
    pub total_epochs: usize,
}

impl ThresholdSchedule {
    pub fn new(tau_start: f64, tau_end: f64, total_epochs: usize) -> Result<Self> {
        let s = Self {
            tau_start,
            tau_end,
            total_epochs,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.tau_start && self.tau_start <= self.tau_end && self.tau_end <= 1.0) {
            return Err(Error::invalid(format!(
                "need 0 <= tau_start <= tau_end <= 1, got {} and {}",
                self.tau_start, self.tau_end
            )));
        }
        if self.total_epochs == 0 {
            return Err(Error::invalid("schedule needs at least one epoch"));
        }
        Ok(())
    }

    /// `tau_end + (tau_start - tau_end) (1 + cos(pi e / E)) / 2`.
    pub fn threshold_at(&self, epoch: usize) -> Result<f64> {
        if epoch > self.total_epochs {
            return Err(Error::invalid(format!(
                "epoch {epoch} beyond schedule of {} epochs",
                self.total_epochs
            )));
        }
        let c = (PI * epoch as f64 / self.total_epochs as f64).cos();
        Ok(self.tau_end + (self.tau_start - self.tau_end) * (1.0 + c) / 2.0)
    }
}

pub fn threshold_at(s: &ThresholdSchedule, epoch: usize) -> Result<f64> {
    s.threshold_at(epoch)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefenseVariant {
    /// No defense.
    None,
    TShield,
    /// Filtering only.
    TShieldF,
    TgnSvd,
    TgnCosine,
}

impl fmt::Display for DefenseVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DefenseVariant::None => "none",
            DefenseVariant::TShield => "tshield",
            DefenseVariant::TShieldF => "tshield_f",
            DefenseVariant::TgnSvd => "tgn_svd",
            DefenseVariant::TgnCosine => "tgn_cosine",
        })
    }
}

impl FromStr for DefenseVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => DefenseVariant::None,
            "tshield" => DefenseVariant::TShield,
            "tshield_f" => DefenseVariant::TShieldF,
            "tgn_svd" => DefenseVariant::TgnSvd,
            "tgn_cosine" => DefenseVariant::TgnCosine,
            other => return Err(Error::invalid(format!("unknown defense {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefenseConfig {
    pub schedule: ThresholdSchedule,
    pub lambda: f64,
    pub theta: f64,
    pub variant: DefenseVariant,
    pub svd_rank: usize,
    pub tau_cosine: f64,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        Self {
            schedule: ThresholdSchedule {
                tau_start: 0.6,
                tau_end: 0.9,
                total_epochs: 100,
            },
            lambda: 0.05,
            theta: DEFAULT_THETA,
            variant: DefenseVariant::TShield,
            svd_rank: 100,
            tau_cosine: 0.1,
        }
    }
}

impl DefenseConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda must be non-negative"));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::invalid("theta must be positive"));
        }
        if self.svd_rank == 0 {
            return Err(Error::invalid("svd_rank must be at least 1"));
        }
        if !(-1.0..=1.0).contains(&self.tau_cosine) {
            return Err(Error::invalid("tau_cosine must lie in [-1, 1]"));
        }
        Ok(())
    }
}

/// Kept and dropped edge indices of one batch with their ledger rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
    pub rows: Vec<LedgerRow>,
}

/// Scores every edge of a batch against the pre-batch memory (no dropout),
/// splits it by `filter`, then applies only the kept edges to `state`.
/// Edge `k` of `batch` is recorded as index `first_index + k`.
pub fn filter_batch(
    model: &TgnnModel,
    state: &mut TemporalState,
    batch: &[TemporalInteraction],
    first_index: usize,
    epoch: usize,
    filter: EdgeFilter,
) -> Result<FilterOutcome> {
    let mut out = FilterOutcome::default();
    {
        let mut f = Forward::inference(model, state);
        for (k, e) in batch.iter().enumerate() {
            let score = edge_statistic(&mut f, e, filter)?;
            let kept = filter.keeps(score);
            let edge_index = first_index + k;
            if kept {
                out.kept.push(edge_index);
            } else {
                out.dropped.push(edge_index);
            }
            out.rows.push(LedgerRow {
                epoch,
                edge_index,
                score,
                kept,
            });
        }
    }
    for &i in &out.kept {
        state.apply(model, &batch[i - first_index])?;
    }
    Ok(out)
}

/// [`filter_batch`] on the cosine similarity of the endpoint embeddings.
pub fn tgncosine_filter(
    model: &TgnnModel,
    state: &mut TemporalState,
    batch: &[TemporalInteraction],
    first_index: usize,
    epoch: usize,
    tau_cosine: f64,
) -> Result<FilterOutcome> {
    filter_batch(model, state, batch, first_index, epoch, EdgeFilter::Cosine { tau: tau_cosine })
}

fn smoothness_impl(
    model: &TgnnModel,
    state: &TemporalState,
    kept: &[TemporalInteraction],
    cache: &EmbeddingCache,
    theta: f64,
    mut grads: Option<&mut Grads>,
) -> Result<f64> {
    let mut total = 0.0;
    for e in kept {
        let mut f = Forward::training(model, state, None);
        let hu = f.embed(e.u, e.t)?;
        let hv = f.embed(e.v, e.t)?;
        if let Some(term) = smoothness_term(&mut f, cache, &[(e.u, hu), (e.v, hv)], e.t, theta) {
            total += f.tape.scalar(term);
            if let Some(g) = grads.as_deref_mut() {
                f.tape.backward(term, g);
            }
        }
    }
    Ok(total)
}

/// `-Σ_edges Σ_endpoints exp(-theta Δt) cos(h_i(t), cached h_i)`, summed over
/// `kept`; endpoints without a cached embedding contribute nothing.
pub fn temporal_smoothness_loss(
    model: &TgnnModel,
    state: &TemporalState,
    kept: &[TemporalInteraction],
    cache: &EmbeddingCache,
    theta: f64,
) -> Result<f64> {
    smoothness_impl(model, state, kept, cache, theta, None)
}

/// [`temporal_smoothness_loss`] and its parameter gradient; cached
/// embeddings are constants.
pub fn temporal_smoothness_with_grads(
    model: &TgnnModel,
    state: &TemporalState,
    kept: &[TemporalInteraction],
    cache: &EmbeddingCache,
    theta: f64,
) -> Result<(f64, Grads)> {
    let mut grads = model.params().zeros_like();
    let l = smoothness_impl(model, state, kept, cache, theta, Some(&mut grads))?;
    Ok((l, grads))
}

struct ShieldHooks {
    schedule: Option<ThresholdSchedule>,
    cosine: Option<f64>,
    smoothness: Option<(f64, f64)>,
    weights: Option<(usize, Vec<f64>)>,
    tau: f64,
    ledger: FilterLedger,
}

impl TrainHooks for ShieldHooks {
    fn begin_epoch(&mut self, epoch: usize, _total_epochs: usize) {
        if let Some(s) = &self.schedule {
            // past the schedule the threshold stays at tau_end
            self.tau = s.threshold_at(epoch.min(s.total_epochs)).unwrap_or(s.tau_end);
        }
    }

    fn filter(&self) -> Option<EdgeFilter> {
        match (self.schedule, self.cosine) {
            (Some(_), _) => Some(EdgeFilter::Score { tau: self.tau }),
            (None, Some(tau)) => Some(EdgeFilter::Cosine { tau }),
            (None, None) => None,
        }
    }

    fn record(&mut self, epoch: usize, edge_index: usize, score: f64, kept: bool) {
        self.ledger.push(LedgerRow {
            epoch,
            edge_index,
            score,
            kept,
        });
    }

    fn edge_weight(&self, edge_index: usize) -> f64 {
        match &self.weights {
            Some((start, w)) => w[edge_index - start],
            None => 1.0,
        }
    }

    fn smoothness(&self) -> Option<(f64, f64)> {
        self.smoothness
    }
}

/// Result of a defended training run.
#[derive(Debug, Clone, PartialEq)]
pub struct DefenseRun {
    pub report: TrainReport,
    pub ledger: FilterLedger,
}

/// T-Shield training: per epoch the scheduled threshold filters every train
/// batch, and the objective is the link loss on kept edges plus
/// `lambda` times the smoothness term (zero for the filtering-only variant).
pub fn train_tshield(
    model: &mut TgnnModel,
    g: &DynamicGraph,
    splits: &SplitBundle,
    cfg: &DefenseConfig,
    train_cfg: &TrainConfig,
) -> Result<DefenseRun> {
    let lambda = match cfg.variant {
        DefenseVariant::TShield => cfg.lambda,
        DefenseVariant::TShieldF => 0.0,
        other => return Err(Error::invalid(format!("train_tshield cannot run variant {other}"))),
    };
    train_defended(model, g, splits, &DefenseConfig { lambda, ..cfg.clone() }, train_cfg)
}

/// Trains with whichever defense `cfg.variant` names.
pub fn train_defended(
    model: &mut TgnnModel,
    g: &DynamicGraph,
    splits: &SplitBundle,
    cfg: &DefenseConfig,
    train_cfg: &TrainConfig,
) -> Result<DefenseRun> {
    cfg.validate()?;
    let mut hooks = ShieldHooks {
        schedule: None,
        cosine: None,
        smoothness: None,
        weights: None,
        tau: 0.0,
        ledger: FilterLedger::new(),
    };
    match cfg.variant {
        DefenseVariant::None => {
            let report = train_with(model, g, splits, train_cfg, &mut PlainTraining)?;
            return Ok(DefenseRun {
                report,
                ledger: FilterLedger::new(),
            });
        }
        DefenseVariant::TShield => {
            hooks.schedule = Some(cfg.schedule);
            hooks.smoothness = Some((cfg.lambda, cfg.theta));
        }
        DefenseVariant::TShieldF => hooks.schedule = Some(cfg.schedule),
        DefenseVariant::TgnCosine => hooks.cosine = Some(cfg.tau_cosine),
        DefenseVariant::TgnSvd => {
            let train_edges = &g.interactions()[splits.train.clone()];
            let w = tgnsvd_weights(train_edges, cfg.svd_rank, g.bipartite())?;
            hooks.weights = Some((splits.train.start, w));
        }
    }
    let report = train_with(model, g, splits, train_cfg, &mut hooks)?;
    Ok(DefenseRun {
        report,
        ledger: hooks.ledger,
    })
}
