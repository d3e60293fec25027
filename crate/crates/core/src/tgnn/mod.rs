//! Memory-based temporal graph network: cosine time encoder, GRU node memory,
//! two-head temporal attention over recent neighbors, and a two-layer MLP
//! edge scorer. The same model serves as attack surrogate, victim, and
//! defense backbone.

mod checkpoint;
mod forward;
mod state;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParamStore};
use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use forward::{
    compute_message, embed, encode_time, score_edge, score_edge_pair, Forward, PairScorer,
    SCORE_CLAMP,
};
pub use state::{MemoryStep, Neighbor, NeighborIndex, NodeMemoryBank, TemporalState};
pub(crate) use train::{edge_statistic, smoothness_term};
pub use train::{
    link_loss, link_loss_with_grads, sample_training_negatives, train, train_with, update_memory,
    warm_replay, EdgeFilter, EmbeddingCache, PlainTraining, TrainConfig, TrainHooks, TrainReport,
};

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TgnnConfig {
    /// Node memory and embedding dimension `d`.
    pub memory_dim: usize,
    pub time_dim: usize,
    /// Edge feature dimension; 0 for unattributed graphs.
    pub feature_dim: usize,
    pub heads: usize,
    /// Number of most recent neighbors attended over.
    pub neighbors: usize,
    pub layers: usize,
    /// Dropout on attention weights, training only.
    pub dropout: f64,
    pub seed: u64,
}

impl Default for TgnnConfig {
    fn default() -> Self {
        Self {
            memory_dim: 100,
            time_dim: 100,
            feature_dim: 0,
            heads: 2,
            neighbors: 10,
            layers: 1,
            dropout: 0.2,
            seed: 0,
        }
    }
}

impl TgnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.memory_dim == 0 || self.time_dim == 0 || self.heads == 0 || self.neighbors == 0 {
            return Err(Error::invalid("model dimensions must be positive"));
        }
        if self.memory_dim % self.heads != 0 {
            return Err(Error::invalid(format!(
                "memory_dim {} not divisible by {} heads",
                self.memory_dim, self.heads
            )));
        }
        if self.layers != 1 {
            return Err(Error::invalid("only single-layer attention is supported"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("dropout must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn message_dim(&self) -> usize {
        2 * self.memory_dim + self.time_dim + self.feature_dim
    }
}

/// Handles into the parameter store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamIds {
    pub omega: ParamId,
    pub phi: ParamId,
    pub gru_wz: ParamId,
    pub gru_uz: ParamId,
    pub gru_bz: ParamId,
    pub gru_wr: ParamId,
    pub gru_ur: ParamId,
    pub gru_br: ParamId,
    pub gru_wc: ParamId,
    pub gru_uc: ParamId,
    pub gru_bc: ParamId,
    pub att_wq: ParamId,
    pub att_bq: ParamId,
    pub att_wk: ParamId,
    pub att_bk: ParamId,
    pub att_wv: ParamId,
    pub att_bv: ParamId,
    pub att_wo: ParamId,
    pub att_bo: ParamId,
    pub clf_w1: ParamId,
    pub clf_b1: ParamId,
    pub clf_w2: ParamId,
    pub clf_b2: ParamId,
}

/// Learnable time encoder `cos(omega * dt + phi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeEncoderParams {
    pub omega: Vec<f64>,
    pub phi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TgnnModel {
    config: TgnnConfig,
    params: ParamStore,
    ids: ParamIds,
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f64> {
    let bound = 1.0 / (cols as f64).sqrt();
    (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect()
}

impl TgnnModel {
    /// Weights uniform in `±1/sqrt(fan_in)`, zero biases, geometric time
    /// frequencies `omega_j = 10^(-9 j / (d_t - 1))`, zero phases.
    pub fn new(config: TgnnConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.memory_dim;
        let dt = config.time_dim;
        let de = config.feature_dim;
        let msg = config.message_dim();
        let mut p = ParamStore::new();
        let omega = (0..dt)
            .map(|j| {
                if dt == 1 {
                    1.0
                } else {
                    10f64.powf(-9.0 * j as f64 / (dt - 1) as f64)
                }
            })
            .collect();
        let omega = p.add("time.omega", dt, 1, omega);
        let phi = p.add("time.phi", dt, 1, vec![0.0; dt]);
        let mut mat = |p: &mut ParamStore, name: &str, rows: usize, cols: usize| {
            let w = uniform_matrix(&mut rng, rows, cols);
            p.add(name, rows, cols, w)
        };
        let gru_wz = mat(&mut p, "gru.w_z", d, msg);
        let gru_uz = mat(&mut p, "gru.u_z", d, d);
        let gru_wr = mat(&mut p, "gru.w_r", d, msg);
        let gru_ur = mat(&mut p, "gru.u_r", d, d);
        let gru_wc = mat(&mut p, "gru.w_c", d, msg);
        let gru_uc = mat(&mut p, "gru.u_c", d, d);
        let att_wq = mat(&mut p, "attn.w_q", d, d + dt);
        let att_wk = mat(&mut p, "attn.w_k", d, d + de + dt);
        let att_wv = mat(&mut p, "attn.w_v", d, d + de + dt);
        let att_wo = mat(&mut p, "attn.w_o", d, 2 * d);
        let clf_w1 = mat(&mut p, "clf.w1", d, 2 * d);
        let clf_w2 = mat(&mut p, "clf.w2", 1, d);
        let zeros = |p: &mut ParamStore, name: &str, n: usize| p.add(name, n, 1, vec![0.0; n]);
        let ids = ParamIds {
            omega,
            phi,
            gru_wz,
            gru_uz,
            gru_bz: zeros(&mut p, "gru.b_z", d),
            gru_wr,
            gru_ur,
            gru_br: zeros(&mut p, "gru.b_r", d),
            gru_wc,
            gru_uc,
            gru_bc: zeros(&mut p, "gru.b_c", d),
            att_wq,
            att_bq: zeros(&mut p, "attn.b_q", d),
            att_wk,
            att_bk: zeros(&mut p, "attn.b_k", d),
            att_wv,
            att_bv: zeros(&mut p, "attn.b_v", d),
            att_wo,
            att_bo: zeros(&mut p, "attn.b_o", d),
            clf_w1,
            clf_b1: zeros(&mut p, "clf.b1", d),
            clf_w2,
            clf_b2: zeros(&mut p, "clf.b2", 1),
        };
        Ok(Self {
            config,
            params: p,
            ids,
        })
    }

    pub fn config(&self) -> &TgnnConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn ids(&self) -> &ParamIds {
        &self.ids
    }

    pub fn time_encoder(&self) -> TimeEncoderParams {
        TimeEncoderParams {
            omega: self.params.get(self.ids.omega).data.clone(),
            phi: self.params.get(self.ids.phi).data.clone(),
        }
    }

    /// Sets every parameter whose name starts with `prefix` to zero.
    pub fn zero_params(&mut self, prefix: &str) {
        for p in self.params.iter_mut().filter(|p| p.name.starts_with(prefix)) {
            p.data.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}
