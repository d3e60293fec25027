use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::ctdg::NodeId;
use crate::error::{Error, Result};

use super::state::{MemoryStep, NodeMemoryBank, TemporalState};
use super::{TgnnModel, TimeEncoderParams};

/// Scores are clamped to `[SCORE_CLAMP, 1 - SCORE_CLAMP]` before logarithms.
pub const SCORE_CLAMP: f64 = 1e-7;

/// One forward pass over the model, recorded on a tape.
///
/// In training mode node memories are recomputed from their last recorded GRU
/// step under the current parameters so gradients reach the memory updater
/// and time encoder; in inference mode stored memories are read directly.
pub struct Forward<'m> {
    pub tape: Tape<'m>,
    model: &'m TgnnModel,
    state: &'m TemporalState,
    recompute_memory: bool,
    mem_cache: HashMap<NodeId, Var>,
    const_cache: HashMap<NodeId, Var>,
    phi0: Option<Var>,
    dropout: Option<(f64, ChaCha8Rng)>,
}

impl<'m> Forward<'m> {
    pub fn inference(model: &'m TgnnModel, state: &'m TemporalState) -> Self {
        Self {
            tape: Tape::new(model.params()),
            model,
            state,
            recompute_memory: false,
            mem_cache: HashMap::new(),
            const_cache: HashMap::new(),
            phi0: None,
            dropout: None,
        }
    }

    /// Training pass; `dropout_seed = None` disables dropout.
    pub fn training(model: &'m TgnnModel, state: &'m TemporalState, dropout_seed: Option<u64>) -> Self {
        let p = model.config().dropout;
        let dropout = match dropout_seed {
            Some(s) if p > 0.0 => Some((p, ChaCha8Rng::seed_from_u64(s))),
            _ => None,
        };
        Self {
            tape: Tape::new(model.params()),
            model,
            state,
            recompute_memory: true,
            mem_cache: HashMap::new(),
            const_cache: HashMap::new(),
            phi0: None,
            dropout,
        }
    }

    pub fn model(&self) -> &'m TgnnModel {
        self.model
    }

    pub fn time_encode(&mut self, dt: f64) -> Var {
        let ids = self.model.ids();
        self.tape.time_encode(ids.omega, ids.phi, dt)
    }

    fn phi0(&mut self) -> Var {
        if let Some(v) = self.phi0 {
            return v;
        }
        let v = self.time_encode(0.0);
        self.phi0 = Some(v);
        v
    }

    fn features(&mut self, feats: Option<&[f64]>) -> Result<Option<Var>> {
        let de = self.model.config().feature_dim;
        if de == 0 {
            return Ok(None);
        }
        let v = match feats {
            Some(f) if f.len() == de => f.to_vec(),
            Some(f) => {
                return Err(Error::Dimension {
                    expected: de,
                    actual: f.len(),
                })
            }
            None => vec![0.0; de],
        };
        Ok(Some(self.tape.constant(v)))
    }

    /// `[s_u || s_v || cos(omega dt + phi) || e_uv]`.
    pub fn message(&mut self, s_u: Var, s_v: Var, dt: f64, feats: Option<&[f64]>) -> Result<Var> {
        let te = self.time_encode(dt);
        let mut parts = vec![s_u, s_v, te];
        if let Some(f) = self.features(feats)? {
            parts.push(f);
        }
        Ok(self.tape.concat(&parts))
    }

    /// z = σ(W_z m + U_z s + b_z), r = σ(W_r m + U_r s + b_r),
    /// c = tanh(W_c m + U_c (r ⊙ s) + b_c), s' = (1 - z) ⊙ s + z ⊙ c.
    pub fn gru(&mut self, s: Var, m: Var) -> Var {
        let ids = *self.model.ids();
        let t = &mut self.tape;
        let wz = t.linear(ids.gru_wz, Some(ids.gru_bz), m);
        let uz = t.linear(ids.gru_uz, None, s);
        let zin = t.add(wz, uz);
        let z = t.sigmoid(zin);
        let wr = t.linear(ids.gru_wr, Some(ids.gru_br), m);
        let ur = t.linear(ids.gru_ur, None, s);
        let rin = t.add(wr, ur);
        let r = t.sigmoid(rin);
        let rs = t.mul(r, s);
        let wc = t.linear(ids.gru_wc, Some(ids.gru_bc), m);
        let uc = t.linear(ids.gru_uc, None, rs);
        let cin = t.add(wc, uc);
        let c = t.tanh(cin);
        let diff = t.sub(c, s);
        let step = t.mul(z, diff);
        t.add(s, step)
    }

    /// Current memory of `u` as a tape variable.
    pub fn memory(&mut self, u: NodeId) -> Var {
        if let Some(v) = self.mem_cache.get(&u) {
            return *v;
        }
        let bank = &self.state.bank;
        let v = match (self.recompute_memory, bank.last_step(u)) {
            (true, Some(step)) => {
                let step = step.clone();
                let prev = self.tape.constant(step.prev);
                let other = self.tape.constant(step.other);
                // dimensions were validated when the step was recorded
                let m = self
                    .message(prev, other, step.dt, step.features.as_deref())
                    .expect("recorded memory step has valid dimensions");
                self.gru(prev, m)
            }
            _ => self.tape.constant(bank.memory(u).to_vec()),
        };
        self.mem_cache.insert(u, v);
        v
    }

    /// Memory of a neighbor: the recomputed memory when this pass already
    /// holds one, the stored memory otherwise.
    fn neighbor_memory(&mut self, u: NodeId) -> Var {
        if let Some(v) = self.mem_cache.get(&u) {
            return *v;
        }
        if let Some(v) = self.const_cache.get(&u) {
            return *v;
        }
        let v = self.tape.constant(self.state.bank.memory(u).to_vec());
        self.const_cache.insert(u, v);
        v
    }

    /// New memory of `u` after an event with `v` at `t`, from stored memories.
    pub fn memory_update_value(
        &mut self,
        u: NodeId,
        v: NodeId,
        t: f64,
        feats: Option<&[f64]>,
    ) -> Result<(Vec<f64>, MemoryStep)> {
        let bank = &self.state.bank;
        bank.check_order(u, t)?;
        let dt = bank.elapsed(u, t);
        let prev = bank.memory(u).to_vec();
        let other = bank.memory(v).to_vec();
        let pv = self.tape.constant(prev.clone());
        let ov = self.tape.constant(other.clone());
        let m = self.message(pv, ov, dt, feats)?;
        let s = self.gru(pv, m);
        let step = MemoryStep {
            prev,
            other,
            dt,
            features: if self.model.config().feature_dim > 0 {
                feats.map(<[f64]>::to_vec)
            } else {
                None
            },
        };
        Ok((self.tape.value(s).to_vec(), step))
    }

    /// Temporal embedding `h_u(t)`: two-head attention from the query
    /// `[s_u || Φ(0)]` over keys/values `[s_v || e_uv || Φ(t - t_uv)]` of the
    /// most recent neighbors, then the output projection of
    /// `[aggregate || s_u]`. With no neighbors the aggregate is the query.
    pub fn embed(&mut self, u: NodeId, t: f64) -> Result<Var> {
        if u >= self.state.bank.num_nodes() {
            return Err(Error::invalid(format!("node {u} out of range")));
        }
        let cfg = self.model.config();
        let ids = *self.model.ids();
        let d = cfg.memory_dim;
        let heads = cfg.heads;
        let dh = d / heads;
        let s_u = self.memory(u);
        let phi0 = self.phi0();
        let q_in = self.tape.concat(&[s_u, phi0]);
        let q = self.tape.linear(ids.att_wq, Some(ids.att_bq), q_in);

        let state = self.state;
        let neigh: Vec<_> = state.neighbors.recent(u, t).collect();
        let agg = if neigh.is_empty() {
            q
        } else {
            let mut keys = Vec::with_capacity(neigh.len());
            let mut vals = Vec::with_capacity(neigh.len());
            for n in &neigh {
                let s_v = self.neighbor_memory(n.node);
                let te = self.time_encode(t - n.t);
                let mut parts = vec![s_v];
                if let Some(f) = self.features(n.features.as_deref())? {
                    parts.push(f);
                }
                parts.push(te);
                let kv_in = self.tape.concat(&parts);
                keys.push(self.tape.linear(ids.att_wk, Some(ids.att_bk), kv_in));
                vals.push(self.tape.linear(ids.att_wv, Some(ids.att_bv), kv_in));
            }
            let scale = 1.0 / (dh as f64).sqrt();
            let mut head_out = Vec::with_capacity(heads);
            for h in 0..heads {
                let qh = self.tape.slice(q, h * dh, dh);
                let mut scores = Vec::with_capacity(keys.len());
                let mut vh = Vec::with_capacity(keys.len());
                for (k, v) in keys.iter().zip(&vals) {
                    let kh = self.tape.slice(*k, h * dh, dh);
                    scores.push(self.tape.dot(qh, kh));
                    vh.push(self.tape.slice(*v, h * dh, dh));
                }
                let sc = self.tape.concat(&scores);
                let sc = self.tape.scale(sc, scale);
                let mut a = self.tape.softmax(sc);
                if let Some((p, rng)) = self.dropout.as_mut() {
                    let keep = 1.0 / (1.0 - *p);
                    let mask: Vec<f64> = (0..neigh.len())
                        .map(|_| if rng.random::<f64>() < *p { 0.0 } else { keep })
                        .collect();
                    a = self.tape.mul_const(a, mask);
                }
                head_out.push(self.tape.weighted_sum(a, &vh));
            }
            self.tape.concat(&head_out)
        };
        let o_in = self.tape.concat(&[agg, s_u]);
        Ok(self.tape.linear(ids.att_wo, Some(ids.att_bo), o_in))
    }

    /// `sigmoid(MLP([h_u || h_v]))`.
    pub fn score(&mut self, h_u: Var, h_v: Var) -> Var {
        let ids = *self.model.ids();
        let x = self.tape.concat(&[h_u, h_v]);
        let h = self.tape.linear(ids.clf_w1, Some(ids.clf_b1), x);
        let h = self.tape.relu(h);
        let z = self.tape.linear(ids.clf_w2, Some(ids.clf_b2), h);
        self.tape.sigmoid(z)
    }

    /// Cosine similarity of two tape vectors' values (no gradient).
    pub fn cosine_value(&self, a: Var, b: Var) -> f64 {
        cosine(self.tape.value(a), self.tape.value(b))
    }
}

pub(crate) fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// `cos(omega * dt + phi)` componentwise.
pub fn encode_time(p: &TimeEncoderParams, dt: f64) -> Result<Vec<f64>> {
    if dt < 0.0 {
        return Err(Error::invalid(format!("negative time interval {dt}")));
    }
    Ok(p.omega
        .iter()
        .zip(&p.phi)
        .map(|(w, ph)| (w * dt + ph).cos())
        .collect())
}

/// Message for `u` from an event with `v` at `t`; the feature segment is
/// omitted when the model has no edge features.
pub fn compute_message(
    model: &TgnnModel,
    bank: &NodeMemoryBank,
    u: NodeId,
    v: NodeId,
    t: f64,
    features: Option<&[f64]>,
) -> Result<Vec<f64>> {
    bank.check_order(u, t)?;
    if v >= bank.num_nodes() {
        return Err(Error::invalid(format!("node {v} out of range")));
    }
    let mut m = Vec::with_capacity(model.config().message_dim());
    m.extend_from_slice(bank.memory(u));
    m.extend_from_slice(bank.memory(v));
    m.extend(encode_time(&model.time_encoder(), bank.elapsed(u, t))?);
    let de = model.config().feature_dim;
    if de > 0 {
        match features {
            Some(f) if f.len() == de => m.extend_from_slice(f),
            Some(f) => {
                return Err(Error::Dimension {
                    expected: de,
                    actual: f.len(),
                })
            }
            None => m.extend(std::iter::repeat_n(0.0, de)),
        }
    }
    Ok(m)
}

pub fn embed(model: &TgnnModel, state: &TemporalState, u: NodeId, t: f64) -> Result<Vec<f64>> {
    let mut f = Forward::inference(model, state);
    let h = f.embed(u, t)?;
    Ok(f.tape.value(h).to_vec())
}

pub fn score_edge(model: &TgnnModel, h_u: &[f64], h_v: &[f64]) -> Result<f64> {
    let d = model.config().memory_dim;
    for h in [h_u, h_v] {
        if h.len() != d {
            return Err(Error::Dimension {
                expected: d,
                actual: h.len(),
            });
        }
    }
    let empty = TemporalState::new(model, 0);
    let mut f = Forward::inference(model, &empty);
    let a = f.tape.constant(h_u.to_vec());
    let b = f.tape.constant(h_v.to_vec());
    let s = f.score(a, b);
    Ok(f.tape.scalar(s))
}

/// Edge score of `(u, v)` at time `t` against the given state.
pub fn score_edge_pair(
    model: &TgnnModel,
    state: &TemporalState,
    u: NodeId,
    v: NodeId,
    t: f64,
) -> Result<f64> {
    let mut f = Forward::inference(model, state);
    let hu = f.embed(u, t)?;
    let hv = f.embed(v, t)?;
    let s = f.score(hu, hv);
    Ok(f.tape.scalar(s))
}

/// Edge scorer split by input half so a dense pool costs `O(d)` per pair:
/// `W1 [h_u || h_v] + b1 = (W1_left h_u + b1) + W1_right h_v`.
#[derive(Debug, Clone)]
pub struct PairScorer<'m> {
    model: &'m TgnnModel,
}

impl<'m> PairScorer<'m> {
    pub fn new(model: &'m TgnnModel) -> Self {
        Self { model }
    }

    /// `(W1_left h + b1, W1_right h)`.
    pub fn halves(&self, h: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let ids = self.model.ids();
        let p = self.model.params();
        let w1 = p.get(ids.clf_w1);
        let b1 = &p.get(ids.clf_b1).data;
        let d = h.len();
        let mut left = b1.clone();
        let mut right = vec![0.0; w1.rows];
        for r in 0..w1.rows {
            let row = &w1.data[r * w1.cols..(r + 1) * w1.cols];
            left[r] += row[..d].iter().zip(h).map(|(a, b)| a * b).sum::<f64>();
            right[r] = row[d..].iter().zip(h).map(|(a, b)| a * b).sum::<f64>();
        }
        (left, right)
    }

    /// Score from the left half of `u` and the right half of `v`.
    pub fn score(&self, left_u: &[f64], right_v: &[f64]) -> f64 {
        let ids = self.model.ids();
        let p = self.model.params();
        let w2 = &p.get(ids.clf_w2).data;
        let b2 = p.get(ids.clf_b2).data[0];
        let z: f64 = left_u
            .iter()
            .zip(right_v)
            .zip(w2)
            .map(|((a, b), w)| w * (a + b).max(0.0))
            .sum::<f64>()
            + b2;
        if z >= 0.0 {
            1.0 / (1.0 + (-z).exp())
        } else {
            let e = z.exp();
            e / (1.0 + e)
        }
    }
}
