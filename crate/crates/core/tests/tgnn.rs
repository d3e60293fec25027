use ctdg_poison::ctdg::TemporalInteraction;
use ctdg_poison::tgnn::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(feature_dim: usize, seed: u64) -> TgnnModel {
    let mut m = TgnnModel::new(TgnnConfig {
        memory_dim: 4,
        time_dim: 3,
        feature_dim,
        heads: 2,
        neighbors: 3,
        dropout: 0.0,
        seed,
        ..Default::default()
    })
    .unwrap();
    // nonzero biases and phases so every term is exercised
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xbeef);
    for p in m.params_mut().iter_mut() {
        if p.name.contains(".b") || p.name == "time.phi" {
            p.data.iter_mut().for_each(|x| *x = rng.random_range(-0.5..0.5));
        }
    }
    m
}

fn matvec(m: &TgnnModel, name: &str, x: &[f64]) -> Vec<f64> {
    let p = m.params().get(m.params().find(name).unwrap());
    assert_eq!(p.cols, x.len());
    (0..p.rows)
        .map(|r| p.data[r * p.cols..(r + 1) * p.cols].iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

fn vec_of(m: &TgnnModel, name: &str) -> Vec<f64> {
    m.params().get(m.params().find(name).unwrap()).data.clone()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Textbook GRU cell written against the raw parameter tensors.
fn gru_oracle(m: &TgnnModel, s: &[f64], msg: &[f64]) -> Vec<f64> {
    let add3 = |a: Vec<f64>, b: Vec<f64>, c: Vec<f64>| -> Vec<f64> {
        a.iter().zip(&b).zip(&c).map(|((x, y), z)| x + y + z).collect()
    };
    let z: Vec<f64> = add3(matvec(m, "gru.w_z", msg), matvec(m, "gru.u_z", s), vec_of(m, "gru.b_z"))
        .into_iter()
        .map(sigmoid)
        .collect();
    let r: Vec<f64> = add3(matvec(m, "gru.w_r", msg), matvec(m, "gru.u_r", s), vec_of(m, "gru.b_r"))
        .into_iter()
        .map(sigmoid)
        .collect();
    let rs: Vec<f64> = r.iter().zip(s).map(|(a, b)| a * b).collect();
    let c: Vec<f64> = add3(matvec(m, "gru.w_c", msg), matvec(m, "gru.u_c", &rs), vec_of(m, "gru.b_c"))
        .into_iter()
        .map(f64::tanh)
        .collect();
    (0..s.len()).map(|i| (1.0 - z[i]) * s[i] + z[i] * c[i]).collect()
}

fn message(m: &TgnnModel, su: &[f64], sv: &[f64], dt: f64, feats: &[f64]) -> Vec<f64> {
    let omega = vec_of(m, "time.omega");
    let phi = vec_of(m, "time.phi");
    let mut out = su.to_vec();
    out.extend_from_slice(sv);
    out.extend(omega.iter().zip(&phi).map(|(w, p)| (w * dt + p).cos()));
    out.extend_from_slice(feats);
    out
}

#[test]
fn memory_update_matches_gru_oracle() {
    let m = model(2, 1);
    let mut st = TemporalState::new(&m, 3);
    let e1 = TemporalInteraction::new(0, 1, 2.0).with_features(vec![0.3, -0.7]);
    let e2 = TemporalInteraction::new(0, 2, 5.5).with_features(vec![1.0, 0.2]);

    let zero = vec![0.0; 4];
    let s0 = gru_oracle(&m, &zero, &message(&m, &zero, &zero, 0.0, &[0.3, -0.7]));
    let s1 = gru_oracle(&m, &zero, &message(&m, &zero, &zero, 0.0, &[0.3, -0.7]));
    st.apply(&m, &e1).unwrap();
    for (a, b) in st.bank.memory(0).iter().zip(&s0) {
        assert!((a - b).abs() < 1e-12);
    }
    for (a, b) in st.bank.memory(1).iter().zip(&s1) {
        assert!((a - b).abs() < 1e-12);
    }

    // second event for node 0: elapsed 3.5, partner untouched
    let s0b = gru_oracle(&m, &s0, &message(&m, &s0, &zero, 3.5, &[1.0, 0.2]));
    let s2 = gru_oracle(&m, &zero, &message(&m, &zero, &s0, 0.0, &[1.0, 0.2]));
    st.apply(&m, &e2).unwrap();
    for (a, b) in st.bank.memory(0).iter().zip(&s0b) {
        assert!((a - b).abs() < 1e-12);
    }
    for (a, b) in st.bank.memory(2).iter().zip(&s2) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(st.bank.last_update(0), 5.5);
    assert_eq!(st.bank.last_update(1), 2.0);
}

#[test]
fn out_of_order_events_are_rejected() {
    let m = model(0, 2);
    let mut st = TemporalState::new(&m, 2);
    st.apply(&m, &TemporalInteraction::new(0, 1, 3.0)).unwrap();
    assert!(st.apply(&m, &TemporalInteraction::new(1, 0, 2.0)).is_err());
}

#[test]
fn checkpoint_round_trip_preserves_scores() {
    let m = model(0, 3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    let cfg = TrainConfig::default();
    save_checkpoint(&m, Some(&cfg), &path).unwrap();
    let (back, tc) = load_checkpoint(&path).unwrap();
    assert_eq!(tc.as_ref(), Some(&cfg));
    assert_eq!(back.params(), m.params());

    let mut st = TemporalState::new(&m, 3);
    warm_replay(&m, &mut st, &[TemporalInteraction::new(0, 1, 1.0), TemporalInteraction::new(1, 2, 2.0)]).unwrap();
    let a = score_edge_pair(&m, &st, 0, 2, 3.0).unwrap();
    let b = score_edge_pair(&back, &st, 0, 2, 3.0).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn corrupted_checkpoint_is_rejected() {
    let m = model(0, 4);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    let mut ck = Checkpoint::from_model(&m, None);
    ck.params.pop();
    std::fs::write(&path, serde_json::to_string(&ck).unwrap()).unwrap();
    assert!(load_checkpoint(&path).is_err());
}

#[test]
fn link_loss_gradients_match_finite_differences() {
    let m = model(0, 5);
    let mut st = TemporalState::new(&m, 5);
    warm_replay(
        &m,
        &mut st,
        &[
            TemporalInteraction::new(0, 1, 1.0),
            TemporalInteraction::new(2, 1, 1.5),
            TemporalInteraction::new(0, 3, 2.0),
            TemporalInteraction::new(4, 3, 2.2),
        ],
    )
    .unwrap();
    let batch = [TemporalInteraction::new(0, 1, 3.0), TemporalInteraction::new(2, 3, 3.5)];
    let negs = [4, 0];
    let (loss, grads) = link_loss_with_grads(&m, &st, &batch, &negs).unwrap();
    assert!((loss - link_loss(&m, &st, &batch, &negs).unwrap()).abs() < 1e-12);

    let h = 1e-6;
    let mut checked = 0;
    for name in ["gru.w_z", "gru.b_c", "time.omega", "attn.w_q", "attn.w_v", "attn.w_o", "clf.w1", "clf.b2"] {
        let id = m.params().find(name).unwrap();
        let n = m.params().get(id).data.len();
        for j in [0, n / 2, n - 1] {
            let mut plus = m.clone();
            plus.params_mut().get_mut(id).data[j] += h;
            let mut minus = m.clone();
            minus.params_mut().get_mut(id).data[j] -= h;
            let fd = (link_loss(&plus, &st, &batch, &negs).unwrap() - link_loss(&minus, &st, &batch, &negs).unwrap())
                / (2.0 * h);
            let an = grads.get(id)[j];
            assert!(
                (fd - an).abs() <= 1e-5 * (1.0 + fd.abs()),
                "{name}[{j}]: analytic {an}, numeric {fd}"
            );
            checked += 1;
        }
    }
    assert_eq!(checked, 24);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn shifting_all_times_changes_nothing(
        rows in prop::collection::vec((0usize..5, 0usize..5, 0.0f64..3.0), 1..12),
        shift in 0.0f64..1000.0,
    ) {
        let m = model(0, 6);
        let mut t = 0.0;
        let mut a = Vec::new();
        let mut b = Vec::new();
        for &(u, v, dt) in &rows {
            t += dt;
            a.push(TemporalInteraction::new(u, v, t));
            b.push(TemporalInteraction::new(u, v, t + shift));
        }
        let mut sa = TemporalState::new(&m, 5);
        let mut sb = TemporalState::new(&m, 5);
        warm_replay(&m, &mut sa, &a).unwrap();
        warm_replay(&m, &mut sb, &b).unwrap();
        for u in 0..5 {
            for (x, y) in sa.bank.memory(u).iter().zip(sb.bank.memory(u)) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
        let pa = score_edge_pair(&m, &sa, 0, 1, t + 1.0).unwrap();
        let pb = score_edge_pair(&m, &sb, 0, 1, t + 1.0 + shift).unwrap();
        prop_assert!((pa - pb).abs() < 1e-9, "{} vs {}", pa, pb);
    }

    #[test]
    fn scores_are_probabilities(u in 0usize..4, v in 0usize..4, seed in 0u64..50) {
        let m = model(0, seed);
        let mut st = TemporalState::new(&m, 4);
        warm_replay(&m, &mut st, &[TemporalInteraction::new(0, 1, 1.0), TemporalInteraction::new(2, 3, 2.0)]).unwrap();
        let p = score_edge_pair(&m, &st, u, v, 5.0).unwrap();
        prop_assert!(p > 0.0 && p < 1.0);
    }
}
