use std::collections::BTreeSet;
use std::fs;

use ctdg_poison::ctdg::*;
use ctdg_poison::stats::{ks_critical_one_sample, ks_one_sample};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

fn edges(rows: &[(usize, usize, f64)]) -> Vec<TemporalInteraction> {
    rows.iter().map(|&(u, v, t)| TemporalInteraction::new(u, v, t)).collect()
}

#[test]
fn three_row_csv() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g.csv");
    fs::write(&p, "0,1,1.0\n0,2,2.0\n1,2,3.0\n").unwrap();
    let g = load_interactions(&p, None).unwrap();
    assert_eq!(g.len(), 3);
    assert_eq!(g.num_nodes(), 3);
    assert!(g.interactions().iter().all(|e| !e.is_adversarial));
}

#[test]
fn empty_and_malformed_files_fail() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("empty.csv");
    fs::write(&p, "").unwrap();
    assert!(load_interactions(&p, None).is_err());
    fs::write(&p, "u,v,t\n0,1,x\n").unwrap();
    assert!(load_interactions(&p, None).is_err());
    fs::write(&p, "0,1,-1.0\n").unwrap();
    assert!(load_interactions(&p, None).is_err());
    fs::write(&p, "0,1,1.0,0.5\n0,1,2.0\n").unwrap();
    assert!(load_interactions(&p, None).is_err());
    assert!(load_interactions(&dir.path().join("missing.csv"), None).is_err());
}

#[test]
fn shuffled_rows_load_identically() {
    let dir = tempfile::tempdir().unwrap();
    let mut rows: Vec<String> = (0..50).map(|i| format!("{},{},{}.5", i % 7, 7 + i % 3, i)).collect();
    let p1 = dir.path().join("a.csv");
    fs::write(&p1, rows.join("\n")).unwrap();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let p2 = dir.path().join("b.csv");
    fs::write(&p2, rows.join("\n")).unwrap();
    let a = load_interactions(&p1, None).unwrap();
    let b = load_interactions(&p2, None).unwrap();
    assert_eq!(a.interactions(), b.interactions());
}

#[test]
fn equal_timestamps_keep_file_order() {
    let g = DynamicGraph::new(edges(&[(2, 3, 1.0), (0, 1, 1.0), (1, 2, 0.5)]), false).unwrap();
    let order: Vec<_> = g.interactions().iter().map(|e| (e.u, e.v)).collect();
    assert_eq!(order, vec![(1, 2), (2, 3), (0, 1)]);
}

#[test]
fn manifest_round_trip_is_exact() {
    let mut rows = edges(&[(0, 3, 0.1), (1, 4, 0.30000000000000004), (2, 3, 1e-7)]);
    for (i, e) in rows.iter_mut().enumerate() {
        e.features = Some(vec![i as f64 / 3.0, -0.1]);
    }
    rows[1].is_adversarial = true;
    let g = DynamicGraph::new(rows, true).unwrap();
    let ids = vec![None, Some(4), None];
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.csv");
    save_perturbation_manifest(&g, &ids, &p).unwrap();
    let (back, back_ids) = load_perturbation_manifest(&p).unwrap();
    assert_eq!(back.interactions(), g.interactions());
    assert_eq!(back_ids, ids);
    assert_eq!(back.source_ids(), g.source_ids());
    assert_eq!(back.destination_ids(), g.destination_ids());

    let q = dir.path().join("g.csv");
    save_interactions(&g.genuine_only().unwrap(), &q).unwrap();
    let plain = load_interactions(&q, None).unwrap();
    assert_eq!(plain.interactions(), g.genuine_only().unwrap().interactions());
}

#[test]
fn split_sizes_follow_floor_rule() {
    assert_eq!(split_len(100, DEFAULT_SPLIT).unwrap().sizes(), (70, 15, 15));
    assert_eq!(split_len(10, DEFAULT_SPLIT).unwrap().sizes(), (7, 1, 2));
    assert!(split_len(2, DEFAULT_SPLIT).is_err());
}

#[test]
fn batches_cover_the_graph() {
    assert_eq!(batch_iter(10, 4), vec![0..4, 4..8, 8..10]);
    assert_eq!(batch_iter(600, 600), vec![0..600]);
}

#[test]
fn window_examples() {
    let g = DynamicGraph::new(edges(&[(3, 7, 0.0), (1, 2, 1.0)]), false).unwrap();
    assert_eq!(window_nodes(&g, 0, 1), NodePool::Unipartite(vec![3, 7]));
    assert_eq!(window_nodes(&g, 1, 10), NodePool::Unipartite(vec![1, 2, 3, 7]));

    let star = DynamicGraph::new(edges(&[(3, 0, 0.0), (3, 1, 1.0), (3, 0, 2.0), (3, 5, 3.0), (3, 6, 4.0)]), false).unwrap();
    match window_nodes(&star, 4, 5) {
        NodePool::Unipartite(n) => assert_eq!(n.len(), 1 + 4),
        other => panic!("{other:?}"),
    }

    let bi = DynamicGraph::new(edges(&[(0, 5, 0.0), (1, 6, 1.0)]), true).unwrap();
    assert_eq!(
        window_nodes(&bi, 1, 2),
        NodePool::Bipartite {
            sources: vec![0, 1],
            destinations: vec![5, 6]
        }
    );
}

#[test]
fn one_point_kde_is_a_gaussian() {
    let kde = Kde1d::with_range(&[5.0], 0.0, 10.0, 0.1).unwrap();
    let mut s = KdeSampler::new(kde, 11);
    let xs: Vec<f64> = (0..5000)
        .map(|_| {
            let x = s.sample();
            s.kde().normalize(x)
        })
        .collect();
    let n = Normal::new(0.5, 0.1).unwrap();
    let d = ks_one_sample(&xs, |x| n.cdf(x));
    assert!(d < ks_critical_one_sample(0.01, xs.len()), "KS {d}");
}

#[test]
fn bimodal_kde_matches_mixture_cdf() {
    // normalized support {0, 1}: an equal mixture of N(0, h) and N(1, h)
    let mut s = fit_time_kde(&edges(&[(0, 1, 0.0), (0, 1, 10.0)]), 0.1, 5).unwrap();
    let a = Normal::new(0.0, 0.1).unwrap();
    let b = Normal::new(1.0, 0.1).unwrap();
    let xs: Vec<f64> = (0..10_000)
        .map(|_| {
            let x = s.sample();
            s.kde().normalize(x)
        })
        .collect();
    let d = ks_one_sample(&xs, |x| 0.5 * (a.cdf(x) + b.cdf(x)));
    assert!(d < ks_critical_one_sample(0.01, xs.len()), "KS {d}");
}

/// CDF of the KDE restricted to `[lo, hi]` by trapezoid integration of the
/// mixture density.
fn truncated_cdf(support: &[f64], h: f64, lo: f64, hi: f64) -> impl Fn(f64) -> f64 {
    let steps = 4000;
    let dens = |x: f64| -> f64 {
        support
            .iter()
            .map(|&s| (-(x - s).powi(2) / (2.0 * h * h)).exp())
            .sum::<f64>()
    };
    let dx = (hi - lo) / steps as f64;
    let mut cum = vec![0.0; steps + 1];
    for i in 1..=steps {
        let x0 = lo + (i - 1) as f64 * dx;
        cum[i] = cum[i - 1] + 0.5 * (dens(x0) + dens(x0 + dx)) * dx;
    }
    let total = cum[steps];
    move |x: f64| {
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let pos = (x - lo) / dx;
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        (cum[i] + frac * (cum[i + 1] - cum[i])) / total
    }
}

#[test]
fn sample_times_in_follows_truncated_kde() {
    let raw = [0.0, 1.0, 1.5, 4.0, 9.0, 10.0];
    let kde = Kde1d::fit(&raw, 0.1).unwrap();
    let support = kde.support().to_vec();
    let mut s = KdeSampler::new(kde, 21);
    let (lo, hi) = (0.5, 8.0);
    let ts = s.sample_times_in(200, lo, hi).unwrap();
    assert_eq!(ts.len(), 200);
    let norm: Vec<f64> = ts.iter().map(|&t| t / 10.0).collect();
    let cdf = truncated_cdf(&support, 0.1, lo / 10.0, hi / 10.0);
    let d = ks_one_sample(&norm, cdf);
    assert!(d < ks_critical_one_sample(0.01, norm.len()), "KS {d}");
}

#[test]
fn feature_kde_constant_column() {
    let rows: Vec<_> = (0..20)
        .map(|i| TemporalInteraction::new(0, 1, i as f64).with_features(vec![2.5, i as f64]))
        .collect();
    let f = fit_feature_kde(&rows, 0.1, 3).unwrap();
    let col = &f.columns()[0];
    assert_eq!(col.normalize(2.5), 0.5);
    assert_eq!(col.denormalize(0.5), 2.5);
    let mut f = f;
    let xs: Vec<f64> = (0..3000)
        .map(|_| {
            let v = f.sample();
            (v[0] - 2.5) + 0.5
        })
        .collect();
    // a constant column maps back to its constant plus zero-scaled noise
    assert!(xs.iter().all(|&x| x == 0.5));
}

proptest! {
    #[test]
    fn split_boundaries_are_monotone(ts in prop::collection::vec(0.0f64..100.0, 3..80)) {
        let rows: Vec<_> = ts.iter().enumerate().map(|(i, &t)| TemporalInteraction::new(i % 5, 5 + i % 4, t)).collect();
        let g = DynamicGraph::new(rows, true).unwrap();
        let s = chronological_split(&g, DEFAULT_SPLIT).unwrap();
        let e = g.interactions();
        prop_assert_eq!(s.total(), g.len());
        prop_assert_eq!(s.train.end, s.validation.start);
        prop_assert_eq!(s.validation.end, s.test.start);
        let max = |r: std::ops::Range<usize>| e[r].iter().map(|x| x.t).fold(f64::NEG_INFINITY, f64::max);
        let min = |r: std::ops::Range<usize>| e[r].iter().map(|x| x.t).fold(f64::INFINITY, f64::min);
        if !s.validation.is_empty() {
            prop_assert!(max(s.train.clone()) <= min(s.validation.clone()));
            prop_assert!(max(s.validation.clone()) <= min(s.test.clone()));
        }
        prop_assert!(max(s.train.clone()) <= min(s.test.clone()));
    }

    #[test]
    fn window_matches_brute_force(
        rows in prop::collection::vec((0usize..12, 0usize..12), 1..200),
        w in 1usize..40,
        pick in 0usize..1000,
    ) {
        let es: Vec<_> = rows.iter().enumerate().map(|(i, &(u, v))| TemporalInteraction::new(u, v, i as f64)).collect();
        let g = DynamicGraph::new(es, false).unwrap();
        let i = pick % g.len();
        let lo = (i + 1).saturating_sub(w);
        let mut brute = BTreeSet::new();
        for e in &g.interactions()[lo..=i] {
            brute.insert(e.u);
            brute.insert(e.v);
        }
        prop_assert_eq!(window_nodes(&g, i, w), NodePool::Unipartite(brute.into_iter().collect()));
    }

    #[test]
    fn sampled_times_are_bounded_and_sorted(
        k in 0usize..60,
        lo in 0.0f64..50.0,
        span in 0.0f64..50.0,
        seed in any::<u64>(),
    ) {
        let kde = Kde1d::fit(&[0.0, 3.0, 40.0, 100.0], 0.1).unwrap();
        let mut s = KdeSampler::new(kde, seed);
        let ts = s.sample_times_in(k, lo, lo + span).unwrap();
        prop_assert_eq!(ts.len(), k);
        prop_assert!(ts.iter().all(|&t| t >= lo && t <= lo + span));
        prop_assert!(ts.windows(2).all(|w| w[0] <= w[1]));
    }
}
