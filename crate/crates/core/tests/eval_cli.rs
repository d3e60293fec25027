use std::collections::BTreeMap;
use std::fs;

use ctdg_poison::cli::*;
use ctdg_poison::eval::*;
use ctdg_poison::tgnn::TrainReport;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Pair-counting AUROC: genuine-over-adversarial wins plus half the ties.
fn auroc_oracle(pairs: &[(f64, bool)]) -> f64 {
    let mut wins = 0.0;
    let mut total = 0.0;
    for g in pairs.iter().filter(|p| !p.1) {
        for a in pairs.iter().filter(|p| p.1) {
            total += 1.0;
            if g.0 > a.0 {
                wins += 1.0;
            } else if g.0 == a.0 {
                wins += 0.5;
            }
        }
    }
    wins / total
}

proptest! {
    #[test]
    fn auroc_matches_pair_counting(
        raw in prop::collection::vec((0u8..20, any::<bool>()), 2..200),
    ) {
        // coarse scores so ties are common
        let pairs: Vec<(f64, bool)> = raw.iter().map(|&(s, l)| (s as f64 / 10.0, l)).collect();
        let has_both = pairs.iter().any(|p| p.1) && pairs.iter().any(|p| !p.1);
        match auroc(&pairs) {
            Ok(a) => {
                prop_assert!(has_both);
                prop_assert!((a - auroc_oracle(&pairs)).abs() < 1e-12);
            }
            Err(_) => prop_assert!(!has_both),
        }
    }

    #[test]
    fn rank_is_bounded_and_monotone(
        s in 0.0f64..1.0,
        bump in 0.0f64..1.0,
        negs in prop::collection::vec(0.0f64..1.0, 0..120),
    ) {
        let r = rank_from_scores(s, &negs);
        prop_assert!(r >= 1 && r <= negs.len() + 1);
        prop_assert!(rank_from_scores(s + bump, &negs) <= r);
        let mrr = mrr_from_ranks(&[r]).unwrap();
        prop_assert!(mrr > 0.0 && mrr <= 100.0);
        let h = hit_at_k_from_ranks(&[r], 10).unwrap();
        prop_assert!(h == 0.0 || h == 100.0);
    }

    #[test]
    fn negatives_are_distinct_and_exclude_truth(
        n in 1usize..60,
        count in 0usize..120,
        truth in 0usize..60,
        seed in any::<u64>(),
    ) {
        let dest: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let negs = sample_negatives(&dest, truth, count, &mut rng);
        let pool = if truth < n { n - 1 } else { n };
        prop_assert_eq!(negs.len(), count.min(pool));
        prop_assert!(negs.iter().all(|&x| x != truth));
        let uniq: std::collections::BTreeSet<_> = negs.iter().collect();
        prop_assert_eq!(uniq.len(), negs.len());
    }
}

#[test]
fn ties_rank_the_true_edge_last() {
    assert_eq!(rank_from_scores(0.5, &[0.5, 0.5, 0.1]), 3);
    assert_eq!(rank_from_scores(0.5, &[]), 1);
}

#[test]
fn random_scorer_matches_closed_form() {
    let harmonic: f64 = (1..=101).map(|i| 1.0 / i as f64).sum();
    let expect_mrr = 100.0 * harmonic / 101.0;
    let expect_hit = 100.0 * 10.0 / 101.0;
    assert!((expected_random_mrr(100) - expect_mrr).abs() < 1e-12);
    assert!((expected_random_hit_at_k(100, 10) - expect_hit).abs() < 1e-12);
    assert!((expect_mrr - 5.146).abs() < 1e-3);

    let trials = 2000;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let ranks: Vec<usize> = (0..trials)
        .map(|_| {
            let s: f64 = rng.random();
            let negs: Vec<f64> = (0..100).map(|_| rng.random()).collect();
            rank_from_scores(s, &negs)
        })
        .collect();
    // per-trial variances of 100/rank and 100*[rank <= 10] under a uniform rank
    let var_rr = 1e4 * (1..=101).map(|r| 1.0 / (r * r) as f64).sum::<f64>() / 101.0 - expect_mrr * expect_mrr;
    let var_hit = expect_hit * (100.0 - expect_hit);
    let n = trials as f64;
    let m = mrr_from_ranks(&ranks).unwrap();
    let h = hit_at_k_from_ranks(&ranks, 10).unwrap();
    assert!((m - expect_mrr).abs() < 3.0 * (var_rr / n).sqrt(), "MRR {m}");
    assert!((h - expect_hit).abs() < 3.0 * (var_hit / n).sqrt(), "Hit@10 {h}");
}

#[test]
fn mean_std_uses_sample_deviation() {
    let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(m, 2.5);
    assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
}

#[test]
fn config_text_round_trips() {
    let mut c = ExperimentConfig::benchmark();
    for (k, v) in [
        ("attack.kind", "struct_pr"),
        ("attack.p", "0.3"),
        ("attack.window", "200"),
        ("attack.selection", "low_k"),
        ("defense.variant", "tshield_f"),
        ("defense.lambda", "0.125"),
        ("eval.seeds", "0,1,2"),
        ("synth.edges", "500"),
        ("output.dir", "/tmp/somewhere"),
    ] {
        c.set(k, v).unwrap();
    }
    let back = ExperimentConfig::parse_str(&c.to_text()).unwrap();
    assert_eq!(back, c);

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.txt");
    c.save(&p).unwrap();
    assert_eq!(ExperimentConfig::load(&p).unwrap(), c);

    let data = dir.path().join("wiki.csv");
    fs::write(&data, "0,1,1.0\n").unwrap();
    let file = ExperimentConfig::parse_str(&format!("data.path = {}\ndata.format = jodie\n", data.display())).unwrap();
    assert_eq!(ExperimentConfig::parse_str(&file.to_text()).unwrap(), file);
}

#[test]
fn config_errors_name_the_line() {
    let err = ExperimentConfig::parse_str("model.memory_dim = 8\nmodel.heads = banana\n").unwrap_err();
    assert!(err.to_string().contains('2'), "{err}");
    assert!(ExperimentConfig::parse_str("eval.seeds = \n").is_err());
    assert!(ExperimentConfig::parse_str("no equals sign").is_err());
    assert!(ExperimentConfig::parse_str("model.memory_dim = 7\nmodel.heads = 2").is_err());
}

fn tiny_config(out: &std::path::Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::benchmark();
    for (k, v) in [
        ("synth.sources", "20"),
        ("synth.destinations", "5"),
        ("synth.edges", "300"),
        ("synth.feature_dim", "2"),
        ("model.memory_dim", "8"),
        ("model.time_dim", "4"),
        ("train.epochs", "2"),
        ("train.eval_negatives", "5"),
        ("attack.kind", "tspear"),
        ("attack.p", "0.2"),
        ("attack.window", "40"),
        ("defense.variant", "tshield"),
        ("eval.seeds", "0,1"),
        ("eval.negatives", "4"),
    ] {
        c.set(k, v).unwrap();
    }
    c.output = out.to_path_buf();
    c
}

fn read_tree(dir: &std::path::Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in walk(dir) {
        let rel = entry.strip_prefix(dir).unwrap().display().to_string();
        out.insert(rel, fs::read(&entry).unwrap());
    }
    out
}

fn walk(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut files = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            files.extend(walk(&p));
        } else {
            files.push(p);
        }
    }
    files
}

#[test]
fn pipeline_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(dir.path());
    let first = run_pipeline(&cfg).unwrap();
    let before = read_tree(dir.path());
    assert!(run_pipeline(&cfg).is_err(), "existing report must not be overwritten");
    cfg.overwrite = true;
    let second = run_pipeline(&cfg).unwrap();
    // the saved config differs only in the overwrite flag
    let mut after = read_tree(dir.path());
    after.remove(CONFIG_FILE);
    let mut before_cmp = before.clone();
    before_cmp.remove(CONFIG_FILE);
    let strip = |r: &PipelineReport| PipelineReport {
        config_sha256: String::new(),
        ..r.clone()
    };
    let json = |r: &PipelineReport| serde_json::to_string(&strip(r)).unwrap();
    assert_eq!(json(&first), json(&second));
    for (name, bytes) in &before_cmp {
        if name != REPORT_FILE {
            assert_eq!(after.get(name), Some(bytes), "{name} changed");
        }
    }

    // artifacts match their recorded hashes and load back
    for run in &second.runs {
        let sd = seed_dir(dir.path(), run.seed);
        for (name, hash) in &run.artifacts {
            assert_eq!(&sha256_file(&sd.join(name)).unwrap(), hash);
        }
        assert!(run.compliance.as_ref().unwrap().compliant());
        assert!(run.filter_auroc.is_some());
        let (g, ids) = ctdg_poison::ctdg::load_perturbation_manifest(&sd.join("perturbations.csv")).unwrap();
        assert_eq!(g.num_adversarial(), run.num_adversarial);
        assert_eq!(ids.iter().filter(|i| i.is_some()).count(), run.num_adversarial);
        ctdg_poison::tgnn::load_checkpoint(&sd.join("checkpoint.json")).unwrap();
        ctdg_poison::defense::FilterLedger::read_csv(sd.join("ledger.csv")).unwrap();
    }
    let loaded = PipelineReport::load(&dir.path().join(REPORT_FILE)).unwrap();
    assert_eq!(json(&loaded), json(&second));
    assert_eq!(ExperimentConfig::load(&dir.path().join(CONFIG_FILE)).unwrap(), cfg);
}

#[test]
fn clean_pipeline_writes_no_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(dir.path());
    cfg.attack = None;
    cfg.defense.variant = ctdg_poison::defense::DefenseVariant::None;
    cfg.seeds = vec![3];
    let rep = run_pipeline(&cfg).unwrap();
    let sd = seed_dir(dir.path(), 3);
    assert!(!sd.join("perturbations.csv").exists());
    assert!(!sd.join("ledger.csv").exists());
    assert_eq!(rep.attack, "none");
    assert_eq!(rep.runs[0].num_adversarial, 0);
    let g = load_data(&cfg.data).unwrap();
    let s = ctdg_poison::ctdg::chronological_split(&g, cfg.split).unwrap();
    assert_eq!(rep.runs[0].validation.num_evaluated, s.validation.len());
    assert_eq!(rep.runs[0].test.num_evaluated, s.test.len());
}

fn metrics(split: Split, seed: u64, mrr: f64) -> MetricsReport {
    MetricsReport {
        split,
        seed,
        mrr,
        hit10: 0.0,
        auroc: None,
        num_evaluated: 1,
        negative_pool: 100,
    }
}

fn fake_report(attack: &str, p: Option<f64>, defense: &str, signature: &str, mrrs: &[(u64, f64)]) -> PipelineReport {
    PipelineReport {
        format: REPORT_FORMAT.into(),
        attack: attack.into(),
        p,
        defense: defense.into(),
        config_sha256: format!("{:0>64}", signature.len() + mrrs.len()),
        signature: signature.into(),
        graph_sha256: String::new(),
        runs: mrrs
            .iter()
            .map(|&(seed, m)| SeedRun {
                seed,
                validation: metrics(Split::Validation, seed, m),
                test: metrics(Split::Test, seed, m),
                train: TrainReport::default(),
                filter_auroc: None,
                compliance: None,
                num_adversarial: 0,
                artifacts: BTreeMap::new(),
            })
            .collect(),
    }
}

#[test]
fn single_run_gives_one_cell() {
    let t = report_table(&[fake_report("tspear", Some(0.1), "none", "a", &[(0, 40.0), (1, 44.0)])]).unwrap();
    assert_eq!(t.rows.len(), 1);
    assert_eq!(t.columns, vec!["none".to_string()]);
    let c = &t.cells[&(0, 0)];
    assert_eq!(c.mean, 42.0);
    assert!((c.std - 8f64.sqrt()).abs() < 1e-12);
    assert!(t.gain(0).is_none());
    assert!(t.to_text().contains("42.00 ± 2.83"));
    assert!(report_table(&[]).is_err());
}

#[test]
fn three_rates_by_two_defenses_with_gain_column() {
    let mut reps = Vec::new();
    for (i, p) in [0.1, 0.2, 0.3].iter().enumerate() {
        let base = 50.0 - 10.0 * i as f64;
        reps.push(fake_report("tspear", Some(*p), "none", "a", &[(0, base), (1, base)]));
        reps.push(fake_report("tspear", Some(*p), "tshield", "a", &[(0, base * 1.1), (1, base * 1.1)]));
    }
    let t = report_table(&reps).unwrap();
    assert_eq!(t.rows.len(), 3);
    assert_eq!(t.columns.len(), 2);
    assert_eq!(t.cells.len(), 6);
    for r in 0..3 {
        assert!((t.gain(r).unwrap() - 10.0).abs() < 1e-9);
    }
    let csv = t.to_csv().unwrap();
    assert_eq!(csv.lines().filter(|l| l.contains("gain_percent")).count(), 3);
    assert!(t.to_text().contains("+10.00"));
}

#[test]
fn missing_seeds_are_annotated() {
    let t = report_table(&[
        fake_report("random", Some(0.3), "none", "a", &[(0, 30.0), (1, 32.0), (2, 34.0)]),
        fake_report("random", Some(0.3), "tshield", "a", &[(0, 40.0), (2, 44.0)]),
    ])
    .unwrap();
    let c = &t.cells[&(0, 1)];
    assert!(c.missing_seeds);
    assert_eq!(c.mean, 42.0);
    assert_eq!(c.seeds, vec![0, 2]);
    assert!(!t.cells[&(0, 0)].missing_seeds);
    assert!(t.to_text().contains("42.00 ± 2.83*"));
}

#[test]
fn incompatible_runs_are_flagged_not_merged() {
    let t = report_table(&[
        fake_report("pa", Some(0.1), "none", "sig-a", &[(0, 30.0)]),
        fake_report("pa", Some(0.1), "none", "sig-b", &[(0, 90.0)]),
    ])
    .unwrap();
    assert_eq!(t.cells.len(), 1);
    assert_eq!(t.cells[&(0, 0)].mean, 30.0);
    assert_eq!(t.flags.len(), 1);
    assert!(t.to_text().contains("! pa p=0.1 / none"));
}
