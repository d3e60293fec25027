use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attack::{
    baseline_attack, run_tspear, validate_constraints, AttackConfig, AttackKind, AttackOutcome, ComplianceReport,
    SurrogateConfig,
};
use crate::ctdg::{
    chronological_split, load_interactions, save_perturbation_manifest, ColumnMapping, DynamicGraph, SplitBundle,
};
use crate::defense::{classify_adversarial, train_defended, DefenseConfig, DefenseRun, DefenseVariant};
use crate::error::{Error, Result};
use crate::eval::{auroc, evaluate_protocol, MetricsReport, ProtocolOptions};
use crate::seed::derive_seed;
use crate::tgnn::{save_checkpoint, EdgeFilter, TgnnConfig, TgnnModel, TrainConfig, TrainReport};

use super::config::{DataSource, ExperimentConfig};
use super::synth::generate_synthetic;

pub const REPORT_FORMAT: &str = "ctdg-poison-report/1";
pub const REPORT_FILE: &str = "report.json";
pub const CONFIG_FILE: &str = "config.txt";

const SURROGATE_STREAM: u64 = 0x5355_5252;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn load_data(source: &DataSource) -> Result<DynamicGraph> {
    match source {
        DataSource::Synthetic(spec) => generate_synthetic(spec),
        DataSource::File { path, jodie } => {
            let mapping = jodie.then(ColumnMapping::jodie);
            load_interactions(path, mapping.as_ref())
        }
    }
}

/// Chronological split of the genuine stream; adversarial edges fall into
/// the split whose genuine edges surround them.
pub fn splits_for(g: &DynamicGraph, fractions: (f64, f64, f64)) -> Result<SplitBundle> {
    if g.num_adversarial() == 0 {
        return chronological_split(g, fractions);
    }
    let clean = chronological_split(&g.genuine_only()?, fractions)?;
    crate::attack::remap_splits(g, &clean)
}

/// Model, training and attack settings for one run seed.
pub fn seeded(cfg: &ExperimentConfig, g: &DynamicGraph, seed: u64) -> (TgnnConfig, TrainConfig, Option<AttackConfig>) {
    let model = TgnnConfig {
        feature_dim: g.feature_dim().unwrap_or(0),
        seed,
        ..cfg.model.clone()
    };
    let train = TrainConfig {
        negative_seed: seed,
        ..cfg.train.clone()
    };
    let attack = cfg.attack.clone().map(|a| AttackConfig { seed, ..a });
    (model, train, attack)
}

/// Runs the configured attack; the surrogate uses a seed stream distinct
/// from the victim's.
pub fn attack_graph(
    g: &DynamicGraph,
    splits: &SplitBundle,
    attack: &AttackConfig,
    model: &TgnnConfig,
    train: &TrainConfig,
) -> Result<AttackOutcome> {
    match attack.kind {
        AttackKind::TSpear => {
            let s = derive_seed(model.seed, SURROGATE_STREAM);
            let surrogate = SurrogateConfig {
                model: TgnnConfig {
                    seed: s,
                    ..model.clone()
                },
                train: TrainConfig {
                    negative_seed: s,
                    ..train.clone()
                },
            };
            run_tspear(g, splits, attack, &surrogate)
        }
        AttackKind::Baseline(kind) => baseline_attack(g, splits, attack, kind),
    }
}

/// Validation filter matching the defense's final training epoch.
pub fn validation_filter(defense: &DefenseConfig, report: &TrainReport) -> Result<Option<EdgeFilter>> {
    Ok(match defense.variant {
        DefenseVariant::TShield | DefenseVariant::TShieldF => {
            let last = report.epochs_run.saturating_sub(1).min(defense.schedule.total_epochs);
            Some(EdgeFilter::Score {
                tau: defense.schedule.threshold_at(last)?,
            })
        }
        DefenseVariant::TgnCosine => Some(EdgeFilter::Cosine {
            tau: defense.tau_cosine,
        }),
        DefenseVariant::None | DefenseVariant::TgnSvd => None,
    })
}

/// Trains a victim under the configured defense.
pub fn train_victim(
    g: &DynamicGraph,
    splits: &SplitBundle,
    model: &TgnnConfig,
    train: &TrainConfig,
    defense: &DefenseConfig,
) -> Result<(TgnnModel, DefenseRun)> {
    let mut m = TgnnModel::new(model.clone())?;
    let schedule = crate::defense::ThresholdSchedule {
        total_epochs: train.epochs,
        ..defense.schedule
    };
    let run = train_defended(
        &mut m,
        g,
        splits,
        &DefenseConfig {
            schedule,
            ..defense.clone()
        },
        train,
    )?;
    Ok((m, run))
}

/// Everything recorded for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub validation: MetricsReport,
    pub test: MetricsReport,
    pub train: TrainReport,
    /// AUROC of the defense's filter scores against the adversarial labels.
    pub filter_auroc: Option<f64>,
    pub compliance: Option<ComplianceReport>,
    pub num_adversarial: usize,
    /// Artifact file name (relative to the seed directory) to sha256.
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub format: String,
    pub attack: String,
    pub p: Option<f64>,
    pub defense: String,
    pub config_sha256: String,
    /// Config text with seeds, attack kind, rate and defense removed; runs
    /// with equal signatures are comparable.
    pub signature: String,
    pub graph_sha256: String,
    pub runs: Vec<SeedRun>,
}

impl PipelineReport {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let r: Self = serde_json::from_str(&text)?;
        if r.format != REPORT_FORMAT {
            return Err(Error::invalid(format!("unsupported report format {}", r.format)));
        }
        Ok(r)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn signature(cfg: &ExperimentConfig) -> String {
    let kept: String = cfg
        .to_text()
        .lines()
        .filter(|l| {
            !(l.starts_with("eval.seeds")
                || l.starts_with("attack.kind")
                || l.starts_with("attack.p ")
                || l.starts_with("defense.")
                || l.starts_with("output."))
        })
        .map(|l| format!("{l}\n"))
        .collect();
    sha256_hex(kept.as_bytes())
}

fn graph_hash(g: &DynamicGraph) -> Result<String> {
    Ok(sha256_hex(serde_json::to_string(g.interactions())?.as_bytes()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run_seed(cfg: &ExperimentConfig, g: &DynamicGraph, splits: &SplitBundle, seed: u64, dir: &Path) -> Result<SeedRun> {
    let (model_cfg, train_cfg, attack_cfg) = seeded(cfg, g, seed);
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut artifacts = BTreeMap::new();
    let mut record = |name: &str| -> Result<()> {
        artifacts.insert(name.to_string(), sha256_file(&dir.join(name))?);
        Ok(())
    };

    let (graph, splits, compliance) = match &attack_cfg {
        None => (g.clone(), splits.clone(), None),
        Some(a) => {
            let out = attack_graph(g, splits, a, &model_cfg, &train_cfg).map_err(|e| e.in_stage("attack"))?;
            let report = validate_constraints(&out.graph, &out.perturbations);
            save_perturbation_manifest(&out.graph, &out.batch_ids, &dir.join("perturbations.csv"))
                .map_err(|e| e.in_stage("write"))?;
            record("perturbations.csv")?;
            write_json(&dir.join("compliance.json"), &report).map_err(|e| e.in_stage("write"))?;
            record("compliance.json")?;
            (out.graph, out.splits, Some(report))
        }
    };

    let (model, run) =
        train_victim(&graph, &splits, &model_cfg, &train_cfg, &cfg.defense).map_err(|e| e.in_stage("train"))?;
    save_checkpoint(&model, Some(&train_cfg), &dir.join("checkpoint.json")).map_err(|e| e.in_stage("write"))?;
    record("checkpoint.json")?;
    let filter_auroc = if run.ledger.is_empty() {
        None
    } else {
        run.ledger
            .write_csv(dir.join("ledger.csv"))
            .map_err(|e| e.in_stage("write"))?;
        record("ledger.csv")?;
        auroc(&classify_adversarial(&run.ledger, &graph)?).ok()
    };

    let opts = ProtocolOptions {
        negatives: cfg.negatives,
        k: cfg.k,
        seed,
        filter: validation_filter(&cfg.defense, &run.report)?,
    };
    let (validation, test) = evaluate_protocol(&model, &graph, &splits, &opts).map_err(|e| e.in_stage("evaluate"))?;
    write_json(&dir.join("metrics.json"), &(&validation, &test)).map_err(|e| e.in_stage("write"))?;
    record("metrics.json")?;
    Ok(SeedRun {
        seed,
        validation,
        test,
        train: run.report,
        filter_auroc,
        compliance,
        num_adversarial: graph.num_adversarial(),
        artifacts,
    })
}

/// Generate or load, split, attack, train (defended or not) and evaluate for
/// every seed, writing all artifacts and `report.json` under `cfg.output`.
/// An existing report is only replaced when `cfg.overwrite` is set.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<PipelineReport> {
    cfg.validate()?;
    let out = &cfg.output;
    let report_path = out.join(REPORT_FILE);
    if report_path.exists() && !cfg.overwrite {
        return Err(Error::invalid(format!(
            "{} exists; set output.overwrite = true to replace it",
            report_path.display()
        )));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let config_text = cfg.to_text();
    fs::write(out.join(CONFIG_FILE), &config_text).map_err(|e| Error::io(out.join(CONFIG_FILE), e))?;

    let g = load_data(&cfg.data).map_err(|e| e.in_stage("load"))?;
    let splits = chronological_split(&g, cfg.split).map_err(|e| e.in_stage("split"))?;
    let runs = cfg
        .seeds
        .iter()
        .map(|&s| {
            log::info!("seed {s}");
            run_seed(cfg, &g, &splits, s, &seed_dir(out, s))
        })
        .collect::<Result<Vec<_>>>()?;
    let report = PipelineReport {
        format: REPORT_FORMAT.to_string(),
        attack: cfg.attack.as_ref().map_or("none".to_string(), |a| a.kind.to_string()),
        p: cfg.attack.as_ref().map(|a| a.p),
        defense: cfg.defense.variant.to_string(),
        config_sha256: sha256_hex(config_text.as_bytes()),
        signature: signature(cfg),
        graph_sha256: graph_hash(&g)?,
        runs,
    };
    report.save(&report_path).map_err(|e| e.in_stage("write"))?;
    Ok(report)
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}
