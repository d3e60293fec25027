use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::attack::{AttackConfig, AttackKind, Selection};
use crate::defense::{DefenseConfig, DefenseVariant};
use crate::error::{Error, Result};
use crate::tgnn::{TgnnConfig, TrainConfig};

use super::synth::SyntheticSpec;

/// Where the interaction log comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    File { path: PathBuf, jodie: bool },
}

/// A complete experiment: data, split, model, training, optional attack,
/// defense, evaluation seeds and output location.
///
/// Stored as flat `section.key = value` lines; `#` starts a comment.
/// Every run seed `s` overrides the model seed, the negative seed and the
/// attack seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub split: (f64, f64, f64),
    pub model: TgnnConfig,
    pub train: TrainConfig,
    pub attack: Option<AttackConfig>,
    pub defense: DefenseConfig,
    pub seeds: Vec<u64>,
    pub k: usize,
    pub negatives: usize,
    pub output: PathBuf,
    pub overwrite: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Synthetic(SyntheticSpec::default()),
            split: crate::ctdg::DEFAULT_SPLIT,
            model: TgnnConfig::default(),
            train: TrainConfig::default(),
            attack: None,
            defense: DefenseConfig {
                variant: DefenseVariant::None,
                ..DefenseConfig::default()
            },
            seeds: vec![0],
            k: crate::eval::DEFAULT_K,
            negatives: crate::eval::DEFAULT_NEGATIVES,
            output: PathBuf::from("runs/default"),
            overwrite: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("bad value `{value}` for `{key}`")))
}

impl ExperimentConfig {
    /// Small, fast settings that still learn the synthetic benchmark.
    pub fn benchmark() -> Self {
        let mut c = Self::default();
        c.model.memory_dim = 32;
        c.model.time_dim = 32;
        c.model.dropout = 0.1;
        c.train.learning_rate = 1e-3;
        c.train.batch_size = 20;
        c.train.epochs = 30;
        c.defense.schedule.total_epochs = 30;
        // an untrained scorer outputs about 0.5, so any threshold above that
        // drops every edge in the first epoch and nothing is ever learned
        c.defense.schedule.tau_start = 0.0;
        c.defense.schedule.tau_end = 0.1;
        c.defense.lambda = 0.01;
        c
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        Self::default().apply_text(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn apply_text(mut self, text: &str) -> Result<Self> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: n + 1,
                message: format!("expected key = value, got `{line}`"),
            })?;
            self.set(k.trim(), v.trim()).map_err(|e| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
        }
        self.validate()?;
        Ok(self)
    }

    fn synth_mut(&mut self) -> &mut SyntheticSpec {
        if !matches!(self.data, DataSource::Synthetic(_)) {
            self.data = DataSource::Synthetic(SyntheticSpec::default());
        }
        match &mut self.data {
            DataSource::Synthetic(s) => s,
            DataSource::File { .. } => unreachable!(),
        }
    }

    fn attack_mut(&mut self) -> &mut AttackConfig {
        self.attack.get_or_insert_with(AttackConfig::default)
    }

    /// Sets one dotted key.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "data.path" => {
                let jodie = matches!(&self.data, DataSource::File { jodie: true, .. });
                self.data = DataSource::File {
                    path: PathBuf::from(v),
                    jodie,
                };
            }
            "data.format" => {
                let jodie = match v {
                    "jodie" => true,
                    "native" => false,
                    _ => return Err(Error::invalid(format!("data.format must be native or jodie, got `{v}`"))),
                };
                match &mut self.data {
                    DataSource::File { jodie: j, .. } => *j = jodie,
                    DataSource::Synthetic(_) => {
                        return Err(Error::invalid("data.format needs data.path first"));
                    }
                }
            }
            "synth.sources" => self.synth_mut().sources = parse(key, v)?,
            "synth.destinations" => self.synth_mut().destinations = parse(key, v)?,
            "synth.edges" => self.synth_mut().edges = parse(key, v)?,
            "synth.bipartite" => self.synth_mut().bipartite = parse(key, v)?,
            "synth.seed" => self.synth_mut().seed = parse(key, v)?,
            "synth.preferred" => self.synth_mut().preferred = parse(key, v)?,
            "synth.noise" => self.synth_mut().noise = parse(key, v)?,
            "synth.mean_gap" => self.synth_mut().mean_gap = parse(key, v)?,
            "synth.feature_dim" => self.synth_mut().feature_dim = parse(key, v)?,
            "synth.feature_noise" => self.synth_mut().feature_noise = parse(key, v)?,
            "split.train" => self.split.0 = parse(key, v)?,
            "split.validation" => self.split.1 = parse(key, v)?,
            "split.test" => self.split.2 = parse(key, v)?,
            "model.memory_dim" => self.model.memory_dim = parse(key, v)?,
            "model.time_dim" => self.model.time_dim = parse(key, v)?,
            "model.heads" => self.model.heads = parse(key, v)?,
            "model.neighbors" => self.model.neighbors = parse(key, v)?,
            "model.layers" => self.model.layers = parse(key, v)?,
            "model.dropout" => self.model.dropout = parse(key, v)?,
            "train.learning_rate" => self.train.learning_rate = parse(key, v)?,
            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.epochs" => {
                self.train.epochs = parse(key, v)?;
                self.defense.schedule.total_epochs = self.train.epochs;
            }
            "train.patience" => self.train.patience = parse(key, v)?,
            "train.eval_negatives" => self.train.eval_negatives = parse(key, v)?,
            "attack.kind" => {
                if v == "none" {
                    self.attack = None;
                } else {
                    self.attack_mut().kind = AttackKind::from_str(v)?;
                }
            }
            "attack.p" => self.attack_mut().p = parse(key, v)?,
            "attack.window" => self.attack_mut().window = parse(key, v)?,
            "attack.selection" => self.attack_mut().selection = Selection::from_str(v)?,
            "attack.bandwidth" => self.attack_mut().bandwidth = parse(key, v)?,
            "attack.ks_alpha" => self.attack_mut().ks_alpha = parse(key, v)?,
            "defense.variant" => self.defense.variant = DefenseVariant::from_str(v)?,
            "defense.tau_start" => self.defense.schedule.tau_start = parse(key, v)?,
            "defense.tau_end" => self.defense.schedule.tau_end = parse(key, v)?,
            "defense.lambda" => self.defense.lambda = parse(key, v)?,
            "defense.theta" => self.defense.theta = parse(key, v)?,
            "defense.svd_rank" => self.defense.svd_rank = parse(key, v)?,
            "defense.tau_cosine" => self.defense.tau_cosine = parse(key, v)?,
            "eval.seeds" => {
                self.seeds = v
                    .split(',')
                    .map(|s| parse(key, s.trim()))
                    .collect::<Result<_>>()?;
            }
            "eval.k" => self.k = parse(key, v)?,
            "eval.negatives" => self.negatives = parse(key, v)?,
            "output.dir" => self.output = PathBuf::from(v),
            "output.overwrite" => self.overwrite = parse(key, v)?,
            _ => return Err(Error::invalid(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        match &self.data {
            DataSource::Synthetic(s) => s.validate()?,
            DataSource::File { path, .. } => {
                if !path.exists() {
                    return Err(Error::invalid(format!("data file {} does not exist", path.display())));
                }
            }
        }
        crate::ctdg::split_len(100, self.split)?;
        self.model.validate()?;
        self.train.validate()?;
        if let Some(a) = &self.attack {
            a.validate()?;
        }
        self.defense.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::invalid("eval.seeds must list at least one seed"));
        }
        if self.k == 0 || self.negatives == 0 {
            return Err(Error::invalid("eval.k and eval.negatives must be positive"));
        }
        Ok(())
    }

    /// Canonical text form; parsing it yields an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(s, "{k} = {v}");
        };
        match &self.data {
            DataSource::Synthetic(p) => {
                kv("synth.sources", &p.sources);
                kv("synth.destinations", &p.destinations);
                kv("synth.edges", &p.edges);
                kv("synth.bipartite", &p.bipartite);
                kv("synth.seed", &p.seed);
                kv("synth.preferred", &p.preferred);
                kv("synth.noise", &p.noise);
                kv("synth.mean_gap", &p.mean_gap);
                kv("synth.feature_dim", &p.feature_dim);
                kv("synth.feature_noise", &p.feature_noise);
            }
            DataSource::File { path, jodie } => {
                kv("data.path", &path.display());
                kv("data.format", &if *jodie { "jodie" } else { "native" });
            }
        }
        kv("split.train", &self.split.0);
        kv("split.validation", &self.split.1);
        kv("split.test", &self.split.2);
        kv("model.memory_dim", &self.model.memory_dim);
        kv("model.time_dim", &self.model.time_dim);
        kv("model.heads", &self.model.heads);
        kv("model.neighbors", &self.model.neighbors);
        kv("model.layers", &self.model.layers);
        kv("model.dropout", &self.model.dropout);
        kv("train.learning_rate", &self.train.learning_rate);
        kv("train.batch_size", &self.train.batch_size);
        kv("train.epochs", &self.train.epochs);
        kv("train.patience", &self.train.patience);
        kv("train.eval_negatives", &self.train.eval_negatives);
        match &self.attack {
            None => kv("attack.kind", &"none"),
            Some(a) => {
                kv("attack.kind", &a.kind);
                kv("attack.p", &a.p);
                kv("attack.window", &a.window);
                kv("attack.selection", &a.selection);
                kv("attack.bandwidth", &a.bandwidth);
                kv("attack.ks_alpha", &a.ks_alpha);
            }
        }
        kv("defense.variant", &self.defense.variant);
        kv("defense.tau_start", &self.defense.schedule.tau_start);
        kv("defense.tau_end", &self.defense.schedule.tau_end);
        kv("defense.lambda", &self.defense.lambda);
        kv("defense.theta", &self.defense.theta);
        kv("defense.svd_rank", &self.defense.svd_rank);
        kv("defense.tau_cosine", &self.defense.tau_cosine);
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        kv("eval.seeds", &seeds.join(","));
        kv("eval.k", &self.k);
        kv("eval.negatives", &self.negatives);
        kv("output.dir", &self.output.display());
        kv("output.overwrite", &self.overwrite);
        s
    }
}
