use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ctdg_poison::attack::validate_constraints;
use ctdg_poison::cli::{
    attack_graph, load_data, load_reports, report_table, run_pipeline, seeded, splits_for, train_victim,
    validation_filter, DataSource, ExperimentConfig,
};
use ctdg_poison::ctdg::{
    load_interactions, load_perturbation_manifest, save_interactions, save_perturbation_manifest, ColumnMapping,
    DynamicGraph,
};
use ctdg_poison::eval::{evaluate_protocol, ProtocolOptions};
use ctdg_poison::tgnn::{load_checkpoint, save_checkpoint};
use ctdg_poison::{Error, Result};

#[derive(Parser)]
#[command(name = "ctdg-poison", version, about = "Poisoning attacks and robust training for temporal link prediction")]
struct Cli {
    /// Experiment config (`section.key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Start from the small synthetic-benchmark preset instead of the
    /// full-scale defaults; `--config` and `--set` apply on top.
    #[arg(long, global = true)]
    benchmark: bool,
    /// Override one config key, e.g. `--set attack.p=0.3`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GraphArgs {
    /// Interaction file (`u,v,t[,features]`).
    #[arg(long, conflicts_with = "manifest")]
    graph: Option<PathBuf>,
    /// Corrupted graph written by `attack`.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a raw interaction log into the native format.
    Ingest {
        input: PathBuf,
        /// Columns follow the JODIE layout (user, item, timestamp, label, features).
        #[arg(long)]
        jodie: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the configured synthetic graph.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an undefended model; writes checkpoint.json and metrics.json.
    Train {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the configured attack; writes perturbations.csv and compliance.json.
    Attack {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train under the configured defense; writes checkpoint, ledger and metrics.
    Defend {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on validation and test edges.
    Eval {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the metrics here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate run directories into a test MRR grid.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Also write the grid as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Full pipeline over every configured seed.
    Run,
}

fn config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = if cli.benchmark {
        ExperimentConfig::benchmark()
    } else {
        ExperimentConfig::default()
    };
    if let Some(p) = &cli.config {
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        cfg = cfg.apply_text(&text)?;
    }
    for o in &cli.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("override `{o}` is not KEY=VALUE")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn graph(args: &GraphArgs, cfg: &ExperimentConfig) -> Result<DynamicGraph> {
    match (&args.graph, &args.manifest) {
        (Some(p), _) => load_interactions(p, None),
        (None, Some(p)) => Ok(load_perturbation_manifest(p)?.0),
        (None, None) => load_data(&cfg.data),
    }
}

fn create(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)?).map_err(|e| Error::io(path, e))
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = config(cli)?;
    match &cli.command {
        Command::Ingest { input, jodie, out } => {
            let mapping = jodie.then(ColumnMapping::jodie);
            let g = load_interactions(input, mapping.as_ref())?;
            save_interactions(&g, out)?;
            println!("{} interactions, {} nodes", g.len(), g.num_nodes());
        }
        Command::Synth { out } => {
            if !matches!(cfg.data, DataSource::Synthetic(_)) {
                return Err(Error::invalid("synth needs a synthetic data source"));
            }
            let g = load_data(&cfg.data)?;
            save_interactions(&g, out)?;
            println!("{} interactions, {} nodes", g.len(), g.num_nodes());
        }
        Command::Train { graph: ga, seed, out } | Command::Defend { graph: ga, seed, out } => {
            let g = graph(ga, &cfg)?;
            let splits = splits_for(&g, cfg.split)?;
            let (m, t, _) = seeded(&cfg, &g, *seed);
            let mut defense = cfg.defense.clone();
            if matches!(cli.command, Command::Train { .. }) {
                defense.variant = ctdg_poison::defense::DefenseVariant::None;
            }
            let (model, run) = train_victim(&g, &splits, &m, &t, &defense).map_err(|e| e.in_stage("train"))?;
            create(out)?;
            save_checkpoint(&model, Some(&t), &out.join("checkpoint.json"))?;
            if !run.ledger.is_empty() {
                run.ledger.write_csv(out.join("ledger.csv"))?;
            }
            let opts = ProtocolOptions {
                negatives: cfg.negatives,
                k: cfg.k,
                seed: *seed,
                filter: validation_filter(&defense, &run.report)?,
            };
            let metrics = evaluate_protocol(&model, &g, &splits, &opts).map_err(|e| e.in_stage("evaluate"))?;
            write_json(&out.join("metrics.json"), &metrics)?;
            println!("validation MRR {:.2}, test MRR {:.2}", metrics.0.mrr, metrics.1.mrr);
        }
        Command::Attack { graph: ga, seed, out } => {
            let g = graph(ga, &cfg)?;
            if g.num_adversarial() > 0 {
                return Err(Error::invalid("input graph is already attacked"));
            }
            let splits = splits_for(&g, cfg.split)?;
            let (m, t, a) = seeded(&cfg, &g, *seed);
            let a = a.ok_or_else(|| Error::invalid("no attack configured (attack.kind)"))?;
            let outcome = attack_graph(&g, &splits, &a, &m, &t).map_err(|e| e.in_stage("attack"))?;
            let report = validate_constraints(&outcome.graph, &outcome.perturbations);
            create(out)?;
            save_perturbation_manifest(&outcome.graph, &outcome.batch_ids, &out.join("perturbations.csv"))?;
            write_json(&out.join("compliance.json"), &report)?;
            println!(
                "{} adversarial edges, constraints {}",
                outcome.perturbations.len(),
                if report.compliant() { "satisfied" } else { "violated" }
            );
        }
        Command::Eval {
            graph: ga,
            checkpoint,
            seed,
            out,
        } => {
            let g = graph(ga, &cfg)?;
            let splits = splits_for(&g, cfg.split)?;
            let (model, _) = load_checkpoint(checkpoint)?;
            let opts = ProtocolOptions {
                negatives: cfg.negatives,
                k: cfg.k,
                seed: *seed,
                filter: None,
            };
            let metrics = evaluate_protocol(&model, &g, &splits, &opts).map_err(|e| e.in_stage("evaluate"))?;
            match out {
                Some(p) => write_json(p, &metrics)?,
                None => println!("{}", serde_json::to_string_pretty(&metrics)?),
            }
        }
        Command::Report { runs, csv } => {
            let table = report_table(&load_reports(runs)?)?;
            print!("{}", table.to_text());
            if let Some(p) = csv {
                fs::write(p, table.to_csv()?).map_err(|e| Error::io(p, e))?;
            }
        }
        Command::Run => {
            let report = run_pipeline(&cfg)?;
            for r in &report.runs {
                println!(
                    "seed {}: validation MRR {:.2}, test MRR {:.2}",
                    r.seed, r.validation.mrr, r.test.mrr
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
