//! Experiment orchestration: configuration, synthetic data, the
//! generate/attack/train/evaluate pipeline, persistence and reporting.

mod config;
mod pipeline;
mod report;
mod synth;

pub use config::{DataSource, ExperimentConfig};
pub use pipeline::{
    attack_graph, load_data, run_pipeline, seed_dir, seeded, sha256_file, sha256_hex, splits_for, train_victim,
    validation_filter, PipelineReport, SeedRun, CONFIG_FILE, REPORT_FILE, REPORT_FORMAT,
};
pub use report::{load_reports, report_table, Cell, ReportTable};
pub use synth::{generate_synthetic, SyntheticSpec};
