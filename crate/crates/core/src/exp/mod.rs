//! Experiment configuration, orchestration and result tables.

pub mod config;
pub mod runner;
pub mod table;

pub use config::{ExperimentConfig, ExperimentMode, StrategyKind};
pub use runner::{cells, regenerate_report, run_experiment, run_records, seed_split, threads_from_env, Cell, RunArtifacts, RunRecord};
pub use table::{render_markdown, MetricStats, ResultRow, ResultTable, Stat};
