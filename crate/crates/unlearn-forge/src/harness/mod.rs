//! Experiment orchestration. A run is a directory: `config.json` (the
//! complete [`ExperimentConfig`]), `manifest.json` (executed stages plus a
//! SHA-256 per artifact), `checkpoints/` (trained models and unlearning
//! traces), `reports/` and `histograms/` (CSV only, floats at 17
//! significant digits). Every stage goes through [`execute_stage`], and
//! [`replay_run`] re-executes a manifest in a fresh directory and checks
//! each artifact hash, which keeps "the pipeline is deterministic" a tested
//! property instead of a hope.
//!
//! The analyses:
//!
//! * [`run_tradeoff_sweep`]: exposure and BLEU per unlearning step.
//! * [`run_frequency_comparison`] / [`run_permuted_frequency`]: injection
//!   frequency against exposure, with a frequency-rotation control.
//! * [`run_perplexity_distributions`]: forget-set NLL histograms at chosen
//!   points of the run.
//! * [`run_memorization_difficulty`]: per-example scatter, correlation, and
//!   per-difficulty-cluster sweeps.
//! * [`run_similarity_analysis`]: collateral exposure of embedding-space
//!   neighbors.
//! * [`run_relative_vs_generalized`]: does the reference-free metric track
//!   the reference-based one?
//! * [`run_exposure_report`]: every exposure number per example.

mod config;
mod evaluate;
mod exposure_op;
mod frequency;
mod memdiff;
mod perplexity;
mod relgen;
mod replay;
mod rundir;
mod similarity;
mod sweeps;
mod world;

pub use config::{
    apply_override, parse_override, ExperimentConfig, MetricSettings, TrainSettings,
    UnlearnSettings, CONFIG_SCHEMA_VERSION,
};
pub use evaluate::{
    bleu_on_test, exposure_series, mean, per_example_ge, reference_pool, reference_scorers,
    scorer_for, StepExposure,
};
pub use exposure_op::run_exposure_report;
pub use frequency::{
    permuted_frequencies, run_frequency_comparison, run_permuted_frequency, FREQUENCY_CSV_HEADER,
    PERMUTED_CSV_HEADER,
};
pub use memdiff::{
    run_memorization_difficulty, MEM_DIFF_CLUSTERS_HEADER, MEM_DIFF_CSV_HEADER,
    MEM_DIFF_SUMMARY_HEADER,
};
pub use perplexity::{run_perplexity_distributions, PERPLEXITY_CSV_HEADER};
pub use relgen::{run_relative_vs_generalized, REL_VS_GEN_CSV_HEADER, REL_VS_GEN_SUMMARY_HEADER};
pub use replay::{execute_stage, replay_run, ReplayOutcome};
pub use rundir::{RunDir, RunManifest, Stage, MANIFEST_SCHEMA_VERSION};
pub use similarity::{run_similarity_analysis, SIMILARITY_CSV_HEADER};
pub use sweeps::{ensure_trace, run_tradeoff_sweep, unlearn_plan, TradeoffRecord, TRADEOFF_CSV_HEADER};
pub use world::{bundle_for, ensure_world, fresh_canaries, load_world, train_config, World};

#[cfg(test)]
mod tests;
