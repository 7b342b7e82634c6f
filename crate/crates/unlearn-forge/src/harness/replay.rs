//! Stage dispatch and manifest replay. [`execute_stage`] is the single door
//! every pipeline operation goes through, whether invoked from the CLI or
//! from a replay, so the two cannot drift apart. [`replay_run`] re-executes
//! a manifest's stage list in a fresh directory and compares every artifact
//! hash against the original: a clean outcome proves the whole run is a
//! deterministic function of its config.

use std::path::Path;

use crate::corpus::io::{save_bundle, write_examples};
use crate::error::{Error, Result};
use crate::fmt::sig17;
use crate::harness::config::ExperimentConfig;
use crate::harness::evaluate::{bleu_on_test, reference_scorers};
use crate::harness::exposure_op::run_exposure_report;
use crate::harness::frequency::{run_frequency_comparison, run_permuted_frequency};
use crate::harness::memdiff::run_memorization_difficulty;
use crate::harness::perplexity::run_perplexity_distributions;
use crate::harness::relgen::run_relative_vs_generalized;
use crate::harness::rundir::{read_manifest, RunDir, Stage};
use crate::harness::similarity::run_similarity_analysis;
use crate::harness::sweeps::{ensure_trace, run_tradeoff_sweep, unlearn_plan};
use crate::harness::world::{bundle_for, ensure_world, fresh_canaries, load_world};
use crate::training::Checkpoint;

/// Runs one stage against an open run directory and records it in the
/// manifest. Returns a one-line summary for the log.
pub fn execute_stage(config: &ExperimentConfig, rd: &mut RunDir, stage: &Stage) -> Result<String> {
    let summary = match stage {
        Stage::GenCorpus => run_gen_corpus(rd, config)?,
        Stage::GenCanaries { count } => run_gen_canaries(rd, config, *count)?,
        Stage::Train => {
            let world = ensure_world(rd, config)?;
            format!(
                "trained {} reference models and the subject ({} steps each)",
                world.references.len(),
                config.train.steps
            )
        }
        Stage::Unlearn { set } => run_unlearn(rd, config, set)?,
        Stage::Exposure { set, step } => {
            let world = load_world(rd, config)?;
            run_exposure_report(rd, &world, config, set, *step)?
        }
        Stage::Tradeoff { set } => {
            let world = load_world(rd, config)?;
            run_tradeoff_sweep(rd, &world, config, set)?
        }
        Stage::FreqCompare { rotation } => {
            let world = load_world(rd, config)?;
            match rotation {
                None => run_frequency_comparison(rd, &world, config)?,
                Some(r) => run_permuted_frequency(rd, &world, config, *r)?,
            }
        }
        Stage::PerplexityDist { set } => {
            let world = load_world(rd, config)?;
            run_perplexity_distributions(rd, &world, config, set)?
        }
        Stage::MemDiff => {
            let world = load_world(rd, config)?;
            run_memorization_difficulty(rd, &world, config)?
        }
        Stage::Similar { set } => {
            let world = load_world(rd, config)?;
            run_similarity_analysis(rd, &world, config, set)?
        }
        Stage::RelVsGen { set } => {
            let world = load_world(rd, config)?;
            run_relative_vs_generalized(rd, &world, config, set)?
        }
        Stage::Bleu { checkpoint } => run_bleu(rd, config, checkpoint)?,
    };
    rd.record_stage(stage.clone())?;
    rd.append_log(&summary)?;
    Ok(summary)
}

fn run_gen_corpus(rd: &mut RunDir, config: &ExperimentConfig) -> Result<String> {
    let bundle = bundle_for(config)?;
    save_bundle(&rd.abs("corpus"), &bundle)?;
    rd.note_tree("corpus")?;
    Ok(format!(
        "wrote corpus/: {} examples, {} forget sets",
        bundle.examples.len(),
        bundle.forget_sets.len()
    ))
}

fn run_gen_canaries(rd: &mut RunDir, config: &ExperimentConfig, count: usize) -> Result<String> {
    let bundle = bundle_for(config)?;
    let canaries = fresh_canaries(&bundle, config, count)?;
    let rel = "corpus/fresh_canaries.tsv";
    let path = rd.abs(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_examples(&path, &canaries)?;
    rd.note_artifact(rel)?;
    Ok(format!("wrote {count} fresh canaries to {rel}"))
}

fn run_unlearn(rd: &mut RunDir, config: &ExperimentConfig, set: &str) -> Result<String> {
    let world = load_world(rd, config)?;
    let spec = world.bundle.forget_set(set)?.clone();
    let plan =
        unlearn_plan(config, &config.unlearn, set, &format!("unlearn/{set}"), spec.example_ids.len());
    let refs = if plan.early_stop_threshold.is_some() {
        Some(reference_scorers(&world, spec.kind)?)
    } else {
        None
    };
    let trace = ensure_trace(
        rd,
        &world.bundle,
        &world.subject,
        &plan,
        &format!("unlearn_{set}"),
        refs.as_deref(),
    )?;
    let note = if trace.stopped_early {
        " (stopped early)"
    } else if trace.nan_truncated {
        " (truncated on non-finite loss)"
    } else {
        ""
    };
    Ok(format!("unlearned {set}: {} ascent steps{note}", trace.last().step))
}

fn run_bleu(rd: &mut RunDir, config: &ExperimentConfig, checkpoint: &str) -> Result<String> {
    let name = checkpoint.trim_end_matches(".ckpt");
    let rel = format!("checkpoints/{name}.ckpt");
    let path = rd.abs(&rel);
    if !path.exists() {
        return Err(Error::Checkpoint {
            path,
            msg: "missing; run the train or unlearn stage that produces it first".to_string(),
        });
    }
    let ckpt = Checkpoint::load(&path)?;
    let bundle = bundle_for(config)?;
    let bleu = bleu_on_test(&ckpt.model(), &bundle, config.metrics.bleu_subsample)?;
    let csv = format!("checkpoint,bleu\n{name},{}\n", sig17(bleu));
    rd.write_artifact(&format!("reports/bleu_{}.csv", name.replace('/', "_")), &csv)?;
    Ok(format!("BLEU of {name} on the test split: {bleu:.4}"))
}

/// What a replay found when it compared its artifacts to the original
/// manifest's.
#[derive(Debug)]
pub struct ReplayOutcome {
    /// Artifacts present in both runs with identical hashes.
    pub compared: usize,
    /// Artifacts the original had but the replay never produced.
    pub missing: Vec<String>,
    /// Artifacts produced with different bytes.
    pub mismatched: Vec<String>,
}

impl ReplayOutcome {
    pub fn is_clean(&self) -> bool {
        self.missing.is_empty() && self.mismatched.is_empty()
    }
}

/// Re-executes every stage of a recorded manifest into `out_root` and
/// verifies the artifacts byte for byte (by SHA-256).
pub fn replay_run(manifest_path: &Path, out_root: &Path) -> Result<ReplayOutcome> {
    let original = read_manifest(manifest_path)?;
    let mut config = original.config.clone();
    config.output_dir = out_root.to_path_buf();
    let mut rd = RunDir::create(&config)?;
    for stage in &original.stages {
        execute_stage(&config, &mut rd, stage)?;
    }

    let mut outcome = ReplayOutcome { compared: 0, missing: Vec::new(), mismatched: Vec::new() };
    for (rel, digest) in &original.artifacts {
        match rd.manifest.artifacts.get(rel) {
            None => outcome.missing.push(rel.clone()),
            Some(d) if d != digest => outcome.mismatched.push(rel.clone()),
            Some(_) => outcome.compared += 1,
        }
    }
    Ok(outcome)
}
