//! Builds and caches the objects every analysis starts from: the corpus
//! bundle (always rebuilt in memory, it is a pure function of two seeds and
//! the plan) and the trained reference and subject checkpoints (cached on
//! disk under `checkpoints/`, verified against the config on reload so a
//! stale directory cannot silently poison a run).

use std::path::Path;

use crate::corpus::{generate_ood_canaries, CorpusBundle, Example};
use crate::error::{Error, Result};
use crate::fmt::sig17;
use crate::harness::config::ExperimentConfig;
use crate::harness::rundir::RunDir;
use crate::seed;
use crate::training::{train, Checkpoint, OptimizerState, TrainConfig};

/// Corpus plus fully trained models: one checkpoint per reference seed and
/// the subject (trained with the forget sets replicated into its stream).
pub struct World {
    pub bundle: CorpusBundle,
    pub references: Vec<Checkpoint>,
    pub subject: Checkpoint,
}

pub fn bundle_for(config: &ExperimentConfig) -> Result<CorpusBundle> {
    CorpusBundle::build(config.corpus_seed, config.seed, &config.bundle)
}

pub fn train_config(config: &ExperimentConfig) -> TrainConfig {
    TrainConfig {
        model: config.model.clone(),
        optimizer: OptimizerState::adam(config.train.lr),
        steps: config.train.steps,
        batch_size: config.train.batch_size,
        checkpoint_every: config.train.checkpoint_every,
    }
}

/// Trains whatever is missing, reuses whatever already matches. Writes each
/// final checkpoint plus a `reports/train_loss_*.csv` loss curve, and hashes
/// both into the manifest.
pub fn ensure_world(rd: &mut RunDir, config: &ExperimentConfig) -> Result<World> {
    let bundle = bundle_for(config)?;
    let tc = train_config(config);
    let ref_fp = bundle.training_fingerprint(false);
    let subj_fp = bundle.training_fingerprint(true);

    let mut references = Vec::new();
    for &s in &config.reference_seeds {
        let label = format!("ref_{s}");
        let ckpt = ensure_checkpoint(rd, config, &bundle, &tc, s, &ref_fp, &[], &label)?;
        references.push(ckpt);
    }
    let subject = ensure_checkpoint(
        rd,
        config,
        &bundle,
        &tc,
        config.subject_seed,
        &subj_fp,
        &bundle.forget_sets,
        "subject",
    )?;
    Ok(World { bundle, references, subject })
}

/// Loads an already-trained world, erroring with the missing path if the
/// train stage has not run yet.
pub fn load_world(rd: &RunDir, config: &ExperimentConfig) -> Result<World> {
    let bundle = bundle_for(config)?;
    let ref_fp = bundle.training_fingerprint(false);
    let subj_fp = bundle.training_fingerprint(true);
    let mut references = Vec::new();
    for &s in &config.reference_seeds {
        let path = rd.abs(&format!("checkpoints/ref_{s}.ckpt"));
        references.push(load_verified(&path, config, s, &ref_fp)?);
    }
    let path = rd.abs("checkpoints/subject.ckpt");
    let subject = load_verified(&path, config, config.subject_seed, &subj_fp)?;
    Ok(World { bundle, references, subject })
}

/// Trains `checkpoints/{label}.ckpt` if missing (on `bundle` with the given
/// forget sets replicated in), or loads and verifies the cached copy.
pub(crate) fn ensure_checkpoint(
    rd: &mut RunDir,
    config: &ExperimentConfig,
    bundle: &CorpusBundle,
    tc: &TrainConfig,
    train_seed: u64,
    effective_fp: &str,
    forget: &[crate::corpus::ForgetSetSpec],
    label: &str,
) -> Result<Checkpoint> {
    let rel = format!("checkpoints/{label}.ckpt");
    let path = rd.abs(&rel);
    if path.exists() {
        return load_verified(&path, config, train_seed, effective_fp);
    }
    rd.append_log(&format!("training {label} (seed {train_seed}, {} steps)", tc.steps))?;
    let run = train(bundle, tc, train_seed, forget)?;
    if let Some(step) = run.nan_abort {
        return Err(Error::NonFinite {
            context: format!("training {label}: loss went non-finite at step {step}"),
        });
    }
    let ckpt = run.last().clone();
    ckpt.save(&path)?;
    rd.note_artifact(&rel)?;
    rd.write_artifact(&format!("reports/train_loss_{label}.csv"), &loss_csv(&run.loss_history))?;
    Ok(ckpt)
}

/// Loads a checkpoint and proves it belongs to this config: same model
/// shape, same training seed, same step count, and the exact training
/// multiset fingerprint. Any mismatch means the directory holds leftovers
/// from another experiment.
fn load_verified(
    path: &Path,
    config: &ExperimentConfig,
    train_seed: u64,
    effective_fp: &str,
) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            msg: "missing; run the train stage first".to_string(),
        });
    }
    let ckpt = Checkpoint::load(path)?;
    let mismatch = |msg: String| Error::Checkpoint {
        path: path.to_path_buf(),
        msg: format!("{msg}; use a fresh output directory"),
    };
    if ckpt.config != config.model {
        return Err(mismatch("model config differs from this experiment's".to_string()));
    }
    if ckpt.provenance.train_seed != train_seed {
        return Err(mismatch(format!(
            "trained with seed {} but this experiment expects {train_seed}",
            ckpt.provenance.train_seed
        )));
    }
    if ckpt.step != config.train.steps as u64 {
        return Err(mismatch(format!(
            "stopped at step {} but this experiment trains for {}",
            ckpt.step, config.train.steps
        )));
    }
    if ckpt.provenance.effective_fingerprint != effective_fp {
        return Err(mismatch("training data fingerprint differs".to_string()));
    }
    Ok(ckpt)
}

/// Canaries guaranteed absent from every model's training stream, drawn
/// from a seed lane no other stage touches. Ids continue past the bundle's
/// so they can never collide with a real example.
pub fn fresh_canaries(
    bundle: &CorpusBundle,
    config: &ExperimentConfig,
    count: usize,
) -> Result<Vec<Example>> {
    generate_ood_canaries(
        seed::derive(config.seed, "canaries/fresh"),
        count,
        config.bundle.canary.payload_len,
        config.bundle.canary.alphabet_size,
        config.bundle.canary.unique,
        bundle.examples.len() as u64,
        &bundle.vocab,
    )
}

fn loss_csv(history: &[f64]) -> String {
    let mut out = String::from("step,loss_bits\n");
    for (i, &loss) in history.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, sig17(loss)));
    }
    out
}
