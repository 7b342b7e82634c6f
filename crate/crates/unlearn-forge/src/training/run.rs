//! The deterministic minibatch training loop.
//!
//! One run owns its parameters exclusively; everything stochastic flows from
//! the train seed (model init and stream order), so a run is bit-reproducible
//! from its provenance. Checkpoints are emitted at step 0, at the cadence,
//! and at the final step; a non-finite loss aborts the run while keeping the
//! checkpoints emitted so far, plus a snapshot of the last finite state when
//! the parameters are still healthy.

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusBundle, ForgetSetSpec, TrainStream};
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::training::checkpoint::{Checkpoint, ForgetRef, Provenance};
use crate::training::optimizer::{Direction, OptimizerState};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub optimizer: OptimizerState,
    pub steps: usize,
    pub batch_size: usize,
    /// Checkpoint cadence in steps; `None` means every 10% of `steps`.
    pub checkpoint_every: Option<usize>,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.optimizer.validate()?;
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::config("checkpoint_every must be at least 1"));
        }
        Ok(())
    }

    fn cadence(&self) -> usize {
        self.checkpoint_every.unwrap_or_else(|| (self.steps / 10).max(1))
    }
}

/// Output of one training run. On a NaN abort `nan_abort` holds the step
/// whose update could not be completed and `checkpoints` still contains
/// everything emitted before it.
#[derive(Debug)]
pub struct TrainRun {
    pub checkpoints: Vec<Checkpoint>,
    /// Batch loss in bits at every completed step.
    pub loss_history: Vec<f64>,
    pub nan_abort: Option<u64>,
}

impl TrainRun {
    pub fn last(&self) -> &Checkpoint {
        self.checkpoints.last().expect("a run always emits the step-0 checkpoint")
    }
}

fn provenance(
    bundle: &CorpusBundle,
    seed_value: u64,
    forget_sets: &[ForgetSetSpec],
    batch_size: usize,
) -> Provenance {
    Provenance {
        train_seed: seed_value,
        corpus_fingerprint: bundle.training_fingerprint(false),
        effective_fingerprint: bundle.fingerprint_for(forget_sets),
        forget_sets: forget_sets
            .iter()
            .map(|s| ForgetRef { name: s.name.clone(), frequency: s.frequency })
            .collect(),
        batch_size,
    }
}

/// Trains a fresh model for `config.steps` updates on T plus the given
/// forget sets (empty slice = reference model). Returns the emitted
/// checkpoints and the per-step loss curve.
pub fn train(
    bundle: &CorpusBundle,
    config: &TrainConfig,
    seed_value: u64,
    forget_sets: &[ForgetSetSpec],
) -> Result<TrainRun> {
    config.validate()?;
    let mut stream =
        TrainStream::new(bundle, forget_sets, seed_value, config.steps, config.batch_size)?;
    let mut model = Model::init(config.model.clone(), seed_value)?;
    let mut optimizer = config.optimizer.reset();
    let prov = provenance(bundle, seed_value, forget_sets, config.batch_size);

    let snapshot = |model: &Model, opt: &OptimizerState, step: u64| Checkpoint {
        config: model.config.clone(),
        params: model.params.clone(),
        optimizer: opt.clone(),
        step,
        provenance: prov.clone(),
    };

    let mut run = TrainRun {
        checkpoints: vec![snapshot(&model, &optimizer, 0)],
        loss_history: Vec::with_capacity(config.steps),
        nan_abort: None,
    };
    let cadence = config.cadence() as u64;

    for step in 1..=config.steps as u64 {
        let ids = stream.next().expect("stream yields exactly `steps` batches");
        let batch: Vec<&[u32]> =
            ids.iter().map(|&id| bundle.example(id).tokens.as_slice()).collect();
        let outcome = model.nll_gradient(&batch);
        let blew_up = match &outcome {
            Ok((loss, grads)) => !loss.is_finite() || !grads.all_finite(),
            Err(Error::NonFinite { .. }) => true,
            Err(_) => false,
        };
        if blew_up {
            // The parameters have not been touched by the bad batch; keep
            // them as the last good state when they are themselves finite.
            if model.params.all_finite() && run.last().step != step - 1 {
                run.checkpoints.push(snapshot(&model, &optimizer, step - 1));
            }
            run.nan_abort = Some(step);
            return Ok(run);
        }
        let (loss, grads) = outcome?;
        optimizer.apply_update(&mut model.params, &grads, Direction::Descent)?;
        if !model.params.all_finite() {
            run.nan_abort = Some(step);
            return Ok(run);
        }
        run.loss_history.push(loss);
        if step % cadence == 0 || step == config.steps as u64 {
            run.checkpoints.push(snapshot(&model, &optimizer, step));
        }
    }
    Ok(run)
}

/// Reference models on T alone (one per seed), then the subject on T plus
/// every forget set in the bundle. All runs share the model and optimizer
/// config; the T fingerprint in every provenance is identical.
pub fn train_reference_and_subject(
    bundle: &CorpusBundle,
    config: &TrainConfig,
    reference_seeds: &[u64],
    subject_seed: u64,
) -> Result<(Vec<TrainRun>, TrainRun)> {
    if reference_seeds.is_empty() {
        return Err(Error::config("at least one reference seed is required"));
    }
    let mut references = Vec::with_capacity(reference_seeds.len());
    for &seed_value in reference_seeds {
        references.push(train(bundle, config, seed_value, &[])?);
    }
    let subject = train(bundle, config, subject_seed, &bundle.forget_sets)?;
    Ok((references, subject))
}

/// Re-runs the training a checkpoint came from, straight from its
/// provenance, and returns the checkpoint at the same step. Callers assert
/// bit-equality with [`ModelParams::bit_eq`].
///
/// [`ModelParams::bit_eq`]: crate::model::ModelParams::bit_eq
pub fn replay_checkpoint(bundle: &CorpusBundle, ckpt: &Checkpoint) -> Result<Checkpoint> {
    let t_fingerprint = bundle.training_fingerprint(false);
    if ckpt.provenance.corpus_fingerprint != t_fingerprint {
        return Err(Error::Replay(format!(
            "bundle fingerprint {t_fingerprint} does not match checkpoint provenance {}",
            ckpt.provenance.corpus_fingerprint
        )));
    }
    let mut forget_sets = Vec::with_capacity(ckpt.provenance.forget_sets.len());
    for fref in &ckpt.provenance.forget_sets {
        let spec = bundle
            .forget_set(&fref.name)
            .map_err(|_| Error::Replay(format!("bundle has no forget set named {}", fref.name)))?;
        if spec.frequency != fref.frequency {
            return Err(Error::Replay(format!(
                "forget set {} frequency {} does not match provenance {}",
                fref.name, spec.frequency, fref.frequency
            )));
        }
        forget_sets.push(spec.clone());
    }
    let effective = bundle.fingerprint_for(&forget_sets);
    if effective != ckpt.provenance.effective_fingerprint {
        return Err(Error::Replay(format!(
            "effective multiset fingerprint {effective} does not match provenance {}",
            ckpt.provenance.effective_fingerprint
        )));
    }
    let config = TrainConfig {
        model: ckpt.config.clone(),
        optimizer: ckpt.optimizer.reset(),
        steps: ckpt.step as usize,
        batch_size: ckpt.provenance.batch_size,
        checkpoint_every: Some((ckpt.step as usize).max(1)),
    };
    let run = train(bundle, &config, ckpt.provenance.train_seed, &forget_sets)?;
    if let Some(step) = run.nan_abort {
        return Err(Error::Replay(format!("replay hit a non-finite loss at step {step}")));
    }
    Ok(run.checkpoints.into_iter().last().expect("replay emits at least the initial checkpoint"))
}

/// First place the smoothed loss curve rises more than `tolerance` above its
/// running minimum, ignoring the first `burn_in` steps. `None` means the
/// curve is healthy. The desk sanity guard uses window 100, burn-in 10% of
/// steps, tolerance 0.10.
pub fn check_loss_curve(
    history: &[f64],
    window: usize,
    burn_in: usize,
    tolerance: f64,
) -> Option<(usize, f64)> {
    if history.len() < window.max(2) || window == 0 {
        return None;
    }
    let mut smoothed = Vec::with_capacity(history.len() - window + 1);
    let mut acc: f64 = history[..window].iter().sum();
    smoothed.push(acc / window as f64);
    for i in window..history.len() {
        acc += history[i] - history[i - window];
        smoothed.push(acc / window as f64);
    }
    // smoothed[j] covers steps j+1 ..= j+window (1-indexed steps).
    let mut running_min = f64::INFINITY;
    for (j, &s) in smoothed.iter().enumerate() {
        let last_step = j + window;
        if last_step <= burn_in {
            continue;
        }
        if s > running_min * (1.0 + tolerance) {
            return Some((last_step, s / running_min));
        }
        running_min = running_min.min(s);
    }
    None
}
