//! Gradient-ascent unlearning with a per-step checkpoint trace.
//!
//! [`unlearn`] starts from a subject checkpoint and walks batches of the
//! forget set, applying one SGD ascent update per step and recording every
//! post-step checkpoint; step 0 of the trace is the untouched subject. An
//! optional early-stop callback (typically mean generalized exposure, via
//! [`early_stop_on_exposure`]) is evaluated at every step, step 0 included,
//! and halts the trace the first time it sinks to the threshold.
//!
//! Ascent deliberately uses plain SGD with fresh state: the subject's Adam
//! moments encode descent momentum, and mixing them into ascent would make
//! the first steps move somewhere other than up the forget-set gradient.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::CorpusBundle;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::seed;
use crate::training::{Checkpoint, Direction, OptimizerState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnlearnPlan {
    /// Name of the forget set in the corpus bundle.
    pub forget_set: String,
    pub batch_size: usize,
    pub lr: f64,
    pub max_passes: usize,
    /// Threshold in bits for the early-stop callback; the callback itself is
    /// passed to [`unlearn_with_stop`] at run time.
    pub early_stop_threshold: Option<f64>,
    /// Seed for the batch order (a fresh shuffle of F per pass).
    pub seed: u64,
}

impl UnlearnPlan {
    pub fn new(forget_set: impl Into<String>, batch_size: usize, seed_value: u64) -> UnlearnPlan {
        UnlearnPlan {
            forget_set: forget_set.into(),
            batch_size,
            lr: 1e-3,
            max_passes: 4,
            early_stop_threshold: None,
            seed: seed_value,
        }
    }

    fn validate(&self, forget_len: usize) -> Result<()> {
        if self.batch_size == 0 || self.batch_size > forget_len {
            return Err(Error::config(format!(
                "batch_size {} outside 1..=|F| = {forget_len}",
                self.batch_size
            )));
        }
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(Error::config(format!("unlearning lr {} is not finite and >= 0", self.lr)));
        }
        if self.max_passes == 0 {
            return Err(Error::config("max_passes must be at least 1"));
        }
        Ok(())
    }

    /// ceil(|F| / batch_size), the number of ascent updates in one pass.
    pub fn steps_per_pass(&self, forget_len: usize) -> usize {
        forget_len.div_ceil(self.batch_size)
    }
}

/// One recorded point of an unlearning run.
#[derive(Debug, Clone)]
pub struct UnlearnStep {
    pub step: u64,
    pub checkpoint: Checkpoint,
    /// Mean per-sequence NLL over the whole forget set, in bits.
    pub mean_forget_nll: f64,
    /// What the early-stop callback returned here, when one was running.
    pub stop_metric: Option<f64>,
}

#[derive(Debug)]
pub struct UnlearnTrace {
    pub plan: UnlearnPlan,
    /// Step 0 is the pre-unlearning subject.
    pub steps: Vec<UnlearnStep>,
    /// True when a non-finite update cut the run short of its plan.
    pub nan_truncated: bool,
    /// True when the early-stop callback hit the threshold.
    pub stopped_early: bool,
}

/// Outcome of [`early_stop_on_exposure`]: the first step at or below the
/// threshold, or the last recorded step with `reached = false`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoppingStep {
    pub step: u64,
    pub reached: bool,
}

impl UnlearnTrace {
    pub fn last(&self) -> &UnlearnStep {
        self.steps.last().expect("a trace always records step 0")
    }

    pub fn stopping_step(&self) -> StoppingStep {
        StoppingStep { step: self.last().step, reached: self.stopped_early }
    }
}

/// The full batch schedule for a plan: one seeded shuffle of F per pass,
/// chopped sequentially into `ceil(|F|/batch)` chunks. Exposed so replay
/// checks can re-derive the exact update sequence from the plan alone.
pub fn batch_schedule(ids: &[u64], plan: &UnlearnPlan) -> Vec<Vec<u64>> {
    let mut rng = seed::rng(plan.seed, "unlearn/order");
    let mut batches = Vec::with_capacity(plan.max_passes * plan.steps_per_pass(ids.len()));
    for _ in 0..plan.max_passes {
        let mut order = ids.to_vec();
        order.shuffle(&mut rng);
        for chunk in order.chunks(plan.batch_size) {
            batches.push(chunk.to_vec());
        }
    }
    batches
}

/// Gradient-ascent unlearning without an early-stop callback.
pub fn unlearn(subject: &Checkpoint, bundle: &CorpusBundle, plan: &UnlearnPlan) -> Result<UnlearnTrace> {
    run(subject, bundle, plan, None)
}

/// Gradient-ascent unlearning that halts at the first step (step 0 included)
/// where `stop_metric(checkpoint) <= plan.early_stop_threshold`.
pub fn unlearn_with_stop(
    subject: &Checkpoint,
    bundle: &CorpusBundle,
    plan: &UnlearnPlan,
    mut stop_metric: impl FnMut(&Checkpoint) -> Result<f64>,
) -> Result<UnlearnTrace> {
    if plan.early_stop_threshold.is_none() {
        return Err(Error::config("plan has a stop callback but no early_stop_threshold"));
    }
    run(subject, bundle, plan, Some(&mut stop_metric))
}

/// Drives a trace with a mean-exposure evaluator and reports where it
/// stopped: the first step with mean exposure at or below the threshold, or
/// the final step flagged `reached = false`.
pub fn early_stop_on_exposure(
    subject: &Checkpoint,
    bundle: &CorpusBundle,
    plan: &UnlearnPlan,
    threshold_bits: f64,
    exposure: impl FnMut(&Checkpoint) -> Result<f64>,
) -> Result<(UnlearnTrace, StoppingStep)> {
    let mut plan = plan.clone();
    plan.early_stop_threshold = Some(threshold_bits);
    let trace = unlearn_with_stop(subject, bundle, &plan, exposure)?;
    let stopping = trace.stopping_step();
    Ok((trace, stopping))
}

type StopMetric<'a> = &'a mut dyn FnMut(&Checkpoint) -> Result<f64>;

fn run(
    subject: &Checkpoint,
    bundle: &CorpusBundle,
    plan: &UnlearnPlan,
    mut stop_metric: Option<StopMetric<'_>>,
) -> Result<UnlearnTrace> {
    let spec = bundle.forget_set(&plan.forget_set)?;
    if spec.example_ids.is_empty() {
        return Err(Error::config(format!("forget set {} is empty", plan.forget_set)));
    }
    plan.validate(spec.example_ids.len())?;
    subject.config.validate()?;

    let forget: Vec<&[u32]> =
        spec.example_ids.iter().map(|&id| bundle.example(id).tokens.as_slice()).collect();
    let mut model = Model { config: subject.config.clone(), params: subject.params.clone() };
    let mut optimizer = OptimizerState::sgd(plan.lr);
    let threshold = plan.early_stop_threshold.unwrap_or(f64::NEG_INFINITY);

    let mut trace = UnlearnTrace {
        plan: plan.clone(),
        steps: Vec::new(),
        nan_truncated: false,
        stopped_early: false,
    };

    // Ok(None) = the forget-set NLL is no longer finite; the caller
    // truncates the trace there.
    let mut record = |trace: &mut UnlearnTrace,
                      model: &Model,
                      opt: &OptimizerState,
                      step: u64|
     -> Result<Option<bool>> {
            let mut total = 0.0;
            for tokens in &forget {
                match model.sequence_nll(tokens) {
                    Ok(nll) => total += nll.total_bits,
                    Err(Error::NonFinite { .. }) => return Ok(None),
                    Err(e) => return Err(e),
                }
            }
            let checkpoint = Checkpoint {
                config: model.config.clone(),
                params: model.params.clone(),
                optimizer: opt.clone(),
                step: subject.step,
                provenance: subject.provenance.clone(),
            };
            let stop_value = match stop_metric.as_mut() {
                Some(f) => Some(f(&checkpoint)?),
                None => None,
            };
            trace.steps.push(UnlearnStep {
                step,
                checkpoint,
                mean_forget_nll: total / forget.len() as f64,
                stop_metric: stop_value,
            });
            Ok(Some(stop_value.is_some_and(|v| v <= threshold)))
        };

    match record(&mut trace, &model, &optimizer, 0)? {
        None => {
            return Err(Error::NonFinite {
                context: "forget-set NLL of the pre-unlearning subject".into(),
            })
        }
        Some(true) => {
            trace.stopped_early = true;
            return Ok(trace);
        }
        Some(false) => {}
    }

    for (k, batch_ids) in batch_schedule(&spec.example_ids, plan).into_iter().enumerate() {
        let batch: Vec<&[u32]> =
            batch_ids.iter().map(|&id| bundle.example(id).tokens.as_slice()).collect();
        let outcome = model.nll_gradient(&batch);
        let blew_up = match &outcome {
            Ok((loss, grads)) => !loss.is_finite() || !grads.all_finite(),
            Err(Error::NonFinite { .. }) => true,
            Err(_) => false,
        };
        if blew_up {
            trace.nan_truncated = true;
            return Ok(trace);
        }
        let (_, grads) = outcome?;
        optimizer.apply_update(&mut model.params, &grads, Direction::Ascent)?;
        if !model.params.all_finite() {
            trace.nan_truncated = true;
            return Ok(trace);
        }
        match record(&mut trace, &model, &optimizer, (k + 1) as u64)? {
            None => {
                trace.nan_truncated = true;
                return Ok(trace);
            }
            Some(true) => {
                trace.stopped_early = true;
                return Ok(trace);
            }
            Some(false) => {}
        }
    }
    Ok(trace)
}

/// Serializable companion of a saved trace: the plan, one checkpoint path
/// per recorded step, and the per-step mean forget-set NLL.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceManifest {
    pub plan: UnlearnPlan,
    pub steps: Vec<TraceStepMeta>,
    pub nan_truncated: bool,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceStepMeta {
    pub step: u64,
    pub checkpoint_path: String,
    pub mean_forget_nll: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_metric: Option<f64>,
}

impl UnlearnTrace {
    /// Writes `step_NNNN.ckpt` per recorded step plus `trace.json` into
    /// `dir`, and returns the manifest that was written.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<TraceManifest> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut steps = Vec::with_capacity(self.steps.len());
        for s in &self.steps {
            let name = format!("step_{:04}.ckpt", s.step);
            s.checkpoint.save(dir.join(&name))?;
            steps.push(TraceStepMeta {
                step: s.step,
                checkpoint_path: name,
                mean_forget_nll: s.mean_forget_nll,
                stop_metric: s.stop_metric,
            });
        }
        let manifest = TraceManifest {
            plan: self.plan.clone(),
            steps,
            nan_truncated: self.nan_truncated,
            stopped_early: self.stopped_early,
        };
        let path = dir.join("trace.json");
        let json = serde_json::to_vec_pretty(&manifest)?;
        std::fs::write(&path, json).map_err(|e| Error::io(path, e))?;
        Ok(manifest)
    }

    /// Reads a trace saved by [`UnlearnTrace::save`].
    pub fn load(dir: impl AsRef<Path>) -> Result<UnlearnTrace> {
        let dir = dir.as_ref();
        let path = dir.join("trace.json");
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: TraceManifest = serde_json::from_slice(&bytes)?;
        let mut steps = Vec::with_capacity(manifest.steps.len());
        for meta in &manifest.steps {
            steps.push(UnlearnStep {
                step: meta.step,
                checkpoint: Checkpoint::load(dir.join(&meta.checkpoint_path))?,
                mean_forget_nll: meta.mean_forget_nll,
                stop_metric: meta.stop_metric,
            });
        }
        Ok(UnlearnTrace {
            plan: manifest.plan,
            steps,
            nan_truncated: manifest.nan_truncated,
            stopped_early: manifest.stopped_early,
        })
    }
}

#[cfg(test)]
mod tests;
