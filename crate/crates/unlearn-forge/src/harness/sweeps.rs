//! The exposure/utility trade-off sweep: run gradient ascent over one
//! forget set and report, at every recorded step, the set's mean
//! generalized exposure, mean rank exposure, BLEU on the test split, and
//! mean forget-set NLL. Step 0 is always present, so the first row of the
//! table is the untouched subject model.
//!
//! Unlearning traces are cached under `checkpoints/unlearn_*`: an analysis
//! that needs the same trace reloads it (after proving the stored plan is
//! byte-equal to the one it wants) instead of rerunning ascent.

use crate::corpus::CorpusBundle;
use crate::error::{Error, Result};
use crate::fmt::sig17;
use crate::harness::config::{ExperimentConfig, UnlearnSettings};
use crate::harness::evaluate::{bleu_on_test, exposure_series, per_example_ge, reference_scorers};
use crate::harness::rundir::RunDir;
use crate::harness::world::World;
use crate::metrics::ExposureScorer;
use crate::seed;
use crate::training::Checkpoint;
use crate::unlearning::{unlearn, unlearn_with_stop, UnlearnPlan, UnlearnTrace};

pub const TRADEOFF_CSV_HEADER: &str =
    "step,set,mean_gen_exposure,mean_rank_exposure,bleu,mean_forget_nll";

/// One row of a trade-off table.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffRecord {
    pub step: u64,
    pub set: String,
    pub mean_gen_exposure: f64,
    pub mean_rank_exposure: f64,
    pub bleu: f64,
    pub mean_forget_nll: f64,
}

impl TradeoffRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.step,
            self.set,
            sig17(self.mean_gen_exposure),
            sig17(self.mean_rank_exposure),
            sig17(self.bleu),
            sig17(self.mean_forget_nll)
        )
    }
}

/// Instantiates the shared unlearning settings for one forget set. The
/// batch size clamps to |F| (tiny cluster sweeps would otherwise violate
/// the 1..=|F| contract) and the order seed derives from the salt, so two
/// runs over different sets never share a shuffle stream.
pub fn unlearn_plan(
    config: &ExperimentConfig,
    settings: &UnlearnSettings,
    set: &str,
    salt: &str,
    forget_len: usize,
) -> UnlearnPlan {
    UnlearnPlan {
        forget_set: set.to_string(),
        batch_size: settings.batch_size.min(forget_len.max(1)),
        lr: settings.lr,
        max_passes: settings.max_passes,
        early_stop_threshold: settings.early_stop_threshold,
        seed: seed::derive(config.seed, salt),
    }
}

/// Loads the trace cached under `checkpoints/{dirname}` or runs the plan
/// and saves it. A cached trace must carry the exact plan requested;
/// anything else is debris from a different configuration.
pub fn ensure_trace(
    rd: &mut RunDir,
    bundle: &CorpusBundle,
    subject: &Checkpoint,
    plan: &UnlearnPlan,
    dirname: &str,
    refs: Option<&[ExposureScorer]>,
) -> Result<UnlearnTrace> {
    let rel = format!("checkpoints/{dirname}");
    let dir = rd.abs(&rel);
    let trace = if dir.join("trace.json").exists() {
        let trace = UnlearnTrace::load(&dir)?;
        if trace.plan != *plan {
            return Err(Error::Checkpoint {
                path: dir,
                msg: "holds a trace from a different unlearning plan; use a fresh output directory"
                    .to_string(),
            });
        }
        trace
    } else {
        rd.append_log(&format!(
            "unlearning {} (batch {}, lr {}, {} passes)",
            plan.forget_set, plan.batch_size, plan.lr, plan.max_passes
        ))?;
        let trace = match (plan.early_stop_threshold, refs) {
            (None, _) => unlearn(subject, bundle, plan)?,
            (Some(_), Some(refs)) => {
                let ids = bundle.forget_set(&plan.forget_set)?.example_ids.clone();
                unlearn_with_stop(subject, bundle, plan, |ckpt| {
                    let unl = ExposureScorer::new(ckpt, bundle, refs[0].r_ids())?;
                    let ges = per_example_ge(bundle, &ids, refs, &unl)?;
                    Ok(ges.iter().sum::<f64>() / ges.len() as f64)
                })?
            }
            (Some(_), None) => {
                return Err(Error::config(
                    "an early-stop threshold needs reference scorers to evaluate exposure",
                ))
            }
        };
        if trace.nan_truncated {
            rd.append_log(&format!(
                "unlearning {} went non-finite; trace truncated at step {}",
                plan.forget_set,
                trace.last().step
            ))?;
        }
        trace.save(&dir)?;
        trace
    };
    rd.note_tree(&rel)?;
    Ok(trace)
}

/// Builds the trade-off table for one forget set and writes
/// `reports/tradeoff_{set}.csv` (plus per-example exposure curves when the
/// config asks for them).
pub fn run_tradeoff_sweep(
    rd: &mut RunDir,
    world: &World,
    config: &ExperimentConfig,
    set: &str,
) -> Result<String> {
    let spec = world.bundle.forget_set(set)?.clone();
    let refs = reference_scorers(world, spec.kind)?;
    let plan =
        unlearn_plan(config, &config.unlearn, set, &format!("unlearn/{set}"), spec.example_ids.len());
    let trace =
        ensure_trace(rd, &world.bundle, &world.subject, &plan, &format!("unlearn_{set}"), Some(&refs))?;

    let series = exposure_series(&world.bundle, &spec.example_ids, &trace, &refs)?;
    let mut records = Vec::with_capacity(series.len());
    for (point, step) in series.iter().zip(&trace.steps) {
        let bleu =
            bleu_on_test(&step.checkpoint.model(), &world.bundle, config.metrics.bleu_subsample)?;
        records.push(TradeoffRecord {
            step: point.step,
            set: set.to_string(),
            mean_gen_exposure: point.mean_ge,
            mean_rank_exposure: point.mean_rank_exposure,
            bleu,
            mean_forget_nll: step.mean_forget_nll,
        });
    }

    let mut csv = String::from(TRADEOFF_CSV_HEADER);
    csv.push('\n');
    for r in &records {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    rd.write_artifact(&format!("reports/tradeoff_{set}.csv"), &csv)?;

    if config.metrics.per_example_curves {
        let mut curves = String::from("step,id,gen_exposure\n");
        for point in &series {
            for (&id, &ge) in spec.example_ids.iter().zip(&point.per_example_ge) {
                curves.push_str(&format!("{},{id},{}\n", point.step, sig17(ge)));
            }
        }
        rd.write_artifact(&format!("reports/tradeoff_{set}_examples.csv"), &curves)?;
    }

    let first = records.first().expect("a trace always records step 0");
    let last = records.last().expect("a trace always records step 0");
    Ok(format!(
        "tradeoff over {set}: {} steps, mean exposure {:.3} -> {:.3} bits, BLEU {:.3} -> {:.3}",
        records.len() - 1,
        first.mean_gen_exposure,
        last.mean_gen_exposure,
        first.bleu,
        last.bleu
    ))
}
