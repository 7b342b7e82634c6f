//! Relative exposure against generalized exposure. Generalized exposure
//! needs retrained reference models; relative exposure replaces them with
//! R_x, the target's nearest held-out neighbors in the subject's own
//! embedding space, scored by the subject before unlearning. If the two
//! track each other, the cheap metric can stand in for the expensive one.
//! This op unlearns with a gentler plan than the main sweeps (many small
//! steps), evaluates both metrics per example at step 0 and at the final
//! step, and reports the per-step Pearson correlation.

use rayon::prelude::*;

use crate::corpus::SetKind;
use crate::error::{Error, Result};
use crate::fmt::{sig17, sig17_opt};
use crate::harness::config::ExperimentConfig;
use crate::harness::evaluate::reference_scorers;
use crate::harness::rundir::RunDir;
use crate::harness::sweeps::{ensure_trace, unlearn_plan};
use crate::harness::world::World;
use crate::metrics::{
    generalized_exposure, pearson, relative_exposure, select_reference_neighbors, ExposureScorer,
};
use crate::neighbors::build_index;
use crate::unlearning::UnlearnStep;

pub const REL_VS_GEN_CSV_HEADER: &str = "step,id,relative_exposure,gen_exposure";
pub const REL_VS_GEN_SUMMARY_HEADER: &str = "step,n,pearson,correlation_defined";

/// Writes `reports/rel_vs_gen_{set}.csv` (per example, at the first and
/// last recorded steps) and `reports/rel_vs_gen_summary_{set}.csv`.
pub fn run_relative_vs_generalized(
    rd: &mut RunDir,
    world: &World,
    config: &ExperimentConfig,
    set: &str,
) -> Result<String> {
    let spec = world.bundle.forget_set(set)?.clone();
    let refs = reference_scorers(world, spec.kind)?;
    let plan = unlearn_plan(
        config,
        &config.rel_vs_gen_unlearn,
        set,
        &format!("unlearn-relgen/{set}"),
        spec.example_ids.len(),
    );
    let trace =
        ensure_trace(rd, &world.bundle, &world.subject, &plan, &format!("relgen_{set}"), Some(&refs))?;

    // R_x pools stay clear of everything the subject trained on: held-out
    // pairs for in-distribution targets, the canary pool for OOD ones.
    let pool_ids: &[u64] = match spec.kind {
        SetKind::InD => &world.bundle.aux,
        SetKind::Ood => &world.bundle.r_ood,
    };
    let index = build_index(&world.bundle, pool_ids, &world.subject)?;
    let k = config.metrics.reference_neighbors.min(index.len());
    let subject_model = world.subject.model();
    let neighborhoods: Vec<(u64, Vec<u64>)> = spec
        .example_ids
        .iter()
        .map(|&id| {
            let emb = subject_model.embed_sequence(world.bundle.example(id), &world.bundle.vocab)?;
            let nb = select_reference_neighbors(&world.bundle, &index, id, &emb, k)?;
            Ok((id, nb.neighbors))
        })
        .collect::<Result<_>>()?;
    // One subject-side scorer per target, shared across both steps.
    let subj_scorers: Vec<ExposureScorer> = neighborhoods
        .par_iter()
        .map(|(_, r_x)| ExposureScorer::new(&world.subject, &world.bundle, r_x))
        .collect::<Result<_>>()?;

    let first = trace.steps.first().expect("a trace always records step 0");
    let last = trace.last();
    let eval: Vec<&UnlearnStep> =
        if first.step == last.step { vec![first] } else { vec![first, last] };

    let mut csv = String::from(REL_VS_GEN_CSV_HEADER);
    csv.push('\n');
    let mut summary = String::from(REL_VS_GEN_SUMMARY_HEADER);
    summary.push('\n');
    let mut last_corr = None;
    for s in eval {
        let unl_kind = ExposureScorer::new(&s.checkpoint, &world.bundle, refs[0].r_ids())?;
        let pairs: Vec<(f64, f64)> = neighborhoods
            .par_iter()
            .zip(subj_scorers.par_iter())
            .map(|((id, r_x), subj)| {
                let tokens = &world.bundle.example(*id).tokens;
                let unl_x = ExposureScorer::new(&s.checkpoint, &world.bundle, r_x)?;
                let re = relative_exposure(&world.bundle, tokens, r_x, subj, &unl_x)?;
                let ge = generalized_exposure(tokens, &refs, std::slice::from_ref(&unl_kind))?;
                Ok((re, ge))
            })
            .collect::<Result<_>>()?;
        for ((id, _), (re, ge)) in neighborhoods.iter().zip(&pairs) {
            csv.push_str(&format!("{},{id},{},{}\n", s.step, sig17(*re), sig17(*ge)));
        }
        let res: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let ges: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let corr = match pearson(&res, &ges) {
            Ok(r) => Some(r),
            Err(Error::Metric(_)) => None,
            Err(e) => return Err(e),
        };
        summary.push_str(&format!(
            "{},{},{},{}\n",
            s.step,
            pairs.len(),
            sig17_opt(corr),
            corr.is_some()
        ));
        last_corr = Some((s.step, corr));
    }
    rd.write_artifact(&format!("reports/rel_vs_gen_{set}.csv"), &csv)?;
    rd.write_artifact(&format!("reports/rel_vs_gen_summary_{set}.csv"), &summary)?;

    let (step, corr) = last_corr.expect("at least one step evaluated");
    Ok(match corr {
        Some(r) => format!("relative vs generalized over {set}: step {step} correlation {r:.3}"),
        None => format!("relative vs generalized over {set}: step {step} correlation undefined"),
    })
}
