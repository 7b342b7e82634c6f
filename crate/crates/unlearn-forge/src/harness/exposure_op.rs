//! The per-example exposure report: every exposure-family number for every
//! member of one forget set, under either the untouched subject or a named
//! step of an already-recorded unlearning trace. This op never runs ascent
//! itself; asking for a step that was never recorded is an error naming the
//! missing file.

use rayon::prelude::*;

use crate::corpus::SetKind;
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::evaluate::{mean, reference_scorers};
use crate::harness::rundir::RunDir;
use crate::harness::world::World;
use crate::metrics::{
    clopper_pearson, generalized_exposure, relative_exposure, select_reference_neighbors,
    ExposureReport, ExposureRow, ExposureScorer, ReportMeta,
};
use crate::neighbors::build_index;
use crate::training::Checkpoint;

/// Writes `reports/exposure_{set}.csv` and `.json` (or
/// `exposure_{set}_stepNNNN.*` when a trace step is named).
pub fn run_exposure_report(
    rd: &mut RunDir,
    world: &World,
    config: &ExperimentConfig,
    set: &str,
    step: Option<u64>,
) -> Result<String> {
    let spec = world.bundle.forget_set(set)?.clone();
    let (checkpoint, suffix) = match step {
        None => (world.subject.clone(), String::new()),
        Some(k) => {
            let rel = format!("checkpoints/unlearn_{set}/step_{k:04}.ckpt");
            let path = rd.abs(&rel);
            if !path.exists() {
                return Err(Error::Checkpoint {
                    path,
                    msg: format!("missing; run the unlearn stage for {set} first"),
                });
            }
            (Checkpoint::load(&path)?, format!("_step{k:04}"))
        }
    };

    let refs = reference_scorers(world, spec.kind)?;
    let unl = ExposureScorer::new(&checkpoint, &world.bundle, refs[0].r_ids())?;

    // R_x per example, mined in the subject's own embedding space from
    // held-out pools; the relative-exposure column needs no reference model.
    let pool_ids: &[u64] = match spec.kind {
        SetKind::InD => &world.bundle.aux,
        SetKind::Ood => &world.bundle.r_ood,
    };
    let index = build_index(&world.bundle, pool_ids, &world.subject)?;
    let k_nb = config.metrics.reference_neighbors.min(index.len());
    let subject_model = world.subject.model();

    let rows: Vec<ExposureRow> = spec
        .example_ids
        .par_iter()
        .map(|&id| {
            let ex = world.bundle.example(id);
            let tokens = &ex.tokens;
            let g_refs = refs.iter().map(|s| s.g(tokens)).collect::<Result<Vec<_>>>()?;
            let emb = subject_model.embed_sequence(ex, &world.bundle.vocab)?;
            let nb = select_reference_neighbors(&world.bundle, &index, id, &emb, k_nb)?;
            let subj_x = ExposureScorer::new(&world.subject, &world.bundle, &nb.neighbors)?;
            let unl_x = ExposureScorer::new(&checkpoint, &world.bundle, &nb.neighbors)?;
            let (wins, n) = unl.win_count(tokens)?;
            let (cp_low, cp_high) = clopper_pearson(wins, n, config.metrics.cp_confidence)?;
            Ok(ExposureRow {
                id,
                set: set.to_string(),
                g_ref_mean: mean(&g_refs),
                g_unlearned: unl.g(tokens)?,
                rank_exposure: unl.rank_exposure(tokens)?,
                gen_exposure: generalized_exposure(tokens, &refs, std::slice::from_ref(&unl))?,
                rel_exposure: Some(relative_exposure(
                    &world.bundle,
                    tokens,
                    &nb.neighbors,
                    &subj_x,
                    &unl_x,
                )?),
                cp_low: Some(cp_low),
                cp_high: Some(cp_high),
            })
        })
        .collect::<Result<_>>()?;

    let mut fingerprints: Vec<String> = world
        .references
        .iter()
        .map(|c| c.fingerprint())
        .chain([world.subject.fingerprint(), checkpoint.fingerprint()])
        .collect();
    fingerprints.dedup();
    let report = ExposureReport::new(
        ReportMeta {
            reference_seed_count: world.references.len(),
            reference_set_size: refs[0].r_ids().len(),
            checkpoints: fingerprints,
            confidence: config.metrics.cp_confidence,
        },
        rows,
    );
    report.validate()?;

    let csv_rel = format!("reports/exposure_{set}{suffix}.csv");
    report.write_csv(rd.abs(&csv_rel))?;
    rd.note_artifact(&csv_rel)?;
    let json_rel = format!("reports/exposure_{set}{suffix}.json");
    report.write_json(rd.abs(&json_rel))?;
    rd.note_artifact(&json_rel)?;

    let at = match step {
        None => "subject".to_string(),
        Some(k) => format!("unlearn step {k}"),
    };
    Ok(format!("exposure report over {set} at {at}: {} rows", report.rows.len()))
}
