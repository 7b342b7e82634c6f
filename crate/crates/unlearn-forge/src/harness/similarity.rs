//! Collateral damage of unlearning: alongside the forget set itself, track
//! the exposure of its nearest neighbors that stay in the training stream
//! (mined from the sibling forget sets of the same kind) and of the nearest
//! held-out strings (a subset of R_InD). Neighborhoods are mined by L2
//! distance in a reference model's embedding space, so the notion of
//! "similar" is independent of what the subject memorized.

use std::collections::BTreeSet;

use crate::corpus::SetKind;
use crate::error::Result;
use crate::fmt::sig17;
use crate::harness::config::ExperimentConfig;
use crate::harness::evaluate::{mean, per_example_ge, reference_scorers};
use crate::harness::rundir::RunDir;
use crate::harness::sweeps::{ensure_trace, unlearn_plan};
use crate::harness::world::World;
use crate::metrics::ExposureScorer;
use crate::neighbors::{build_index, similar_rows, write_similar_csv};

pub const SIMILARITY_CSV_HEADER: &str = "step,group,size,mean_gen_exposure";

/// Runs the shared unlearning trace for `set` and writes
/// `reports/similarity_{set}.csv` (groups per step), plus the mined
/// neighborhoods as `reports/similar_{set}_training.csv` and
/// `reports/similar_{set}_heldout.csv`.
pub fn run_similarity_analysis(
    rd: &mut RunDir,
    world: &World,
    config: &ExperimentConfig,
    set: &str,
) -> Result<String> {
    let spec = world.bundle.forget_set(set)?.clone();
    let main_rel = format!("reports/similarity_{set}.csv");
    if spec.example_ids.is_empty() {
        // Nothing to unlearn and nothing to mine around; the table is
        // well-defined and empty.
        rd.write_artifact(&main_rel, &format!("{SIMILARITY_CSV_HEADER}\n"))?;
        return Ok(format!("similarity over {set}: empty set, header-only table"));
    }

    let mining = &world.references[0];
    let queries = build_index(&world.bundle, &spec.example_ids, mining)?;

    // In-training neighbors come from the sibling sets of the same kind:
    // strings of the same shape that stay in the subject's training stream
    // while this set is unlearned.
    let train_pool: Vec<u64> = world
        .bundle
        .forget_sets
        .iter()
        .filter(|s| s.kind == spec.kind && s.name != spec.name)
        .flat_map(|s| s.example_ids.iter().copied())
        .collect();
    let training_similar = if train_pool.is_empty() {
        None
    } else {
        let pool = build_index(&world.bundle, &train_pool, mining)?;
        let k = config.metrics.reference_neighbors.min(pool.len());
        let rows = similar_rows(&queries, &pool, k)?;
        let rel = format!("reports/similar_{set}_training.csv");
        write_similar_csv(&rows, rd.abs(&rel))?;
        rd.note_artifact(&rel)?;
        let ids: BTreeSet<u64> = rows.iter().map(|r| r.neighbor_id).collect();
        Some(ids.into_iter().collect::<Vec<u64>>())
    };

    let held_pool = build_index(&world.bundle, &world.bundle.r_ind, mining)?;
    let k = config.metrics.reference_neighbors.min(held_pool.len());
    let held_rows = similar_rows(&queries, &held_pool, k)?;
    let rel = format!("reports/similar_{set}_heldout.csv");
    write_similar_csv(&held_rows, rd.abs(&rel))?;
    rd.note_artifact(&rel)?;
    let heldout_similar: Vec<u64> = {
        let ids: BTreeSet<u64> = held_rows.iter().map(|r| r.neighbor_id).collect();
        ids.into_iter().collect()
    };

    let refs_ind = reference_scorers(world, SetKind::InD)?;
    let refs_ood;
    let refs_kind: &[ExposureScorer] = match spec.kind {
        SetKind::InD => &refs_ind,
        SetKind::Ood => {
            refs_ood = reference_scorers(world, SetKind::Ood)?;
            &refs_ood
        }
    };

    let plan =
        unlearn_plan(config, &config.unlearn, set, &format!("unlearn/{set}"), spec.example_ids.len());
    let trace =
        ensure_trace(rd, &world.bundle, &world.subject, &plan, &format!("unlearn_{set}"), Some(refs_kind))?;

    let mut csv = String::from(SIMILARITY_CSV_HEADER);
    csv.push('\n');
    for s in &trace.steps {
        let unl_kind = ExposureScorer::new(&s.checkpoint, &world.bundle, refs_kind[0].r_ids())?;
        let unl_ind;
        let unl_for_heldout = match spec.kind {
            SetKind::InD => &unl_kind,
            SetKind::Ood => {
                unl_ind = ExposureScorer::new(&s.checkpoint, &world.bundle, refs_ind[0].r_ids())?;
                &unl_ind
            }
        };
        // The held-out neighbors are in-distribution strings no matter what
        // kind the forget set is, so they always score against R_InD.
        let mut groups: Vec<(&str, &[u64], &[ExposureScorer], &ExposureScorer)> =
            vec![("forget", &spec.example_ids, refs_kind, &unl_kind)];
        if let Some(ids) = &training_similar {
            groups.push(("training_similar", ids, refs_kind, &unl_kind));
        }
        groups.push(("heldout_similar", &heldout_similar, &refs_ind, unl_for_heldout));
        for (group, ids, refs, unl) in groups {
            let ges = per_example_ge(&world.bundle, ids, refs, unl)?;
            csv.push_str(&format!("{},{group},{},{}\n", s.step, ids.len(), sig17(mean(&ges))));
        }
    }
    rd.write_artifact(&main_rel, &csv)?;
    let tracked = 1 + training_similar.is_some() as usize + 1;
    Ok(format!("similarity over {set}: {tracked} groups across {} steps", trace.steps.len()))
}
