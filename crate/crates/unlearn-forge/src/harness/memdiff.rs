//! Memorization against difficulty. For every forget set this writes the
//! per-example scatter (difficulty under the reference family, memorization
//! of the subject against it), the Pearson correlation per set, and a
//! three-way difficulty clustering whose clusters each get their own small
//! unlearning sweep, asking whether hard examples cost more utility to
//! forget.
//!
//! A correlation can be legitimately undefined: if the subject and the
//! references are the same weights, every memorization score is exactly
//! zero and the variance vanishes. The summary marks that case rather than
//! inventing a number.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fmt::{sig17, sig17_opt};
use crate::harness::config::ExperimentConfig;
use crate::harness::evaluate::{bleu_on_test, exposure_series, reference_scorers};
use crate::harness::rundir::RunDir;
use crate::harness::sweeps::{ensure_trace, unlearn_plan};
use crate::harness::world::World;
use crate::metrics::{difficulty, difficulty_clusters, memorization, pearson};
use crate::model::Model;

pub const MEM_DIFF_CSV_HEADER: &str = "id,difficulty,memorization,cluster";
pub const MEM_DIFF_SUMMARY_HEADER: &str = "set,n,pearson,correlation_defined";
pub const MEM_DIFF_CLUSTERS_HEADER: &str = "cluster,step,mean_gen_exposure,bleu,mean_forget_nll";

const N_CLUSTERS: usize = 3;

/// Per-set scatter, correlation, and per-difficulty-cluster sweeps, over
/// every forget set in the bundle.
pub fn run_memorization_difficulty(
    rd: &mut RunDir,
    world: &World,
    config: &ExperimentConfig,
) -> Result<String> {
    let ref_models: Vec<Model> = world.references.iter().map(|c| c.model()).collect();
    let ref_views: Vec<&Model> = ref_models.iter().collect();
    let subject_model = world.subject.model();

    let mut summary = String::from(MEM_DIFF_SUMMARY_HEADER);
    summary.push('\n');
    for spec in world.bundle.forget_sets.clone() {
        let rows: Vec<(u64, f64, f64)> = spec
            .example_ids
            .par_iter()
            .map(|&id| {
                let tokens = &world.bundle.example(id).tokens;
                let d = difficulty(tokens, &ref_views)?;
                let m = memorization(tokens, &[&subject_model], &ref_views)?;
                Ok((id, d, m))
            })
            .collect::<Result<_>>()?;

        let diffs: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let mems: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let correlation = match pearson(&diffs, &mems) {
            Ok(r) => Some(r),
            Err(Error::Metric(_)) => None,
            Err(e) => return Err(e),
        };

        let items: Vec<(u64, f64)> = rows.iter().map(|r| (r.0, r.1)).collect();
        let clusters = difficulty_clusters(&items, N_CLUSTERS)?;
        let mut cluster_of = std::collections::HashMap::new();
        for (j, cluster) in clusters.iter().enumerate() {
            for &id in cluster {
                cluster_of.insert(id, j);
            }
        }

        let mut csv = String::from(MEM_DIFF_CSV_HEADER);
        csv.push('\n');
        for (id, d, m) in &rows {
            csv.push_str(&format!("{id},{},{},{}\n", sig17(*d), sig17(*m), cluster_of[id]));
        }
        rd.write_artifact(&format!("reports/mem_diff_{}.csv", spec.name), &csv)?;

        run_cluster_sweeps(rd, world, config, &spec.name, &clusters)?;

        summary.push_str(&format!(
            "{},{},{},{}\n",
            spec.name,
            rows.len(),
            sig17_opt(correlation),
            correlation.is_some()
        ));
    }
    rd.write_artifact("reports/mem_diff_summary.csv", &summary)?;
    Ok(format!(
        "memorization vs difficulty over {} forget sets ({N_CLUSTERS} clusters each)",
        world.bundle.forget_sets.len()
    ))
}

/// One unlearning sweep per difficulty cluster of a set, reported together
/// so the clusters' exposure/utility paths compare directly.
fn run_cluster_sweeps(
    rd: &mut RunDir,
    world: &World,
    config: &ExperimentConfig,
    set: &str,
    clusters: &[Vec<u64>],
) -> Result<String> {
    let spec = world.bundle.forget_set(set)?.clone();
    let refs = reference_scorers(world, spec.kind)?;
    let mut csv = String::from(MEM_DIFF_CLUSTERS_HEADER);
    csv.push('\n');
    for (j, ids) in clusters.iter().enumerate() {
        if ids.is_empty() {
            continue;
        }
        // The cluster becomes a pseudo forget set on a cloned bundle, so
        // the ordinary unlearning path applies unchanged.
        let name = format!("{set}.cluster{j}");
        let mut bundle_j = world.bundle.clone();
        bundle_j.forget_sets.push(crate::corpus::ForgetSetSpec {
            name: name.clone(),
            kind: spec.kind,
            frequency: spec.frequency,
            example_ids: ids.clone(),
        });
        let plan = unlearn_plan(config, &config.unlearn, &name, &format!("unlearn/{name}"), ids.len());
        let trace = ensure_trace(
            rd,
            &bundle_j,
            &world.subject,
            &plan,
            &format!("unlearn_{set}_cluster{j}"),
            Some(&refs),
        )?;
        let series = exposure_series(&bundle_j, ids, &trace, &refs)?;
        for (point, step) in series.iter().zip(&trace.steps) {
            let bleu =
                bleu_on_test(&step.checkpoint.model(), &bundle_j, config.metrics.bleu_subsample)?;
            csv.push_str(&format!(
                "{j},{},{},{},{}\n",
                point.step,
                sig17(point.mean_ge),
                sig17(bleu),
                sig17(step.mean_forget_nll)
            ));
        }
    }
    rd.write_artifact(&format!("reports/mem_diff_clusters_{set}.csv"), &csv)?;
    Ok(format!("cluster sweeps for {set}"))
}
