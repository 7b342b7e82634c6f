//! Per-sequence NLL distributions of a forget set at interesting points of
//! an unlearning run: the untouched subject, the final step, the first step
//! whose mean generalized exposure falls to each configured threshold, and
//! a reference model that never saw the set. All histograms for one set
//! share a single bin layout sized to cover every collection, so the
//! distributions overlay directly.

use rayon::prelude::*;

use crate::error::Result;
use crate::fmt::{sig17, sig17_opt};
use crate::harness::config::ExperimentConfig;
use crate::harness::evaluate::{exposure_series, reference_scorers};
use crate::harness::rundir::RunDir;
use crate::harness::sweeps::{ensure_trace, unlearn_plan};
use crate::harness::world::World;
use crate::metrics::{distribution_summary, write_histogram_csv, HistogramSpec};
use crate::model::Model;

pub const PERPLEXITY_CSV_HEADER: &str = "bundle,threshold,step,reached,mean_nll,variance,n";

struct Collection {
    label: String,
    threshold: Option<f64>,
    step: Option<u64>,
    reached: bool,
    values: Vec<f64>,
}

fn forget_nlls(model: &Model, world: &World, ids: &[u64]) -> Result<Vec<f64>> {
    ids.par_iter()
        .map(|&id| Ok(model.sequence_nll(&world.bundle.example(id).tokens)?.total_bits))
        .collect()
}

/// Writes `reports/perplexity_{set}.csv` plus one
/// `histograms/perplexity_{set}_{label}.csv` per collection.
pub fn run_perplexity_distributions(
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

    let mut collections = Vec::new();
    let first = trace.steps.first().expect("a trace always records step 0");
    let last = trace.last();
    collections.push(Collection {
        label: "subject".to_string(),
        threshold: None,
        step: Some(first.step),
        reached: true,
        values: forget_nlls(&first.checkpoint.model(), world, &spec.example_ids)?,
    });
    collections.push(Collection {
        label: "final".to_string(),
        threshold: None,
        step: Some(last.step),
        reached: true,
        values: forget_nlls(&last.checkpoint.model(), world, &spec.example_ids)?,
    });
    for &tau in &config.metrics.ge_thresholds {
        // First step whose mean exposure is at or below the threshold; a
        // run that never gets there reports the final step, marked.
        let hit = series.iter().position(|p| p.mean_ge <= tau);
        let idx = hit.unwrap_or(trace.steps.len() - 1);
        collections.push(Collection {
            label: format!("ge_le_{}", tau.to_string().replace('.', "_")),
            threshold: Some(tau),
            step: Some(trace.steps[idx].step),
            reached: hit.is_some(),
            values: forget_nlls(&trace.steps[idx].checkpoint.model(), world, &spec.example_ids)?,
        });
    }
    // The reference bundle does not depend on any threshold or step: it is
    // what "never memorized" looks like for these strings.
    collections.push(Collection {
        label: "reference".to_string(),
        threshold: None,
        step: None,
        reached: true,
        values: forget_nlls(refs[0].model(), world, &spec.example_ids)?,
    });

    let all: Vec<f64> = collections.iter().flat_map(|c| c.values.iter().copied()).collect();
    let hist_spec = HistogramSpec::covering(&all, config.metrics.histogram_bins)?;

    let mut csv = String::from(PERPLEXITY_CSV_HEADER);
    csv.push('\n');
    for c in &collections {
        let summary = distribution_summary(&c.values, &hist_spec)?;
        let rel = format!("histograms/perplexity_{set}_{}.csv", c.label);
        write_histogram_csv(&summary.histogram, rd.abs(&rel))?;
        rd.note_artifact(&rel)?;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.label,
            sig17_opt(c.threshold),
            c.step.map(|s| s.to_string()).unwrap_or_default(),
            c.reached,
            sig17(summary.mean),
            sig17(summary.variance),
            summary.n
        ));
    }
    rd.write_artifact(&format!("reports/perplexity_{set}.csv"), &csv)?;
    Ok(format!("perplexity distributions over {set}: {} collections", collections.len()))
}
