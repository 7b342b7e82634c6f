//! Evaluation helpers shared by every analysis: reference scorers keyed to
//! the right R pool, per-example exposure fanned out with rayon (the
//! ordered collect keeps output bytes independent of thread count), the
//! per-step exposure series of an unlearning trace, and BLEU on the test
//! split.

use rayon::prelude::*;

use crate::corpus::{CorpusBundle, SetKind};
use crate::error::Result;
use crate::metrics::{corpus_bleu, generalized_exposure, ExposureScorer};
use crate::model::Model;
use crate::training::Checkpoint;
use crate::unlearning::UnlearnTrace;
use crate::harness::world::World;

/// OOD canaries compare against R_OOD; in-distribution pairs against R_InD.
pub fn reference_pool(bundle: &CorpusBundle, kind: SetKind) -> &[u64] {
    match kind {
        SetKind::Ood => &bundle.r_ood,
        SetKind::InD => &bundle.r_ind,
    }
}

/// One scorer per reference model, all sharing the kind's R pool.
pub fn reference_scorers(world: &World, kind: SetKind) -> Result<Vec<ExposureScorer>> {
    let pool = reference_pool(&world.bundle, kind);
    world.references.iter().map(|c| ExposureScorer::new(c, &world.bundle, pool)).collect()
}

pub fn scorer_for(
    checkpoint: &Checkpoint,
    bundle: &CorpusBundle,
    kind: SetKind,
) -> Result<ExposureScorer> {
    ExposureScorer::new(checkpoint, bundle, reference_pool(bundle, kind))
}

/// Generalized exposure of each listed example, reference models against
/// one unlearned model.
pub fn per_example_ge(
    bundle: &CorpusBundle,
    ids: &[u64],
    refs: &[ExposureScorer],
    unlearned: &ExposureScorer,
) -> Result<Vec<f64>> {
    ids.par_iter()
        .map(|&id| {
            generalized_exposure(&bundle.example(id).tokens, refs, std::slice::from_ref(unlearned))
        })
        .collect()
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Exposure of a set at one point of an unlearning run.
pub struct StepExposure {
    pub step: u64,
    pub per_example_ge: Vec<f64>,
    pub mean_ge: f64,
    pub mean_rank_exposure: f64,
}

/// Evaluates every recorded step of a trace against the same reference
/// scorers (step 0, the pre-unlearning subject, comes first).
pub fn exposure_series(
    bundle: &CorpusBundle,
    ids: &[u64],
    trace: &UnlearnTrace,
    refs: &[ExposureScorer],
) -> Result<Vec<StepExposure>> {
    let mut out = Vec::with_capacity(trace.steps.len());
    for s in &trace.steps {
        let unl = ExposureScorer::new(&s.checkpoint, bundle, refs[0].r_ids())?;
        let per_example_ge = per_example_ge(bundle, ids, refs, &unl)?;
        let ranks: Vec<f64> = ids
            .par_iter()
            .map(|&id| unl.rank_exposure(&bundle.example(id).tokens))
            .collect::<Result<_>>()?;
        out.push(StepExposure {
            step: s.step,
            mean_ge: mean(&per_example_ge),
            mean_rank_exposure: mean(&ranks),
            per_example_ge,
        });
    }
    Ok(out)
}

/// Corpus BLEU of greedy decodes against the test split's targets.
/// `subsample` caps the split at its first n pairs for quick runs.
pub fn bleu_on_test(model: &Model, bundle: &CorpusBundle, subsample: Option<usize>) -> Result<f64> {
    let ids: &[u64] = match subsample {
        Some(n) => &bundle.test[..n.min(bundle.test.len())],
        None => &bundle.test,
    };
    // Targets are exactly source-length; +2 leaves room for a model that
    // overruns before EOS without letting it pad forever.
    let max_len = bundle.plan.corpus.len_range[1] + 2;
    let pairs: Vec<(Vec<u32>, Vec<u32>)> = ids
        .par_iter()
        .map(|&id| {
            let ex = bundle.example(id);
            let sep = 1 + ex.source_len as usize;
            let hyp = model.greedy_decode(&ex.tokens[..=sep], &bundle.vocab, max_len)?;
            Ok((hyp, ex.pair_sides().1.to_vec()))
        })
        .collect::<Result<_>>()?;
    let (hyps, refs): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    corpus_bleu(&hyps, &refs)
}
