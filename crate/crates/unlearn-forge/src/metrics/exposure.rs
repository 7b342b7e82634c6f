//! The exposure family: soft comparison, rank exposure, generalized and
//! relative exposure.
//!
//! Everything reduces to comparing one sequence's NLL against the NLLs of a
//! reference string set R under one or more frozen models. [`ExposureScorer`]
//! pins a (model, R) pair and precomputes the reference NLLs once, so
//! scoring a large example set against the same references costs one forward
//! pass per example instead of |R|+1.
//!
//! All logs are base 2. The two generalized-exposure means and both
//! relative-exposure arguments are clamped below at 1e-12 before the log, so
//! a fully memorized example reports a large finite exposure instead of
//! infinity.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusBundle;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::neighbors::{knn, EmbeddingIndex};
use crate::training::Checkpoint;

/// Floor applied to mean soft-comparison values before taking logs.
pub const MEAN_G_CLAMP: f64 = 1e-12;

/// Neighbor count used for R_x selection when nothing else is configured.
pub const DEFAULT_REFERENCE_NEIGHBORS: usize = 10;

fn validate_nll(v: f64, what: &str) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::NonFinite { context: format!("{what} NLL") });
    }
    if v < 0.0 {
        return Err(Error::Metric(format!("negative {what} NLL {v}")));
    }
    Ok(())
}

/// Soft comparison g of a sequence against reference NLLs: the mean over
/// references of L(x)/(L(x)+L(r)). A pair whose NLLs sum below 1e-12 is
/// treated as the symmetric tie 0.5. Output lies in [0, 1]; 0 means fully
/// memorized, 0.5 means indistinguishable from the references.
pub fn soft_comparison(nll_x: f64, nll_refs: &[f64]) -> Result<f64> {
    if nll_refs.is_empty() {
        return Err(Error::Metric("soft comparison needs a nonempty reference set".into()));
    }
    validate_nll(nll_x, "example")?;
    let mut sum = 0.0;
    for &r in nll_refs {
        validate_nll(r, "reference")?;
        let denom = nll_x + r;
        sum += if denom < 1e-12 { 0.5 } else { nll_x / denom };
    }
    Ok(sum / nll_refs.len() as f64)
}

/// 1-based rank of the example among the references: one plus the number of
/// references with strictly lower NLL, so ties never worsen the rank. The
/// rank saturates at n, keeping the empirical probability rank/n at or below
/// one when the example is likelier than none of the references.
pub fn hard_rank(nll_x: f64, nll_refs: &[f64]) -> u64 {
    let below = nll_refs.iter().filter(|r| **r < nll_x).count() as u64;
    (below + 1).min(nll_refs.len().max(1) as u64)
}

/// Rank exposure in bits: log2(n) - log2(rank), equivalently -log2 of the
/// empirical probability rank/n. Rank 1 of n gives log2(n); the median gives
/// about one bit.
pub fn rank_exposure(nll_x: f64, nll_refs: &[f64]) -> Result<f64> {
    if nll_refs.is_empty() {
        return Err(Error::Metric("rank exposure needs a nonempty reference set".into()));
    }
    if !nll_x.is_finite() || nll_refs.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite { context: "rank exposure input".into() });
    }
    let rank = hard_rank(nll_x, nll_refs);
    Ok((nll_refs.len() as f64).log2() - (rank as f64).log2())
}

/// One frozen model paired with one reference set R, reference NLLs
/// precomputed.
#[derive(Debug, Clone)]
pub struct ExposureScorer {
    model: Model,
    r_ids: Vec<u64>,
    r_nll: Vec<f64>,
}

impl ExposureScorer {
    pub fn new(checkpoint: &Checkpoint, bundle: &CorpusBundle, r_ids: &[u64]) -> Result<Self> {
        Self::from_model(checkpoint.model(), bundle, r_ids)
    }

    pub fn from_model(model: Model, bundle: &CorpusBundle, r_ids: &[u64]) -> Result<Self> {
        if r_ids.is_empty() {
            return Err(Error::Metric("exposure scorer needs a nonempty reference set".into()));
        }
        let r_nll = r_ids
            .iter()
            .map(|&id| Ok(model.sequence_nll(&bundle.example(id).tokens)?.total_bits))
            .collect::<Result<Vec<_>>>()?;
        Ok(ExposureScorer { model, r_ids: r_ids.to_vec(), r_nll })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn r_ids(&self) -> &[u64] {
        &self.r_ids
    }

    pub fn r_nll(&self) -> &[f64] {
        &self.r_nll
    }

    /// Total sequence NLL in bits under this scorer's model.
    pub fn nll(&self, tokens: &[u32]) -> Result<f64> {
        Ok(self.model.sequence_nll(tokens)?.total_bits)
    }

    pub fn g(&self, tokens: &[u32]) -> Result<f64> {
        soft_comparison(self.nll(tokens)?, &self.r_nll)
    }

    pub fn rank_exposure(&self, tokens: &[u32]) -> Result<f64> {
        rank_exposure(self.nll(tokens)?, &self.r_nll)
    }

    /// Hard-comparison wins: how many references the example beats (strictly
    /// lower NLL than the reference), out of |R|. Feeds the per-example
    /// Clopper-Pearson column in exposure reports.
    pub fn win_count(&self, tokens: &[u32]) -> Result<(u64, u64)> {
        let nll = self.nll(tokens)?;
        let wins = self.r_nll.iter().filter(|r| **r > nll).count() as u64;
        Ok((wins, self.r_nll.len() as u64))
    }
}

fn clamped_mean_g(gs: &[f64], side: &str) -> Result<f64> {
    if gs.is_empty() {
        return Err(Error::Metric(format!(
            "generalized exposure needs at least one {side} sample"
        )));
    }
    for &g in gs {
        if !g.is_finite() || !(0.0..=1.0).contains(&g) {
            return Err(Error::Metric(format!("soft comparison {g} outside [0,1] on {side} side")));
        }
    }
    Ok((gs.iter().sum::<f64>() / gs.len() as f64).max(MEAN_G_CLAMP))
}

/// Generalized exposure in bits from precomputed soft comparisons:
/// log2(mean reference-side g) - log2(mean unlearned-side g). Positive means
/// the unlearned model still finds the example more likely than reference
/// models do.
pub fn generalized_exposure_from_g(reference_g: &[f64], unlearned_g: &[f64]) -> Result<f64> {
    let gr = clamped_mean_g(reference_g, "reference")?;
    let gu = clamped_mean_g(unlearned_g, "unlearned")?;
    Ok(gr.log2() - gu.log2())
}

fn check_shared_r<'a>(scorers: impl Iterator<Item = &'a ExposureScorer>) -> Result<()> {
    let mut first: Option<&[u64]> = None;
    for s in scorers {
        match first {
            None => first = Some(s.r_ids()),
            Some(ids) if ids == s.r_ids() => {}
            Some(_) => {
                return Err(Error::Metric(
                    "exposure scorers disagree on the reference set R".into(),
                ))
            }
        }
    }
    Ok(())
}

/// Generalized exposure of one sequence: reference scorers are the
/// retrained-without-F seeds, unlearned scorers the post-unlearning
/// sample(s). Every scorer must share the same R.
pub fn generalized_exposure(
    tokens: &[u32],
    reference: &[ExposureScorer],
    unlearned: &[ExposureScorer],
) -> Result<f64> {
    check_shared_r(reference.iter().chain(unlearned))?;
    let gr = reference.iter().map(|s| s.g(tokens)).collect::<Result<Vec<_>>>()?;
    let gu = unlearned.iter().map(|s| s.g(tokens)).collect::<Result<Vec<_>>>()?;
    generalized_exposure_from_g(&gr, &gu)
}

/// Relative exposure in bits from precomputed soft comparisons:
/// log2(mean g of R_x under the subject) - log2(g of x under the unlearned
/// model). Both arguments share the generalized-exposure clamp.
pub fn relative_exposure_from_g(neighbor_g_subject: &[f64], unlearned_g_x: f64) -> Result<f64> {
    if neighbor_g_subject.is_empty() {
        return Err(Error::Metric("relative exposure needs a nonempty R_x".into()));
    }
    let gn = clamped_mean_g(neighbor_g_subject, "neighbor")?;
    let gx = clamped_mean_g(&[unlearned_g_x], "example")?;
    Ok(gn.log2() - gx.log2())
}

/// Ids the subject model trained on: the base corpus plus every forget set.
fn subject_training_ids(bundle: &CorpusBundle) -> HashSet<u64> {
    let mut ids: HashSet<u64> = bundle.train.iter().copied().collect();
    for fs in &bundle.forget_sets {
        ids.extend(fs.example_ids.iter().copied());
    }
    ids
}

fn check_outside_training(bundle: &CorpusBundle, ids: &[u64], what: &str) -> Result<()> {
    let trained = subject_training_ids(bundle);
    for id in ids {
        if trained.contains(id) {
            return Err(Error::Metric(format!(
                "{what} example {id} appears in the subject's training data"
            )));
        }
    }
    Ok(())
}

/// Relative exposure of `x_tokens` given neighbor ids R_x. R_x must be
/// disjoint from everything the subject trained on, forget sets included;
/// `subject` scores the pre-unlearning model, `unlearned` the post-unlearning
/// one, over the same R.
pub fn relative_exposure(
    bundle: &CorpusBundle,
    x_tokens: &[u32],
    r_x: &[u64],
    subject: &ExposureScorer,
    unlearned: &ExposureScorer,
) -> Result<f64> {
    if r_x.is_empty() {
        return Err(Error::Metric("relative exposure needs a nonempty R_x".into()));
    }
    check_outside_training(bundle, r_x, "R_x")?;
    check_shared_r([subject, unlearned].into_iter())?;
    let gn = r_x
        .iter()
        .map(|&id| subject.g(&bundle.example(id).tokens))
        .collect::<Result<Vec<_>>>()?;
    relative_exposure_from_g(&gn, unlearned.g(x_tokens)?)
}

/// The per-example reference set R_x: k pool examples nearest to the target
/// in a reference model's embedding space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceNeighborhood {
    pub target: u64,
    pub neighbors: Vec<u64>,
    pub k: usize,
}

/// Pick R_x for one target: the k nearest pool examples by L2 embedding
/// distance, ties to the lower id. The pool must be disjoint from the
/// subject's training data.
pub fn select_reference_neighbors(
    bundle: &CorpusBundle,
    pool: &EmbeddingIndex,
    target: u64,
    target_embedding: &[f64],
    k: usize,
) -> Result<ReferenceNeighborhood> {
    check_outside_training(bundle, &pool.ids, "R_x pool")?;
    let neighbors =
        knn(pool, Some(target), target_embedding, k)?.into_iter().map(|(id, _)| id).collect();
    Ok(ReferenceNeighborhood { target, neighbors, k })
}

/// One R_x shared by every target: the k pool examples nearest to the
/// targets' embedding centroid.
pub fn select_shared_reference_neighbors(
    bundle: &CorpusBundle,
    pool: &EmbeddingIndex,
    targets: &EmbeddingIndex,
    k: usize,
) -> Result<Vec<u64>> {
    check_outside_training(bundle, &pool.ids, "R_x pool")?;
    if targets.is_empty() {
        return Err(Error::Metric("shared R_x needs at least one target".into()));
    }
    let dim = targets.vectors[0].len();
    let mut centroid = vec![0.0; dim];
    for (_, v) in targets.entries() {
        for (c, x) in centroid.iter_mut().zip(v) {
            *c += x;
        }
    }
    for c in &mut centroid {
        *c /= targets.len() as f64;
    }
    Ok(knn(pool, None, &centroid, k)?.into_iter().map(|(id, _)| id).collect())
}
