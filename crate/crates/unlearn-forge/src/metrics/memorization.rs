//! Memorization and difficulty scores.
//!
//! Both compare likelihoods across model families. Memorization is the
//! log-ratio of the subject family's mean likelihood of an example to the
//! reference family's; difficulty is the example's mean NLL under the
//! reference family alone. Means are taken over likelihoods, not over
//! log-likelihoods, so one seed that memorized an example hard can dominate
//! its family's mean, exactly as a Monte-Carlo estimate of the expected
//! likelihood should behave.

use crate::error::{Error, Result};
use crate::model::Model;

/// Mean of per-seed likelihoods 2^(-NLL), floored at the smallest positive
/// normal so a fully underflowed family still yields a finite log.
fn mean_likelihood(nll_bits: &[f64], side: &str) -> Result<f64> {
    if nll_bits.is_empty() {
        return Err(Error::Metric(format!("memorization needs at least one {side} checkpoint")));
    }
    if nll_bits.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { context: format!("{side} NLL") });
    }
    let mean = nll_bits.iter().map(|nll| (-nll).exp2()).sum::<f64>() / nll_bits.len() as f64;
    Ok(mean.max(f64::MIN_POSITIVE))
}

/// Memorization in bits from per-seed total NLLs (base-2) of one example.
pub fn memorization_from_nll(subject_nll_bits: &[f64], reference_nll_bits: &[f64]) -> Result<f64> {
    let subject = mean_likelihood(subject_nll_bits, "subject")?;
    let reference = mean_likelihood(reference_nll_bits, "reference")?;
    Ok(subject.log2() - reference.log2())
}

/// Memorization of a token sequence across two model families.
pub fn memorization(tokens: &[u32], subjects: &[&Model], references: &[&Model]) -> Result<f64> {
    let subject_nll = family_nll(tokens, subjects)?;
    let reference_nll = family_nll(tokens, references)?;
    memorization_from_nll(&subject_nll, &reference_nll)
}

/// Difficulty in bits: mean reference-family NLL of the example.
pub fn difficulty_from_nll(reference_nll_bits: &[f64]) -> Result<f64> {
    if reference_nll_bits.is_empty() {
        return Err(Error::Metric("difficulty needs at least one reference checkpoint".into()));
    }
    Ok(reference_nll_bits.iter().sum::<f64>() / reference_nll_bits.len() as f64)
}

/// Difficulty of a token sequence under a reference family.
pub fn difficulty(tokens: &[u32], references: &[&Model]) -> Result<f64> {
    difficulty_from_nll(&family_nll(tokens, references)?)
}

fn family_nll(tokens: &[u32], family: &[&Model]) -> Result<Vec<f64>> {
    family.iter().map(|m| Ok(m.sequence_nll(tokens)?.total_bits)).collect()
}

/// Split examples into difficulty clusters, ordered easiest to hardest.
///
/// Examples are stably sorted by (difficulty, id) and cut positionally into
/// `n_clusters` near-equal parts, any remainder going to the lowest
/// clusters. Ties therefore never reorder across ids, and an equal-value
/// block straddling a boundary sends its lowest-id members to the lower
/// cluster.
pub fn difficulty_clusters(
    items: &[(u64, f64)],
    n_clusters: usize,
) -> Result<Vec<Vec<u64>>> {
    if n_clusters == 0 {
        return Err(Error::Metric("cannot cluster into zero groups".into()));
    }
    if items.len() < n_clusters {
        return Err(Error::Metric(format!(
            "{} examples cannot fill {n_clusters} clusters",
            items.len()
        )));
    }
    for (id, d) in items {
        if !d.is_finite() {
            return Err(Error::NonFinite { context: format!("difficulty of example {id}") });
        }
    }
    let mut order: Vec<(f64, u64)> = items.iter().map(|&(id, d)| (d, id)).collect();
    order.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let base = items.len() / n_clusters;
    let remainder = items.len() % n_clusters;
    let mut clusters = Vec::with_capacity(n_clusters);
    let mut cursor = 0;
    for c in 0..n_clusters {
        let size = base + usize::from(c < remainder);
        clusters.push(order[cursor..cursor + size].iter().map(|&(_, id)| id).collect());
        cursor += size;
    }
    Ok(clusters)
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn identical_families_have_zero_memorization() {
        let config = ModelConfig {
            context_window: 6,
            embed_dim: 3,
            hidden_dims: vec![4],
            vocab_size: 12,
            pad_token: 4,
        };
        let model = Model::init(config, 3).unwrap();
        let tokens = [0u32, 7, 8, 9, 1];
        let m = memorization(&tokens, &[&model], &[&model]).unwrap();
        assert_eq!(m, 0.0);
    }

    #[test]
    fn log_ratio_arithmetic_matches_hand_values() {
        // Likelihoods 0.8 vs 0.2 differ by exactly two bits.
        let m = memorization_from_nll(&[-(0.8f64.log2())], &[-(0.2f64.log2())]).unwrap();
        assert!((m - 2.0).abs() < 1e-12, "{m}");

        // Reference seeds average in likelihood space: mean of
        // {0.1, 0.2, 0.4} is 7/30, so a subject at exactly 7/30 scores 0.
        let refs: Vec<f64> = [0.1f64, 0.2, 0.4].iter().map(|f| -f.log2()).collect();
        let subject = [-(7.0f64 / 30.0).log2()];
        let m = memorization_from_nll(&subject, &refs).unwrap();
        assert!(m.abs() < 1e-12, "{m}");
        // Averaging logs instead would have given a different subject NLL:
        // the geometric mean of those likelihoods is 0.2.
        let wrong = memorization_from_nll(&[-(0.2f64.log2())], &refs).unwrap();
        assert!(wrong.abs() > 0.2, "{wrong}");
    }

    #[test]
    fn underflowed_likelihoods_stay_finite() {
        let m = memorization_from_nll(&[5000.0], &[3.0]).unwrap();
        assert!(m.is_finite());
        assert!(m < -1000.0);
    }

    #[test]
    fn difficulty_is_the_mean_reference_nll() {
        assert_eq!(difficulty_from_nll(&[2.0, 4.0, 6.0]).unwrap(), 4.0);
        // Likelihood 1 means zero bits; 0.25 means two.
        assert_eq!(difficulty_from_nll(&[0.0]).unwrap(), 0.0);
        assert_eq!(difficulty_from_nll(&[-(0.25f64.log2())]).unwrap(), 2.0);
        assert!(difficulty_from_nll(&[]).is_err());
        assert!(memorization_from_nll(&[], &[1.0]).is_err());
        assert!(memorization_from_nll(&[1.0], &[]).is_err());
    }

    #[test]
    fn nine_difficulties_split_into_clean_tertiles() {
        let items: Vec<(u64, f64)> = (1..=9).map(|i| (i, i as f64)).collect();
        let clusters = difficulty_clusters(&items, 3).unwrap();
        assert_eq!(clusters, vec![vec![1, 2, 3], vec![4, 5, 6], vec![7, 8, 9]]);
    }

    #[test]
    fn equal_difficulties_split_near_evenly_by_id() {
        let items: Vec<(u64, f64)> = (0..10).map(|i| (i, 1.5)).collect();
        let clusters = difficulty_clusters(&items, 3).unwrap();
        let sizes: Vec<usize> = clusters.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 3, 3]);
        assert_eq!(clusters[0], vec![0, 1, 2, 3]);
        assert_eq!(clusters[2], vec![7, 8, 9]);
    }

    #[test]
    fn boundary_ties_go_to_the_lower_cluster() {
        // Value 2.0 appears at ids 1..4 and straddles the first boundary.
        let items = [(0, 1.0), (1, 2.0), (2, 2.0), (3, 2.0), (4, 3.0), (5, 9.0)];
        let clusters = difficulty_clusters(&items, 3).unwrap();
        assert_eq!(clusters, vec![vec![0, 1], vec![2, 3], vec![4, 5]]);
    }

    #[test]
    fn cluster_means_are_strictly_ordered_on_continuous_inputs() {
        let mut rng = crate::seed::rng(5, "memorization/clusters");
        for trial in 0..25 {
            let n = rng.gen_range(3..40);
            let items: Vec<(u64, f64)> =
                (0..n).map(|i| (i, rng.gen_range(0.0..100.0))).collect();
            let clusters = difficulty_clusters(&items, 3).unwrap();
            let by_id: std::collections::HashMap<u64, f64> = items.iter().copied().collect();
            let means: Vec<f64> = clusters
                .iter()
                .map(|c| c.iter().map(|id| by_id[id]).sum::<f64>() / c.len() as f64)
                .collect();
            assert!(
                means[0] < means[1] && means[1] < means[2],
                "trial {trial}: means {means:?}"
            );
            assert_eq!(clusters.iter().map(Vec::len).sum::<usize>(), n as usize);
        }
    }

    #[test]
    fn too_few_examples_are_rejected() {
        assert!(difficulty_clusters(&[(0, 1.0), (1, 2.0)], 3).is_err());
        assert!(difficulty_clusters(&[(0, 1.0)], 0).is_err());
        assert!(difficulty_clusters(&[(0, f64::NAN), (1, 1.0), (2, 2.0)], 3).is_err());
    }
}
