use rand::Rng;
use tempfile::tempdir;

use super::*;
use crate::corpus::{BundlePlan, CanaryParams, CorpusBundle, CorpusParams};
use crate::model::ModelConfig;
use crate::training::{train, OptimizerState, TrainConfig};

fn hand_index(ids: &[u64], vectors: &[&[f64]]) -> EmbeddingIndex {
    EmbeddingIndex {
        ids: ids.to_vec(),
        vectors: vectors.iter().map(|v| v.to_vec()).collect(),
        checkpoint_fingerprint: "hand".into(),
    }
}

fn tiny_bundle() -> CorpusBundle {
    let plan = BundlePlan {
        corpus: CorpusParams {
            n_train: 40,
            n_validation: 24,
            n_test: 24,
            len_range: [3, 4],
            context_budget: 8,
        },
        canary: CanaryParams { payload_len: 4, alphabet_size: 16, unique: true },
        ood_sets: vec![("ood_x3".into(), 4, 3)],
        ind_sets: vec![("ind_x2".into(), 4, 2)],
        r_ood_size: 8,
        r_ind_size: 8,
    };
    CorpusBundle::build(11, 7, &plan).unwrap()
}

fn tiny_checkpoint(bundle: &CorpusBundle) -> crate::training::Checkpoint {
    let config = TrainConfig {
        model: ModelConfig {
            context_window: 8,
            embed_dim: 4,
            hidden_dims: vec![8],
            vocab_size: 69,
            pad_token: 4,
        },
        optimizer: OptimizerState::adam(1e-2),
        steps: 0,
        batch_size: 4,
        checkpoint_every: None,
    };
    train(bundle, &config, 5, &[]).unwrap().last().clone()
}

#[test]
fn hand_placed_2d_pool_sorts_by_manual_distances() {
    let index = hand_index(
        &[1, 2, 3, 4, 5],
        &[&[3.0, 4.0], &[1.0, 0.0], &[0.0, 2.0], &[1.0, 1.0], &[0.0, 0.0]],
    );
    let got = knn(&index, None, &[0.0, 0.0], 5).unwrap();
    let want = [(5, 0.0), (2, 1.0), (4, 2f64.sqrt()), (3, 2.0), (1, 5.0)];
    assert_eq!(got.len(), want.len());
    for ((id, d), (wid, wd)) in got.iter().zip(want) {
        assert_eq!(*id, wid);
        assert!((d - wd).abs() < 1e-15, "id {id}: {d} vs {wd}");
    }
}

#[test]
fn equidistant_neighbors_rank_by_lower_id() {
    let index = hand_index(&[7, 3], &[&[2.0], &[2.0]]);
    let got = knn(&index, None, &[2.0], 2).unwrap();
    assert_eq!(got.iter().map(|(id, _)| *id).collect::<Vec<_>>(), vec![3, 7]);
}

#[test]
fn self_exclusion_drops_exactly_the_query_row() {
    let index = hand_index(&[1, 2, 3], &[&[0.0], &[5.0], &[9.0]]);
    let with_self = knn(&index, None, &[5.0], 3).unwrap();
    assert_eq!(with_self[0], (2, 0.0));
    let without = knn(&index, Some(2), &[5.0], 3).unwrap();
    assert_eq!(without.len(), 2);
    assert!(without.iter().all(|(id, _)| *id != 2));
}

#[test]
fn k_and_dimension_bounds_are_enforced() {
    let index = hand_index(&[1, 2, 3], &[&[0.0], &[5.0], &[9.0]]);
    assert!(knn(&index, None, &[0.0], 0).is_err());
    assert!(knn(&index, None, &[0.0], 4).is_err());
    assert!(knn(&index, None, &[0.0, 1.0], 2).is_err());
    assert_eq!(knn(&index, None, &[0.0], 3).unwrap().len(), 3);
}

#[test]
fn knn_matches_a_full_sort_oracle_on_random_pools() {
    let mut rng = crate::seed::rng(9, "neighbors/oracle");
    let dim = 6;
    let ids: Vec<u64> = (0..40).collect();
    let vectors: Vec<Vec<f64>> =
        ids.iter().map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let index = EmbeddingIndex {
        ids: ids.clone(),
        vectors: vectors.clone(),
        checkpoint_fingerprint: "hand".into(),
    };
    for _ in 0..10 {
        let query: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut oracle: Vec<(f64, u64)> = ids
            .iter()
            .map(|&id| {
                let v = &vectors[id as usize];
                let d2: f64 = v.iter().zip(&query).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2.sqrt(), id)
            })
            .collect();
        oracle.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for k in [1, 3, 17, 40] {
            let got = knn(&index, None, &query, k).unwrap();
            for ((id, d), (od, oid)) in got.iter().zip(&oracle) {
                assert_eq!(id, oid);
                assert!((d - od).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn stored_distances_are_symmetric_with_zero_self_distance() {
    let a = [1.5, -2.0, 0.25];
    let b = [-0.5, 0.0, 4.0];
    let index_a = hand_index(&[1], &[&a]);
    let index_b = hand_index(&[2], &[&b]);
    let ab = knn(&index_b, None, &a, 1).unwrap()[0].1;
    let ba = knn(&index_a, None, &b, 1).unwrap()[0].1;
    assert_eq!(ab, ba);
    assert_eq!(knn(&index_a, None, &a, 1).unwrap()[0].1, 0.0);
}

#[test]
fn build_index_matches_per_example_embedding_calls() {
    let bundle = tiny_bundle();
    let ckpt = tiny_checkpoint(&bundle);
    let model = ckpt.model();
    let pool: Vec<u64> = bundle.aux.iter().copied().take(9).collect();

    let index = build_index(&bundle, &pool, &ckpt).unwrap();
    assert_eq!(index.len(), pool.len());
    for (id, row) in index.entries() {
        let direct = model.embed_sequence(bundle.example(id), &bundle.vocab).unwrap();
        assert_eq!(row, direct.as_slice());
    }

    let again = build_index(&bundle, &pool, &ckpt).unwrap();
    assert_eq!(again.vectors, index.vectors);
    assert_eq!(again.checkpoint_fingerprint, index.checkpoint_fingerprint);

    let single = build_index(&bundle, &pool[..1], &ckpt).unwrap();
    assert_eq!(single.len(), 1);
    assert!(build_index(&bundle, &[], &ckpt).is_err());
}

#[test]
fn similar_set_is_a_deduplicated_union_inside_the_pool() {
    let pool = hand_index(&[10, 11, 12, 13], &[&[0.0], &[1.0], &[10.0], &[11.0]]);
    let queries = hand_index(&[1, 2, 3], &[&[0.2], &[0.3], &[10.4]]);

    let set = build_similar_set(&queries, &pool, 2).unwrap();
    assert_eq!(set, vec![10, 11, 12, 13]);
    assert!(set.len() <= 2 * queries.len());
    assert!(set.iter().all(|id| pool.ids.contains(id)));

    let again = build_similar_set(&queries, &pool, 2).unwrap();
    assert_eq!(again, set);

    let reversed = EmbeddingIndex {
        ids: queries.ids.iter().rev().copied().collect(),
        vectors: queries.vectors.iter().rev().cloned().collect(),
        checkpoint_fingerprint: queries.checkpoint_fingerprint.clone(),
    };
    assert_eq!(build_similar_set(&reversed, &pool, 2).unwrap(), set);

    let shared = build_similar_set(&queries, &pool, 1).unwrap();
    assert_eq!(shared, vec![10, 12]);
}

#[test]
fn mismatched_sources_and_pool_overlap_are_rejected() {
    let pool = hand_index(&[10, 11], &[&[0.0], &[1.0]]);
    let mut queries = hand_index(&[1, 10], &[&[0.2], &[0.3]]);
    assert!(build_similar_set(&queries, &pool, 1).is_err());

    queries.ids = vec![1, 2];
    queries.checkpoint_fingerprint = "other".into();
    assert!(build_similar_set(&queries, &pool, 1).is_err());
}

#[test]
fn similar_csv_layout_is_stable() {
    let rows = vec![
        SimilarRow { query_id: 3, neighbor_id: 10, rank: 1, distance: 0.5 },
        SimilarRow { query_id: 3, neighbor_id: 11, rank: 2, distance: 1.25 },
    ];
    let dir = tempdir().unwrap();
    let path = dir.path().join("similar.csv");
    write_similar_csv(&rows, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(
        text,
        "query_id,neighbor_id,rank,distance\n\
         3,10,1,5.0000000000000000e-1\n\
         3,11,2,1.2500000000000000e0\n"
    );
}
