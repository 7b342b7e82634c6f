//! Embedding extraction and exact k-nearest-neighbor search.
//!
//! Similar-example analysis asks which held-out examples sit close to a
//! forget set in a reference model's embedding space. Pools here are small
//! (at most a few thousand examples), so the search is a brute-force full
//! sort: exact, trivially testable against an oracle, and fast enough that
//! approximate structures would only add failure modes.
//!
//! [`EmbeddingIndex`] freezes one pool under one checkpoint; [`knn`] queries
//! it; [`build_similar_set`] takes the union of each forget example's top-k
//! neighbors, deduplicated.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::corpus::CorpusBundle;
use crate::error::{Error, Result};
use crate::fmt::sig17;
use crate::training::Checkpoint;

/// Embeddings of a fixed example pool under one frozen checkpoint. Row `i`
/// of `vectors` embeds `ids[i]`; all vectors are finite and share one
/// dimension.
#[derive(Debug, Clone)]
pub struct EmbeddingIndex {
    pub ids: Vec<u64>,
    pub vectors: Vec<Vec<f64>>,
    /// Fingerprint of the checkpoint the vectors were computed under, so a
    /// query index and a pool index can prove they share a model.
    pub checkpoint_fingerprint: String,
}

impl EmbeddingIndex {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (u64, &[f64])> {
        self.ids.iter().copied().zip(self.vectors.iter().map(Vec::as_slice))
    }
}

/// Embed every pool example under the checkpoint's model.
pub fn build_index(
    bundle: &CorpusBundle,
    pool: &[u64],
    checkpoint: &Checkpoint,
) -> Result<EmbeddingIndex> {
    if pool.is_empty() {
        return Err(Error::Metric("cannot build an embedding index over an empty pool".into()));
    }
    let model = checkpoint.model();
    let mut vectors = Vec::with_capacity(pool.len());
    for &id in pool {
        let v = model.embed_sequence(bundle.example(id), &bundle.vocab)?;
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite { context: format!("embedding of example {id}") });
        }
        vectors.push(v);
    }
    Ok(EmbeddingIndex {
        ids: pool.to_vec(),
        vectors,
        checkpoint_fingerprint: checkpoint.fingerprint(),
    })
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Exact k nearest neighbors of `query` in the index, sorted by ascending
/// L2 distance with ties broken by lower example id. Pass the query's own
/// id in `exclude` to drop it when it belongs to the pool; `None` keeps
/// every row. `k` counts candidates before exclusion, so excluding a pool
/// member from a full-pool query returns one fewer row.
pub fn knn(
    index: &EmbeddingIndex,
    exclude: Option<u64>,
    query: &[f64],
    k: usize,
) -> Result<Vec<(u64, f64)>> {
    if k == 0 || k > index.len() {
        return Err(Error::Metric(format!(
            "k = {k} out of range for a pool of {}",
            index.len()
        )));
    }
    let dim = index.vectors[0].len();
    if query.len() != dim {
        return Err(Error::Metric(format!(
            "query dimension {} does not match index dimension {dim}",
            query.len()
        )));
    }
    let mut ranked: Vec<(f64, u64)> = index
        .entries()
        .filter(|(id, _)| Some(*id) != exclude)
        .map(|(id, v)| (squared_distance(query, v), id))
        .collect();
    ranked.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    ranked.truncate(k);
    Ok(ranked.into_iter().map(|(d2, id)| (id, d2.sqrt())).collect())
}

/// One neighbor hit in a similar-set file: `rank` is 1-based within the
/// query's top-k list.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarRow {
    pub query_id: u64,
    pub neighbor_id: u64,
    pub rank: usize,
    pub distance: f64,
}

fn check_same_model(queries: &EmbeddingIndex, pool: &EmbeddingIndex) -> Result<()> {
    if queries.checkpoint_fingerprint != pool.checkpoint_fingerprint {
        return Err(Error::Metric(
            "query and pool embeddings come from different checkpoints".into(),
        ));
    }
    let overlap: Vec<u64> = {
        let pool_ids: BTreeSet<u64> = pool.ids.iter().copied().collect();
        queries.ids.iter().copied().filter(|id| pool_ids.contains(id)).collect()
    };
    if !overlap.is_empty() {
        return Err(Error::Metric(format!(
            "query set overlaps the neighbor pool (example {})",
            overlap[0]
        )));
    }
    Ok(())
}

/// Top-k neighbor rows for every query example, in query order.
pub fn similar_rows(
    queries: &EmbeddingIndex,
    pool: &EmbeddingIndex,
    k: usize,
) -> Result<Vec<SimilarRow>> {
    check_same_model(queries, pool)?;
    let mut rows = Vec::with_capacity(queries.len() * k);
    for (query_id, v) in queries.entries() {
        for (rank, (neighbor_id, distance)) in knn(pool, None, v, k)?.into_iter().enumerate() {
            rows.push(SimilarRow { query_id, neighbor_id, rank: rank + 1, distance });
        }
    }
    Ok(rows)
}

/// Union of every query's top-k neighbor ids, deduplicated and sorted.
/// The size is at most k times the query count, and usually smaller because
/// nearby forget examples share neighbors.
pub fn build_similar_set(
    queries: &EmbeddingIndex,
    pool: &EmbeddingIndex,
    k: usize,
) -> Result<Vec<u64>> {
    let set: BTreeSet<u64> =
        similar_rows(queries, pool, k)?.into_iter().map(|r| r.neighbor_id).collect();
    Ok(set.into_iter().collect())
}

/// Write rows as `query_id,neighbor_id,rank,distance` with a header line.
pub fn write_similar_csv(rows: &[SimilarRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "query_id,neighbor_id,rank,distance")?;
        for r in rows {
            writeln!(w, "{},{},{},{}", r.query_id, r.neighbor_id, r.rank, sig17(r.distance))?;
        }
        w.flush()
    };
    emit().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests;
