//! Deterministic composition of training batches from the effective multiset.
//!
//! One epoch is the multiset (T plus replicated forget examples) in a seeded
//! shuffle; a fresh shuffle starts whenever the previous epoch is exhausted,
//! and batches may straddle the boundary. The stream ends after exactly
//! `steps` batches, so total examples yielded = steps * batch_size.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::corpus::bundle::{CorpusBundle, ForgetSetSpec};
use crate::error::{Error, Result};
use crate::seed;

pub struct TrainStream {
    multiset: Vec<u64>,
    rng: ChaCha8Rng,
    order: Vec<u64>,
    cursor: usize,
    batch_size: usize,
    remaining: usize,
}

impl TrainStream {
    /// Stream over T plus the given forget sets. Pass an empty slice of sets
    /// for reference-model training.
    pub fn new(
        bundle: &CorpusBundle,
        forget_sets: &[ForgetSetSpec],
        seed_value: u64,
        steps: usize,
        batch_size: usize,
    ) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        let mut multiset = bundle.train.clone();
        for spec in forget_sets {
            for &id in &spec.example_ids {
                multiset.extend(std::iter::repeat(id).take(spec.frequency as usize));
            }
        }
        if multiset.is_empty() {
            return Err(Error::Corpus("training multiset is empty".into()));
        }
        Ok(TrainStream {
            multiset,
            rng: seed::rng(seed_value, "train/stream"),
            order: Vec::new(),
            cursor: 0,
            batch_size,
            remaining: steps,
        })
    }

    pub fn epoch_len(&self) -> usize {
        self.multiset.len()
    }

    fn reshuffle(&mut self) {
        self.order = self.multiset.clone();
        self.order.shuffle(&mut self.rng);
        self.cursor = 0;
    }
}

impl Iterator for TrainStream {
    type Item = Vec<u64>;

    fn next(&mut self) -> Option<Vec<u64>> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let mut batch = Vec::with_capacity(self.batch_size);
        while batch.len() < self.batch_size {
            if self.cursor == self.order.len() {
                self.reshuffle();
            }
            batch.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        Some(batch)
    }
}
