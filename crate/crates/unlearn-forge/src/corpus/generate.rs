//! Generators for the translation pairs, canaries, and forget-set selection.
//!
//! The synthetic task is a reversed substitution cipher: the target side of a
//! pair is the source read backwards with every token pushed through a fixed
//! random permutation of the base vocabulary. A window model can solve it
//! exactly when its context covers twice the longest source, because the
//! source token that produces target position i sits 2i tokens back.

use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::HashSet;

use crate::corpus::bundle::{ForgetSetSpec, SetKind};
use crate::corpus::example::{Example, Role};
use crate::corpus::vocab::Vocab;
use crate::error::{Error, Result};
use crate::seed;

/// Shape of the generated corpus. Sizes count examples per split.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusParams {
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    /// Inclusive bounds on source length in tokens.
    pub len_range: [usize; 2],
    /// Longest context the downstream model conditions on. Sources must fit
    /// twice inside it or the cipher becomes unlearnable.
    pub context_budget: usize,
}

impl Default for CorpusParams {
    fn default() -> Self {
        CorpusParams {
            n_train: 10_000,
            n_validation: 1_000,
            n_test: 1_000,
            len_range: [3, 5],
            context_budget: 10,
        }
    }
}

impl CorpusParams {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.len_range;
        if self.n_train == 0 {
            return Err(Error::config("n_train must be at least 1"));
        }
        if lo < 2 || lo > hi {
            return Err(Error::config(format!(
                "len_range [{lo}, {hi}] must satisfy 2 <= min <= max"
            )));
        }
        if 2 * hi > self.context_budget {
            return Err(Error::config(format!(
                "max source length {hi} needs a context of {} tokens, budget is {}",
                2 * hi,
                self.context_budget
            )));
        }
        Ok(())
    }
}

/// The three disjoint pair splits plus the cipher permutation that links
/// every source to its target.
#[derive(Debug, Clone)]
pub struct TranslationSplits {
    /// permutation[i] is the base-token index substituted for base token i.
    pub permutation: Vec<u32>,
    pub train: Vec<Example>,
    pub validation: Vec<Example>,
    pub test: Vec<Example>,
}

/// Builds the pair splits. Sources are sampled uniformly and deduplicated
/// across all three splits so no validation or test pair leaks into training.
pub fn generate_translation_corpus(
    seed_value: u64,
    vocab: &Vocab,
    params: &CorpusParams,
) -> Result<TranslationSplits> {
    params.validate()?;
    let base = vocab.base_ids();
    let n_base = base.len();

    let mut perm_rng = seed::rng(seed_value, "corpus/permutation");
    let mut permutation: Vec<u32> = (0..n_base as u32).collect();
    permutation.shuffle(&mut perm_rng);

    let mut pair_rng = seed::rng(seed_value, "corpus/pairs");
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    let mut next_id = 0u64;
    let total = params.n_train + params.n_validation + params.n_test;
    // Rejection sampling stays cheap while the source space dwarfs the
    // corpus; the attempt cap turns a too-small space into a clean error.
    let max_attempts = total.saturating_mul(100).max(1_000);
    let mut attempts = 0usize;

    let mut make_split = |n: usize| -> Result<Vec<Example>> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            attempts += 1;
            if attempts > max_attempts {
                return Err(Error::Corpus(format!(
                    "could not sample {total} distinct sources from a space of {n_base}^{}..{}",
                    params.len_range[0], params.len_range[1]
                )));
            }
            let len = pair_rng.gen_range(params.len_range[0]..=params.len_range[1]);
            let source: Vec<u32> = (0..len).map(|_| pair_rng.gen_range(0..n_base) as u32).collect();
            if !seen.insert(source.clone()) {
                continue;
            }
            let mut tokens = Vec::with_capacity(2 * len + 3);
            tokens.push(vocab.bos);
            tokens.extend(source.iter().map(|&s| base[s as usize]));
            tokens.push(vocab.sep);
            tokens.extend(source.iter().rev().map(|&s| base[permutation[s as usize] as usize]));
            tokens.push(vocab.eos);
            out.push(Example::new(next_id, Role::Pair, tokens, len as u32, vocab)?);
            next_id += 1;
        }
        Ok(out)
    };

    let train = make_split(params.n_train)?;
    let validation = make_split(params.n_validation)?;
    let test = make_split(params.n_test)?;
    Ok(TranslationSplits { permutation, train, validation, test })
}

/// Samples canaries: [BOS, CAN, payload, EOS] with the payload i.i.d. uniform
/// over the first `alphabet_size` base tokens. Ids start at `first_id`.
///
/// With `unique`, payloads are deduplicated; asking for more than the space
/// holds is an error.
pub fn generate_ood_canaries(
    seed_value: u64,
    count: usize,
    payload_len: usize,
    alphabet_size: usize,
    unique: bool,
    first_id: u64,
    vocab: &Vocab,
) -> Result<Vec<Example>> {
    let base = vocab.base_ids();
    if payload_len == 0 {
        return Err(Error::config("canary payload_len must be at least 1"));
    }
    if alphabet_size == 0 || alphabet_size > base.len() {
        return Err(Error::config(format!(
            "canary alphabet_size {alphabet_size} must be in 1..={}",
            base.len()
        )));
    }
    if unique && (payload_len as f64) * (alphabet_size as f64).ln() < (count.max(1) as f64).ln() {
        return Err(Error::Corpus(format!(
            "cannot draw {count} unique canaries from {alphabet_size}^{payload_len} payloads"
        )));
    }

    let mut rng = seed::rng(seed_value, "corpus/canaries");
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let payload: Vec<u32> =
            (0..payload_len).map(|_| rng.gen_range(0..alphabet_size) as u32).collect();
        if unique && !seen.insert(payload.clone()) {
            continue;
        }
        let mut tokens = Vec::with_capacity(payload_len + 3);
        tokens.push(vocab.bos);
        tokens.push(vocab.can);
        tokens.extend(payload.iter().map(|&s| base[s as usize]));
        tokens.push(vocab.eos);
        out.push(Example::new(first_id + out.len() as u64, Role::Canary, tokens, 0, vocab)?);
    }
    Ok(out)
}

/// Draws disjoint forget sets from the validation split without replacement.
/// `sets` lists (name, size, frequency) triples.
pub fn select_ind_forget_sets(
    validation: &[Example],
    seed_value: u64,
    sets: &[(String, usize, u32)],
) -> Result<Vec<ForgetSetSpec>> {
    let wanted: usize = sets.iter().map(|(_, n, _)| n).sum();
    if wanted > validation.len() {
        return Err(Error::Corpus(format!(
            "forget sets want {wanted} examples, validation split has {}",
            validation.len()
        )));
    }
    let mut ids: Vec<u64> = validation.iter().map(|e| e.id).collect();
    ids.shuffle(&mut seed::rng(seed_value, "corpus/ind_selection"));
    let mut cursor = 0usize;
    let mut out = Vec::with_capacity(sets.len());
    for (name, size, frequency) in sets {
        if *frequency == 0 {
            return Err(Error::config(format!("forget set {name}: frequency must be >= 1")));
        }
        let example_ids = ids[cursor..cursor + size].to_vec();
        cursor += size;
        out.push(ForgetSetSpec {
            name: name.clone(),
            kind: SetKind::InD,
            frequency: *frequency,
            example_ids,
        });
    }
    Ok(out)
}
