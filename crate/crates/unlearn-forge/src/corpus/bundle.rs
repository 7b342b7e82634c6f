//! Assembly of the full experiment corpus: splits, canary sets, forget sets,
//! and reference pools, with the cross-set disjointness the metrics rely on.
//!
//! Two seeds feed the build. The corpus seed fixes everything shared across
//! experiments (pair splits, the reference/auxiliary partition of the test
//! split), so reference models trained on T can be reused. The experiment
//! seed fixes what varies per run: canary payloads, which validation pairs
//! become forget sets, and the OOD reference strings.

use std::collections::HashSet;

use crate::corpus::example::{Example, Role};
use crate::corpus::generate::{
    generate_ood_canaries, generate_translation_corpus, select_ind_forget_sets, CorpusParams,
};
use crate::corpus::vocab::Vocab;
use crate::error::{Error, Result};
use crate::seed;

/// Whether a forget set holds in-distribution pairs or out-of-distribution
/// canaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetKind {
    InD,
    Ood,
}

impl SetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SetKind::InD => "ind",
            SetKind::Ood => "ood",
        }
    }
}

/// A named forget set: the F whose members get injected `frequency` times
/// into the subject training stream and later unlearned.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForgetSetSpec {
    pub name: String,
    pub kind: SetKind,
    pub frequency: u32,
    pub example_ids: Vec<u64>,
}

/// Canary shape shared by forget sets, reference strings, and fresh draws.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CanaryParams {
    pub payload_len: usize,
    pub alphabet_size: usize,
    pub unique: bool,
}

impl Default for CanaryParams {
    fn default() -> Self {
        CanaryParams { payload_len: 10, alphabet_size: 62, unique: true }
    }
}

/// Everything the bundle builder needs besides the two seeds.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundlePlan {
    pub corpus: CorpusParams,
    pub canary: CanaryParams,
    /// (name, size, frequency) per OOD forget set.
    pub ood_sets: Vec<(String, usize, u32)>,
    /// (name, size, frequency) per InD forget set.
    pub ind_sets: Vec<(String, usize, u32)>,
    pub r_ood_size: usize,
    pub r_ind_size: usize,
}

impl Default for BundlePlan {
    fn default() -> Self {
        let freqs = [("x1", 1u32), ("x10", 10), ("x100", 100)];
        BundlePlan {
            corpus: CorpusParams::default(),
            canary: CanaryParams::default(),
            ood_sets: freqs.iter().map(|(s, f)| (format!("ood_{s}"), 64, *f)).collect(),
            ind_sets: freqs.iter().map(|(s, f)| (format!("ind_{s}"), 64, *f)).collect(),
            r_ood_size: 1_000,
            r_ind_size: 500,
        }
    }
}

/// The assembled corpus. Example ids equal positions in `examples`; every
/// other field stores ids into it.
#[derive(Debug, Clone)]
pub struct CorpusBundle {
    pub vocab: Vocab,
    pub plan: BundlePlan,
    pub corpus_seed: u64,
    pub experiment_seed: u64,
    pub permutation: Vec<u32>,
    pub examples: Vec<Example>,
    pub train: Vec<u64>,
    pub validation: Vec<u64>,
    pub test: Vec<u64>,
    pub forget_sets: Vec<ForgetSetSpec>,
    pub r_ood: Vec<u64>,
    pub r_ind: Vec<u64>,
    /// Held-out pool that reference-neighbor sets are mined from.
    pub aux: Vec<u64>,
}

impl CorpusBundle {
    pub fn build(corpus_seed: u64, experiment_seed: u64, plan: &BundlePlan) -> Result<Self> {
        let vocab = Vocab::with_base(64)?;
        let splits = generate_translation_corpus(corpus_seed, &vocab, &plan.corpus)?;
        let mut examples = Vec::new();
        fn take_ids(examples: &mut Vec<Example>, chunk: Vec<Example>) -> Vec<u64> {
            let ids: Vec<u64> = chunk.iter().map(|e| e.id).collect();
            examples.extend(chunk);
            ids
        }
        let train = take_ids(&mut examples, splits.train);
        let validation = take_ids(&mut examples, splits.validation);
        let test = take_ids(&mut examples, splits.test);

        if plan.r_ind_size > test.len() {
            return Err(Error::config(format!(
                "r_ind_size {} exceeds test split size {}",
                plan.r_ind_size,
                test.len()
            )));
        }
        // The R_InD / auxiliary partition belongs to the corpus so it stays
        // fixed while experiment seeds vary.
        let mut test_order = test.clone();
        use rand::seq::SliceRandom;
        test_order.shuffle(&mut seed::rng(corpus_seed, "corpus/r_ind_partition"));
        let r_ind = test_order[..plan.r_ind_size].to_vec();
        let aux = test_order[plan.r_ind_size..].to_vec();

        let mut forget_sets = Vec::new();
        for (name, size, frequency) in &plan.ood_sets {
            let next_id = examples.len() as u64;
            let set = generate_ood_canaries(
                seed::derive(experiment_seed, &format!("canaries/{name}")),
                *size,
                plan.canary.payload_len,
                plan.canary.alphabet_size,
                plan.canary.unique,
                next_id,
                &vocab,
            )?;
            let ids = take_ids(&mut examples, set);
            forget_sets.push(ForgetSetSpec {
                name: name.clone(),
                kind: SetKind::Ood,
                frequency: *frequency,
                example_ids: ids,
            });
        }
        let next_id = examples.len() as u64;
        let r_ood_examples = generate_ood_canaries(
            seed::derive(experiment_seed, "canaries/r_ood"),
            plan.r_ood_size,
            plan.canary.payload_len,
            plan.canary.alphabet_size,
            plan.canary.unique,
            next_id,
            &vocab,
        )?;
        let r_ood = take_ids(&mut examples, r_ood_examples);

        let validation_examples: Vec<Example> =
            validation.iter().map(|&id| examples[id as usize].clone()).collect();
        forget_sets.extend(select_ind_forget_sets(
            &validation_examples,
            experiment_seed,
            &plan.ind_sets,
        )?);

        let bundle = CorpusBundle {
            vocab,
            plan: plan.clone(),
            corpus_seed,
            experiment_seed,
            permutation: splits.permutation,
            examples,
            train,
            validation,
            test,
            forget_sets,
            r_ood,
            r_ind,
            aux,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    /// Checks every structural invariant the metrics assume. Run after
    /// building and after loading from disk.
    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.examples.iter().enumerate() {
            if e.id as usize != i {
                return Err(Error::Corpus(format!("example id {} at position {i}", e.id)));
            }
            e.validate(&self.vocab)?;
        }
        let resolve = |ids: &[u64], what: &str| -> Result<()> {
            for &id in ids {
                if id as usize >= self.examples.len() {
                    return Err(Error::Corpus(format!("{what}: unknown example id {id}")));
                }
            }
            Ok(())
        };
        resolve(&self.train, "train")?;
        resolve(&self.validation, "validation")?;
        resolve(&self.test, "test")?;
        resolve(&self.r_ood, "r_ood")?;
        resolve(&self.r_ind, "r_ind")?;
        resolve(&self.aux, "aux")?;

        let validation_set: HashSet<u64> = self.validation.iter().copied().collect();
        let test_set: HashSet<u64> = self.test.iter().copied().collect();
        let mut forget_ids: HashSet<u64> = HashSet::new();
        for spec in &self.forget_sets {
            resolve(&spec.example_ids, &spec.name)?;
            if spec.frequency == 0 {
                return Err(Error::Corpus(format!("{}: zero frequency", spec.name)));
            }
            for &id in &spec.example_ids {
                if !forget_ids.insert(id) {
                    return Err(Error::Corpus(format!(
                        "example {id} appears in more than one forget set"
                    )));
                }
                let e = &self.examples[id as usize];
                match spec.kind {
                    SetKind::InD => {
                        if !validation_set.contains(&id) || e.role != Role::Pair {
                            return Err(Error::Corpus(format!(
                                "{}: example {id} is not a validation pair",
                                spec.name
                            )));
                        }
                    }
                    SetKind::Ood => {
                        if e.role != Role::Canary {
                            return Err(Error::Corpus(format!(
                                "{}: example {id} is not a canary",
                                spec.name
                            )));
                        }
                    }
                }
            }
        }
        for (ids, what) in [(&self.r_ood, "r_ood"), (&self.r_ind, "r_ind")] {
            for &id in ids {
                if forget_ids.contains(&id) {
                    return Err(Error::Corpus(format!("{what} overlaps a forget set (id {id})")));
                }
            }
        }
        // Reference canaries must also differ from forget canaries as token
        // sequences, not just as ids.
        let forget_tokens: HashSet<&[u32]> = self
            .forget_sets
            .iter()
            .filter(|s| s.kind == SetKind::Ood)
            .flat_map(|s| s.example_ids.iter())
            .map(|&id| self.examples[id as usize].tokens.as_slice())
            .collect();
        for &id in &self.r_ood {
            if forget_tokens.contains(self.examples[id as usize].tokens.as_slice()) {
                return Err(Error::Corpus(format!(
                    "r_ood canary {id} duplicates a forget-set canary"
                )));
            }
        }
        for &id in self.r_ind.iter().chain(&self.aux) {
            if !test_set.contains(&id) {
                return Err(Error::Corpus(format!("id {id} in r_ind/aux is not a test example")));
            }
        }
        let r_ind_set: HashSet<u64> = self.r_ind.iter().copied().collect();
        if self.aux.iter().any(|id| r_ind_set.contains(id)) {
            return Err(Error::Corpus("aux pool overlaps r_ind".into()));
        }
        let train_set: HashSet<u64> = self.train.iter().copied().collect();
        if forget_ids.iter().any(|id| train_set.contains(id)) {
            return Err(Error::Corpus("forget set overlaps the train split".into()));
        }
        Ok(())
    }

    pub fn example(&self, id: u64) -> &Example {
        &self.examples[id as usize]
    }

    pub fn examples_for(&self, ids: &[u64]) -> Vec<&Example> {
        ids.iter().map(|&id| self.example(id)).collect()
    }

    pub fn forget_set(&self, name: &str) -> Result<&ForgetSetSpec> {
        self.forget_sets
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::config(format!("no forget set named {name}")))
    }

    /// Ids of one training epoch for the subject model: T plus every forget
    /// example replicated by its frequency. `with_forget = false` gives the
    /// reference multiset (T alone).
    pub fn effective_multiset(&self, with_forget: bool) -> Vec<u64> {
        let mut out = self.train.clone();
        if with_forget {
            for spec in &self.forget_sets {
                for &id in &spec.example_ids {
                    out.extend(std::iter::repeat(id).take(spec.frequency as usize));
                }
            }
        }
        out
    }

    /// Content hash of a training multiset, stable under reordering. Stored
    /// in checkpoints so replays can prove they trained on the same data.
    pub fn training_fingerprint(&self, with_forget: bool) -> String {
        let sets: &[ForgetSetSpec] = if with_forget { &self.forget_sets } else { &[] };
        self.fingerprint_for(sets)
    }

    /// Fingerprint of T plus an explicit forget-set selection; this is what
    /// checkpoint provenance records, since a run may train on a subset of
    /// the bundle's sets.
    pub fn fingerprint_for(&self, forget_sets: &[ForgetSetSpec]) -> String {
        use sha2::{Digest, Sha256};
        let mut ids = self.train.clone();
        for spec in forget_sets {
            for &id in &spec.example_ids {
                ids.extend(std::iter::repeat(id).take(spec.frequency as usize));
            }
        }
        ids.sort_unstable();
        let mut h = Sha256::new();
        for &id in &ids {
            let e = self.example(id);
            h.update(id.to_le_bytes());
            h.update((e.tokens.len() as u64).to_le_bytes());
            for &t in &e.tokens {
                h.update(t.to_le_bytes());
            }
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_plan() -> BundlePlan {
        let freqs = [("x1", 1u32), ("x10", 10), ("x100", 100)];
        BundlePlan {
            corpus: CorpusParams {
                n_train: 300,
                n_validation: 120,
                n_test: 80,
                ..CorpusParams::default()
            },
            canary: CanaryParams::default(),
            ood_sets: freqs.iter().map(|(s, f)| (format!("ood_{s}"), 8, *f)).collect(),
            ind_sets: freqs.iter().map(|(s, f)| (format!("ind_{s}"), 8, *f)).collect(),
            r_ood_size: 40,
            r_ind_size: 50,
        }
    }

    #[test]
    fn build_satisfies_invariants() {
        let b = CorpusBundle::build(7, 0, &small_plan()).unwrap();
        b.validate().unwrap();
        assert_eq!(b.train.len(), 300);
        assert_eq!(b.r_ind.len(), 50);
        assert_eq!(b.aux.len(), 30);
        assert_eq!(b.forget_sets.len(), 6);
    }

    #[test]
    fn experiment_seed_changes_canaries_not_pairs() {
        let plan = small_plan();
        let a = CorpusBundle::build(7, 0, &plan).unwrap();
        let b = CorpusBundle::build(7, 1, &plan).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.r_ind, b.r_ind);
        for (x, y) in a.train.iter().zip(&b.train) {
            assert_eq!(a.example(*x).tokens, b.example(*y).tokens);
        }
        let ax = a.forget_set("ood_x1").unwrap();
        let bx = b.forget_set("ood_x1").unwrap();
        let same = ax
            .example_ids
            .iter()
            .zip(&bx.example_ids)
            .all(|(&i, &j)| a.example(i).tokens == b.example(j).tokens);
        assert!(!same, "different experiment seeds must draw different canaries");
        let ai = a.forget_set("ind_x1").unwrap();
        let bi = b.forget_set("ind_x1").unwrap();
        assert_ne!(ai.example_ids, bi.example_ids);
    }

    #[test]
    fn multiset_counts_match_frequencies() {
        let b = CorpusBundle::build(7, 0, &small_plan()).unwrap();
        let multi = b.effective_multiset(true);
        assert_eq!(multi.len(), 300 + 8 * (1 + 10 + 100) * 2);
        for spec in &b.forget_sets {
            for &id in &spec.example_ids {
                let n = multi.iter().filter(|&&x| x == id).count();
                assert_eq!(n, spec.frequency as usize, "{} id {id}", spec.name);
            }
        }
        assert_eq!(b.effective_multiset(false).len(), 300);
    }

    #[test]
    fn fingerprints_separate_reference_and_subject() {
        let b = CorpusBundle::build(7, 0, &small_plan()).unwrap();
        let refp = b.training_fingerprint(false);
        let subj = b.training_fingerprint(true);
        assert_ne!(refp, subj);
        assert_eq!(refp, b.training_fingerprint(false));
        assert_eq!(refp.len(), 64);
    }
}
