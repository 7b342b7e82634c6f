//! Synthetic corpus: a toy translation task, out-of-distribution canaries,
//! in-distribution forget sets, reference-string pools, and the composed
//! training stream.
//!
//! The translation task is a reversed-sequence substitution cipher: the
//! target of a pair is a fixed random token permutation applied to the
//! reversed source. A small window model can learn it exactly, which gives
//! the task headroom to degrade smoothly when unlearning damages the model.

mod bundle;
mod example;
mod generate;
pub mod io;
mod stream;
mod vocab;

pub use bundle::{BundlePlan, CanaryParams, CorpusBundle, ForgetSetSpec, SetKind};
pub use example::{Example, Role};
pub use generate::{
    generate_ood_canaries, generate_translation_corpus, select_ind_forget_sets, CorpusParams,
    TranslationSplits,
};
pub use stream::TrainStream;
pub use vocab::Vocab;
