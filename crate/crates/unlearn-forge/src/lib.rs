//! A desk-scale laboratory for studying how much a language model remembers
//! about individual training sequences, and how well gradient-ascent
//! unlearning removes that memory.
//!
//! The pieces fit together like this:
//!
//! * [`corpus`] builds a synthetic translation task, injects canary strings
//!   and in-distribution forget sets at chosen frequencies, and composes the
//!   deterministic training stream.
//! * [`model`] is a fixed-window MLP language model with hand-derived
//!   gradients, greedy decoding, and sequence embeddings, all in `f64`.
//! * [`training`] drives minibatch SGD/Adam to produce reference models
//!   (trained without the forget sets) and the subject model (trained with
//!   them).
//! * [`unlearning`] performs gradient ascent over a forget set, recording a
//!   checkpoint per step.
//! * [`metrics`] implements the exposure family (soft comparison, rank
//!   exposure, generalized and relative exposure), memorization/difficulty,
//!   Clopper-Pearson intervals, corpus BLEU, and distribution summaries.
//! * [`neighbors`] does exact k-NN in the model's embedding space to build
//!   "similar example" sets.
//! * [`harness`] orchestrates full experiments into a run directory of CSV
//!   reports with a replayable manifest.
//! * [`cli`] exposes every stage as a subcommand; `src/main.rs` is a thin
//!   wrapper around it.
//!
//! Start with the crate examples (`cargo run --example corpus_tour`, then
//! `train_and_measure`, `unlearn_canaries`, ...) to see each capability end
//! to end on a miniature preset.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod fmt;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod neighbors;
pub mod seed;
pub mod training;
pub mod unlearning;

pub use error::{Error, Result};
