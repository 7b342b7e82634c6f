//! Deterministic minibatch training producing reference and subject models.
//!
//! [`train`] runs the loop (seeded init, seeded stream, checkpoints at a
//! cadence); [`train_reference_and_subject`] is the standard experiment
//! setup of k reference models on T and one subject on T plus the replicated
//! forget sets. Checkpoints round-trip through a versioned binary container
//! ([`Checkpoint::save`] / [`Checkpoint::load`]) whose provenance block is
//! enough to reproduce the run bit-for-bit ([`replay_checkpoint`]).

mod checkpoint;
mod optimizer;
mod run;

pub use checkpoint::{Checkpoint, ForgetRef, Provenance};
pub use optimizer::{Direction, OptimizerKind, OptimizerState};
pub use run::{
    check_loss_curve, replay_checkpoint, train, train_reference_and_subject, TrainConfig, TrainRun,
};
