//! The metric suite: exposure family, memorization and difficulty,
//! Clopper-Pearson intervals, corpus BLEU, and distribution summaries.
//!
//! Conventions shared across the module:
//!
//! * every log is base 2, every NLL is in bits;
//! * means of soft-comparison values are clamped below at 1e-12 before any
//!   log, so total memorization reports a large finite number;
//! * operations are pure functions over frozen models, safe to fan out over
//!   examples; report assembly orders rows by example id so parallel
//!   evaluation cannot change the output bytes.

mod bleu;
mod exposure;
mod intervals;
mod memorization;
mod report;
mod summary;

pub use bleu::corpus_bleu;
pub use exposure::{
    generalized_exposure, generalized_exposure_from_g, hard_rank, rank_exposure,
    relative_exposure, relative_exposure_from_g, select_reference_neighbors,
    select_shared_reference_neighbors, soft_comparison, ExposureScorer, ReferenceNeighborhood,
    DEFAULT_REFERENCE_NEIGHBORS, MEAN_G_CLAMP,
};
pub use intervals::{
    clopper_pearson, empirical_quantile, thresholded_membership_rate, MembershipRate,
};
pub use memorization::{
    difficulty, difficulty_clusters, difficulty_from_nll, memorization, memorization_from_nll,
};
pub use report::{ExposureReport, ExposureRow, ReportMeta, EXPOSURE_CSV_HEADER};
pub use summary::{
    distribution_summary, pearson, write_histogram_csv, DistributionSummary, HistogramBin,
    HistogramSpec,
};
