//! Injection frequency versus exposure. The baseline table reports, per
//! forget set, the subject model's mean generalized exposure next to the
//! ceiling it saturates at (log2 of the reference pool size; rank-based
//! exposure cannot distinguish anything beyond "less likely than every
//! reference").
//!
//! The permuted variant reassigns the frequencies within each set kind by a
//! cyclic rotation and trains a second subject on the reassigned corpus. If
//! exposure tracks frequency rather than the particular strings, each set's
//! exposure should follow its new frequency; a rotation of zero must
//! reproduce the baseline column bit for bit, which makes the machinery
//! cheap to audit.

use crate::corpus::{CorpusBundle, SetKind};
use crate::error::Result;
use crate::fmt::sig17;
use crate::harness::config::ExperimentConfig;
use crate::harness::evaluate::{mean, per_example_ge, reference_scorers, scorer_for};
use crate::harness::rundir::RunDir;
use crate::harness::world::{ensure_checkpoint, train_config, World};
use crate::metrics::ExposureScorer;

pub const FREQUENCY_CSV_HEADER: &str =
    "set,kind,frequency,examples,mean_gen_exposure,saturation_bits";

pub const PERMUTED_CSV_HEADER: &str =
    "set,kind,frequency,permuted_frequency,mean_gen_exposure,permuted_mean_gen_exposure";

/// Reference and subject scorers built once per set kind.
struct KindScorers {
    refs: [Option<Vec<ExposureScorer>>; 2],
    subject: [Option<ExposureScorer>; 2],
}

fn kind_index(kind: SetKind) -> usize {
    match kind {
        SetKind::InD => 0,
        SetKind::Ood => 1,
    }
}

impl KindScorers {
    fn new() -> KindScorers {
        KindScorers { refs: [None, None], subject: [None, None] }
    }

    fn refs(&mut self, world: &World, kind: SetKind) -> Result<&[ExposureScorer]> {
        let i = kind_index(kind);
        if self.refs[i].is_none() {
            self.refs[i] = Some(reference_scorers(world, kind)?);
        }
        Ok(self.refs[i].as_ref().unwrap())
    }

    fn subject(&mut self, world: &World, kind: SetKind) -> Result<&ExposureScorer> {
        let i = kind_index(kind);
        if self.subject[i].is_none() {
            self.subject[i] = Some(scorer_for(&world.subject, &world.bundle, kind)?);
        }
        Ok(self.subject[i].as_ref().unwrap())
    }
}

fn set_mean_ge(world: &World, scorers: &mut KindScorers, set: &str) -> Result<f64> {
    let spec = world.bundle.forget_set(set)?.clone();
    let refs = scorers.refs(world, spec.kind)?.to_vec();
    let subj = scorers.subject(world, spec.kind)?;
    let ges = per_example_ge(&world.bundle, &spec.example_ids, &refs, subj)?;
    Ok(mean(&ges))
}

/// Writes `reports/frequency_comparison.csv`: one row per forget set, in
/// bundle order, measured on the untouched subject.
pub fn run_frequency_comparison(
    rd: &mut RunDir,
    world: &World,
    _config: &ExperimentConfig,
) -> Result<String> {
    let mut scorers = KindScorers::new();
    let mut csv = String::from(FREQUENCY_CSV_HEADER);
    csv.push('\n');
    for spec in &world.bundle.forget_sets {
        let ge = set_mean_ge(world, &mut scorers, &spec.name)?;
        let pool = super::evaluate::reference_pool(&world.bundle, spec.kind);
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            spec.name,
            spec.kind.as_str(),
            spec.frequency,
            spec.example_ids.len(),
            sig17(ge),
            sig17((pool.len() as f64).log2())
        ));
    }
    rd.write_artifact("reports/frequency_comparison.csv", &csv)?;
    Ok(format!("frequency comparison over {} forget sets", world.bundle.forget_sets.len()))
}

/// The bundle with each kind's frequencies rotated right by `rotation`
/// among its sets (ordered by ascending frequency, name as tiebreak). Only
/// frequencies move; every example keeps its tokens and its set membership.
pub fn permuted_frequencies(bundle: &CorpusBundle, rotation: usize) -> CorpusBundle {
    let mut b2 = bundle.clone();
    for kind in [SetKind::InD, SetKind::Ood] {
        let mut idxs: Vec<usize> = (0..b2.forget_sets.len())
            .filter(|&i| b2.forget_sets[i].kind == kind)
            .collect();
        idxs.sort_by(|&a, &b| {
            let (sa, sb) = (&b2.forget_sets[a], &b2.forget_sets[b]);
            (sa.frequency, &sa.name).cmp(&(sb.frequency, &sb.name))
        });
        let k = idxs.len();
        if k == 0 {
            continue;
        }
        let freqs: Vec<u32> = idxs.iter().map(|&i| b2.forget_sets[i].frequency).collect();
        for (pos, &i) in idxs.iter().enumerate() {
            let newf = freqs[(pos + rotation % k) % k];
            b2.forget_sets[i].frequency = newf;
            let name = b2.forget_sets[i].name.clone();
            let plan_sets = match kind {
                SetKind::InD => &mut b2.plan.ind_sets,
                SetKind::Ood => &mut b2.plan.ood_sets,
            };
            if let Some(entry) = plan_sets.iter_mut().find(|e| e.0 == name) {
                entry.2 = newf;
            }
        }
    }
    b2
}

/// Trains a subject on the rotation-permuted corpus (cached under
/// `checkpoints/subject_permuted_{rotation}.ckpt`) and writes
/// `reports/permuted_frequency_{rotation}.csv` with baseline and permuted
/// mean exposure side by side, aligned by set name.
pub fn run_permuted_frequency(
    rd: &mut RunDir,
    world: &World,
    config: &ExperimentConfig,
    rotation: usize,
) -> Result<String> {
    let bundle2 = permuted_frequencies(&world.bundle, rotation);
    let fp2 = bundle2.training_fingerprint(true);
    // Same strings, so the permuted subject scores over the original
    // bundle; only training needs bundle2.
    let subject2 = if fp2 == world.bundle.training_fingerprint(true) {
        world.subject.clone()
    } else {
        let tc = train_config(config);
        ensure_checkpoint(
            rd,
            config,
            &bundle2,
            &tc,
            config.subject_seed,
            &fp2,
            &bundle2.forget_sets,
            &format!("subject_permuted_{rotation}"),
        )?
    };

    let mut scorers = KindScorers::new();
    let mut subj2_scorers: [Option<ExposureScorer>; 2] = [None, None];
    let mut csv = String::from(PERMUTED_CSV_HEADER);
    csv.push('\n');
    for (spec, spec2) in world.bundle.forget_sets.iter().zip(&bundle2.forget_sets) {
        let base_ge = set_mean_ge(world, &mut scorers, &spec.name)?;
        let refs = scorers.refs(world, spec.kind)?.to_vec();
        let i = kind_index(spec.kind);
        if subj2_scorers[i].is_none() {
            subj2_scorers[i] = Some(scorer_for(&subject2, &world.bundle, spec.kind)?);
        }
        let perm_ges =
            per_example_ge(&world.bundle, &spec.example_ids, &refs, subj2_scorers[i].as_ref().unwrap())?;
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            spec.name,
            spec.kind.as_str(),
            spec.frequency,
            spec2.frequency,
            sig17(base_ge),
            sig17(mean(&perm_ges))
        ));
    }
    rd.write_artifact(&format!("reports/permuted_frequency_{rotation}.csv"), &csv)?;
    Ok(format!("permuted frequency comparison (rotation {rotation})"))
}
