//! Harness tests at the smoke preset scale. One long test drives every
//! stage through a single run directory and finishes by replaying the
//! manifest into a fresh directory, which must reproduce each artifact byte
//! for byte. The cheap invariants (lr 0 freezes the model, early stop at a
//! trivial threshold, degenerate references) run against the same trained
//! world in a side directory so nothing trains twice.

use std::fs;

use super::*;
use crate::corpus::SetKind;
use crate::metrics::EXPOSURE_CSV_HEADER;

fn read_rel(rd: &RunDir, rel: &str) -> String {
    fs::read_to_string(rd.abs(rel)).unwrap_or_else(|e| panic!("reading {rel}: {e}"))
}

fn col<'a>(line: &'a str, idx: usize) -> &'a str {
    line.split(',').nth(idx).unwrap_or_else(|| panic!("no column {idx} in {line:?}"))
}

#[test]
fn stage_tags_are_kebab_case_ops() {
    let json = serde_json::to_string(&Stage::FreqCompare { rotation: Some(2) }).unwrap();
    assert_eq!(json, r#"{"op":"freq-compare","rotation":2}"#);
    let json = serde_json::to_string(&Stage::GenCanaries { count: 3 }).unwrap();
    assert_eq!(json, r#"{"op":"gen-canaries","count":3}"#);
    let back: Stage = serde_json::from_str(r#"{"op":"exposure","set":"ood_x1","step":null}"#).unwrap();
    assert_eq!(back, Stage::Exposure { set: "ood_x1".to_string(), step: None });
    let back: Stage = serde_json::from_str(r#"{"op":"train"}"#).unwrap();
    assert_eq!(back, Stage::Train);
}

#[test]
fn run_dir_guards_against_config_drift() {
    let tmp = tempfile::tempdir().unwrap();
    let config = ExperimentConfig::smoke(1, tmp.path().join("a"));
    RunDir::create(&config).unwrap();
    // The same experiment resumes quietly.
    RunDir::create(&config).unwrap();
    // Any substantive difference is refused.
    let mut other = config.clone();
    other.subject_seed += 1;
    let err = RunDir::create(&other).unwrap_err().to_string();
    assert!(err.contains("different experiment"), "{err}");
    // Relocating the directory is not a difference; only output_dir moved.
    fs::rename(tmp.path().join("a"), tmp.path().join("b")).unwrap();
    let mut moved = config;
    moved.output_dir = tmp.path().join("b");
    RunDir::create(&moved).unwrap();
}

#[test]
fn pipeline_end_to_end_smoke() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::smoke(5, tmp.path().join("run"));
    // Exposure is bounded far above -100 bits, so that threshold can never
    // be reached and deterministically exercises the not-reached marking.
    config.metrics.ge_thresholds = vec![2.0, -100.0];
    config.validate().unwrap();
    let mut rd = RunDir::create(&config).unwrap();

    // Analyses refuse to run before training.
    let err = execute_stage(&config, &mut rd, &Stage::Tradeoff { set: "ood_x100".to_string() })
        .unwrap_err()
        .to_string();
    assert!(err.contains("run the train stage first"), "{err}");

    for stage in [
        Stage::GenCorpus,
        Stage::GenCanaries { count: 4 },
        Stage::Train,
        Stage::Unlearn { set: "ood_x1".to_string() },
    ] {
        execute_stage(&config, &mut rd, &stage).unwrap();
    }
    assert!(rd.abs("corpus/fresh_canaries.tsv").exists());
    assert!(rd.abs("checkpoints/unlearn_ood_x1/trace.json").exists());

    // A second build must reload the cached checkpoints, not retrain.
    let world = ensure_world(&mut rd, &config).unwrap();
    let reloaded = load_world(&rd, &config).unwrap();
    assert_eq!(world.subject.fingerprint(), reloaded.subject.fingerprint());
    assert_eq!(world.references[0].fingerprint(), reloaded.references[0].fingerprint());

    execute_stage(&config, &mut rd, &Stage::Tradeoff { set: "ood_x100".to_string() }).unwrap();
    let tradeoff = read_rel(&rd, "reports/tradeoff_ood_x100.csv");
    let tlines: Vec<&str> = tradeoff.lines().collect();
    assert_eq!(tlines[0], TRADEOFF_CSV_HEADER);
    // 6 examples, batch 3, 2 passes: 4 ascent steps plus the subject row.
    assert_eq!(tlines.len(), 1 + 5);
    assert!(tlines[1].starts_with("0,ood_x100,"));

    // The standalone BLEU op agrees with the sweep's step-0 column to the
    // last digit.
    execute_stage(&config, &mut rd, &Stage::Bleu { checkpoint: "subject".to_string() }).unwrap();
    let bleu = read_rel(&rd, "reports/bleu_subject.csv");
    assert_eq!(col(bleu.lines().nth(1).unwrap(), 1), col(tlines[1], 4));

    execute_stage(&config, &mut rd, &Stage::FreqCompare { rotation: None }).unwrap();
    let freq = read_rel(&rd, "reports/frequency_comparison.csv");
    let flines: Vec<&str> = freq.lines().collect();
    assert_eq!(flines[0], FREQUENCY_CSV_HEADER);
    assert_eq!(flines.len(), 1 + 6);
    for line in &flines[1..] {
        let pool = if col(line, 1) == "ood" { 40f64 } else { 30f64 };
        assert_eq!(col(line, 3), "6");
        assert!(col(line, 4).parse::<f64>().unwrap().is_finite());
        assert_eq!(col(line, 5).parse::<f64>().unwrap(), pool.log2());
    }

    // Rotation zero is the identity: no second subject, bit-equal columns.
    execute_stage(&config, &mut rd, &Stage::FreqCompare { rotation: Some(0) }).unwrap();
    assert!(!rd.abs("checkpoints/subject_permuted_0.ckpt").exists());
    let perm0 = read_rel(&rd, "reports/permuted_frequency_0.csv");
    assert_eq!(perm0.lines().next().unwrap(), PERMUTED_CSV_HEADER);
    for line in perm0.lines().skip(1) {
        assert_eq!(col(line, 2), col(line, 3), "{line}");
        assert_eq!(col(line, 4), col(line, 5), "{line}");
    }

    // Rotation one hands each set the next frequency up within its kind.
    execute_stage(&config, &mut rd, &Stage::FreqCompare { rotation: Some(1) }).unwrap();
    assert!(rd.abs("checkpoints/subject_permuted_1.ckpt").exists());
    let perm1 = read_rel(&rd, "reports/permuted_frequency_1.csv");
    for (set, from, to) in
        [("ind_x1", "1", "10"), ("ind_x10", "10", "100"), ("ind_x100", "100", "1")]
    {
        let line = perm1
            .lines()
            .find(|l| l.starts_with(&format!("{set},")))
            .unwrap_or_else(|| panic!("no row for {set}"));
        assert_eq!(col(line, 2), from);
        assert_eq!(col(line, 3), to);
    }

    execute_stage(&config, &mut rd, &Stage::PerplexityDist { set: "ood_x100".to_string() })
        .unwrap();
    let perp = read_rel(&rd, "reports/perplexity_ood_x100.csv");
    let plines: Vec<&str> = perp.lines().collect();
    assert_eq!(plines[0], PERPLEXITY_CSV_HEADER);
    // subject, final, one row per threshold, reference.
    assert_eq!(plines.len(), 1 + 5);
    let unreachable = plines.iter().find(|l| l.starts_with("ge_le_-100,")).unwrap();
    assert_eq!(col(unreachable, 3), "false");
    assert_eq!(col(unreachable, 2), "4"); // parked at the final step
    let reference = plines.iter().find(|l| l.starts_with("reference,")).unwrap();
    assert_eq!(col(reference, 2), ""); // not a point on any trace
    for label in ["subject", "final", "ge_le_2", "ge_le_-100", "reference"] {
        assert!(rd.abs(&format!("histograms/perplexity_ood_x100_{label}.csv")).exists(), "{label}");
    }

    execute_stage(&config, &mut rd, &Stage::MemDiff).unwrap();
    let summary = read_rel(&rd, "reports/mem_diff_summary.csv");
    assert_eq!(summary.lines().next().unwrap(), MEM_DIFF_SUMMARY_HEADER);
    assert_eq!(summary.lines().count(), 1 + 6);
    for line in summary.lines().skip(1) {
        assert_eq!(col(line, 1), "6");
        assert!(matches!(col(line, 3), "true" | "false"), "{line}");
    }
    let per_set = read_rel(&rd, "reports/mem_diff_ood_x100.csv");
    assert_eq!(per_set.lines().next().unwrap(), MEM_DIFF_CSV_HEADER);
    assert_eq!(per_set.lines().count(), 1 + 6);
    for line in per_set.lines().skip(1) {
        assert!(col(line, 3).parse::<usize>().unwrap() < 3);
    }
    // 3 clusters of 2, batch min(3,2)=2: two ascent steps, three rows each.
    let clusters = read_rel(&rd, "reports/mem_diff_clusters_ood_x100.csv");
    assert_eq!(clusters.lines().next().unwrap(), MEM_DIFF_CLUSTERS_HEADER);
    assert_eq!(clusters.lines().count(), 1 + 9);

    execute_stage(&config, &mut rd, &Stage::Similar { set: "ind_x100".to_string() }).unwrap();
    let sim = read_rel(&rd, "reports/similarity_ind_x100.csv");
    let slines: Vec<&str> = sim.lines().collect();
    assert_eq!(slines[0], SIMILARITY_CSV_HEADER);
    assert_eq!(slines.len(), 1 + 5 * 3);
    for group in ["forget", "training_similar", "heldout_similar"] {
        let n = slines[1..].iter().filter(|l| col(l, 1) == group).count();
        assert_eq!(n, 5, "{group}");
    }
    assert!(rd.abs("reports/similar_ind_x100_training.csv").exists());
    assert!(rd.abs("reports/similar_ind_x100_heldout.csv").exists());

    execute_stage(&config, &mut rd, &Stage::RelVsGen { set: "ind_x100".to_string() }).unwrap();
    let rg = read_rel(&rd, "reports/rel_vs_gen_ind_x100.csv");
    let rlines: Vec<&str> = rg.lines().collect();
    assert_eq!(rlines[0], REL_VS_GEN_CSV_HEADER);
    // 6 examples at the first and last recorded steps (0 and 6).
    assert_eq!(rlines.len(), 1 + 12);
    for line in &rlines[1..] {
        assert!(col(line, 2).parse::<f64>().unwrap().is_finite());
        assert!(col(line, 3).parse::<f64>().unwrap().is_finite());
    }
    let rg_summary = read_rel(&rd, "reports/rel_vs_gen_summary_ind_x100.csv");
    assert_eq!(rg_summary.lines().next().unwrap(), REL_VS_GEN_SUMMARY_HEADER);
    assert_eq!(rg_summary.lines().count(), 1 + 2);

    execute_stage(&config, &mut rd, &Stage::Exposure { set: "ood_x100".to_string(), step: None })
        .unwrap();
    execute_stage(&config, &mut rd, &Stage::Exposure { set: "ood_x100".to_string(), step: Some(4) })
        .unwrap();
    let exp = read_rel(&rd, "reports/exposure_ood_x100.csv");
    assert_eq!(exp.lines().next().unwrap(), EXPOSURE_CSV_HEADER);
    assert_eq!(exp.lines().count(), 1 + 6);
    for line in exp.lines().skip(1) {
        // Relative exposure and both interval ends are always populated.
        assert!(!col(line, 6).is_empty());
        assert!(!col(line, 7).is_empty());
        assert!(!col(line, 8).is_empty());
    }
    assert!(rd.abs("reports/exposure_ood_x100_step0004.csv").exists());
    assert!(rd.abs("reports/exposure_ood_x100_step0004.json").exists());
    let missing = execute_stage(
        &config,
        &mut rd,
        &Stage::Exposure { set: "ood_x100".to_string(), step: Some(9999) },
    )
    .unwrap_err()
    .to_string();
    assert!(missing.contains("run the unlearn stage"), "{missing}");

    // Side directory: cheap invariants against the already-trained world.
    let mut config_d = config.clone();
    config_d.output_dir = tmp.path().join("side");
    let mut rd_d = RunDir::create(&config_d).unwrap();
    let spec = world.bundle.forget_set("ood_x100").unwrap().clone();

    // lr 0 must leave every recorded step exactly at the subject.
    let frozen =
        UnlearnSettings { batch_size: 3, lr: 0.0, max_passes: 2, early_stop_threshold: None };
    let plan = unlearn_plan(&config_d, &frozen, "ood_x100", "unlearn-lr0/ood_x100", 6);
    let trace =
        ensure_trace(&mut rd_d, &world.bundle, &world.subject, &plan, "unlearn_lr0", None).unwrap();
    assert_eq!(trace.steps.len(), 5);
    let refs = reference_scorers(&world, SetKind::Ood).unwrap();
    let series = exposure_series(&world.bundle, &spec.example_ids, &trace, &refs).unwrap();
    for (s, e) in trace.steps.iter().zip(&series) {
        assert_eq!(s.mean_forget_nll.to_bits(), trace.steps[0].mean_forget_nll.to_bits());
        assert_eq!(e.mean_ge.to_bits(), series[0].mean_ge.to_bits());
    }

    // A cached trace only answers to the exact plan that produced it.
    let other = unlearn_plan(&config_d, &config_d.unlearn, "ood_x100", "unlearn-lr0/ood_x100", 6);
    let err =
        ensure_trace(&mut rd_d, &world.bundle, &world.subject, &other, "unlearn_lr0", None)
            .unwrap_err()
            .to_string();
    assert!(err.contains("different unlearning plan"), "{err}");

    // A threshold every model clears at step 0 stops before any ascent.
    let eager = UnlearnSettings {
        batch_size: 3,
        lr: 1e-3,
        max_passes: 2,
        early_stop_threshold: Some(1000.0),
    };
    let plan_e = unlearn_plan(&config_d, &eager, "ood_x100", "unlearn-stop/ood_x100", 6);
    let trace_e =
        ensure_trace(&mut rd_d, &world.bundle, &world.subject, &plan_e, "unlearn_stop", Some(&refs))
            .unwrap();
    assert!(trace_e.stopped_early);
    assert_eq!(trace_e.steps.len(), 1);

    // Early stop without scorers to evaluate it is a config error.
    let err = ensure_trace(&mut rd_d, &world.bundle, &world.subject, &plan_e, "unlearn_stop2", None)
        .unwrap_err()
        .to_string();
    assert!(err.contains("early-stop threshold needs reference scorers"), "{err}");

    // Identical reference and subject models: memorization is identically
    // zero, its correlation with difficulty undefined, and the summary says
    // so instead of inventing a number.
    let degenerate = World {
        bundle: world.bundle.clone(),
        references: vec![world.subject.clone()],
        subject: world.subject.clone(),
    };
    run_memorization_difficulty(&mut rd_d, &degenerate, &config_d).unwrap();
    let dsum = read_rel(&rd_d, "reports/mem_diff_summary.csv");
    for line in dsum.lines().skip(1) {
        assert_eq!(col(line, 2), "", "{line}");
        assert_eq!(col(line, 3), "false", "{line}");
    }

    // Replaying the manifest into a fresh directory reproduces every
    // artifact byte for byte.
    let outcome = replay_run(&rd.abs("manifest.json"), &tmp.path().join("replayed")).unwrap();
    assert!(
        outcome.is_clean(),
        "missing {:?}, mismatched {:?}",
        outcome.missing,
        outcome.mismatched
    );
    assert_eq!(outcome.compared, rd.manifest.artifacts.len());
}
