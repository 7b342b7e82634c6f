use tempfile::tempdir;

use crate::corpus::{BundlePlan, CanaryParams, CorpusBundle, CorpusParams};
use crate::model::{Model, ModelConfig};
use crate::training::{train, Checkpoint, Direction, OptimizerState, TrainConfig};
use crate::unlearning::{
    batch_schedule, early_stop_on_exposure, unlearn, unlearn_with_stop, UnlearnPlan,
};

fn tiny_bundle() -> CorpusBundle {
    let plan = BundlePlan {
        corpus: CorpusParams {
            n_train: 40,
            n_validation: 24,
            n_test: 24,
            len_range: [3, 4],
            context_budget: 8,
        },
        canary: CanaryParams { payload_len: 4, alphabet_size: 16, unique: true },
        ood_sets: vec![("ood_x3".into(), 5, 3)],
        ind_sets: vec![("ind_x2".into(), 4, 2)],
        r_ood_size: 8,
        r_ind_size: 8,
    };
    CorpusBundle::build(11, 7, &plan).unwrap()
}

fn tiny_subject(bundle: &CorpusBundle, steps: usize, seed_value: u64) -> Checkpoint {
    let config = TrainConfig {
        model: ModelConfig {
            context_window: 8,
            embed_dim: 4,
            hidden_dims: vec![8],
            vocab_size: 69,
            pad_token: 4,
        },
        optimizer: OptimizerState::adam(1e-2),
        steps,
        batch_size: 4,
        checkpoint_every: Some(steps.max(1)),
    };
    let run = train(bundle, &config, seed_value, &bundle.forget_sets).unwrap();
    run.checkpoints.into_iter().last().unwrap()
}

#[test]
fn trace_shape_follows_ceil_pass_arithmetic() {
    let bundle = tiny_bundle();
    let subject = tiny_subject(&bundle, 12, 3);

    // |F| = 5, batch 2 -> 3 steps per pass, 2 passes -> 6 updates + step 0.
    let mut plan = UnlearnPlan::new("ood_x3", 2, 17);
    plan.lr = 1e-4;
    plan.max_passes = 2;
    assert_eq!(plan.steps_per_pass(5), 3);
    let trace = unlearn(&subject, &bundle, &plan).unwrap();
    assert_eq!(trace.steps.len(), 7);
    assert_eq!(trace.steps[0].step, 0);
    assert_eq!(trace.last().step, 6);
    assert!(!trace.nan_truncated && !trace.stopped_early);

    // Every pass is a permutation of F, chopped into ceil-sized chunks.
    let ids = &bundle.forget_set("ood_x3").unwrap().example_ids;
    let batches = batch_schedule(ids, &plan);
    assert_eq!(batches.iter().map(Vec::len).collect::<Vec<_>>(), vec![2, 2, 1, 2, 2, 1]);
    for pass in batches.chunks(3) {
        let mut seen: Vec<u64> = pass.iter().flatten().copied().collect();
        seen.sort_unstable();
        let mut expect = ids.clone();
        expect.sort_unstable();
        assert_eq!(seen, expect);
    }
}

#[test]
fn step_zero_is_the_untouched_subject_and_lr_zero_keeps_it_that_way() {
    let bundle = tiny_bundle();
    let subject = tiny_subject(&bundle, 12, 3);
    let mut plan = UnlearnPlan::new("ind_x2", 2, 9);
    plan.lr = 0.0;
    plan.max_passes = 2;
    let trace = unlearn(&subject, &bundle, &plan).unwrap();
    assert_eq!(trace.steps.len(), 5);
    for s in &trace.steps {
        assert!(s.checkpoint.params.bit_eq(&subject.params));
        assert_eq!(s.mean_forget_nll, trace.steps[0].mean_forget_nll);
    }
}

#[test]
fn one_ascent_step_raises_the_full_set_nll_across_twenty_trials() {
    let bundle = tiny_bundle();
    for trial in 0..20 {
        let subject = tiny_subject(&bundle, 10, 100 + trial);
        // batch = |F| makes one pass a single full-set mean-gradient step, so
        // the recorded forget NLL is exactly the ascended objective.
        let mut plan = UnlearnPlan::new("ind_x2", 4, trial);
        plan.lr = 1e-3;
        plan.max_passes = 1;
        let trace = unlearn(&subject, &bundle, &plan).unwrap();
        assert_eq!(trace.steps.len(), 2);
        assert!(
            trace.steps[1].mean_forget_nll > trace.steps[0].mean_forget_nll,
            "trial {trial}: {} -> {}",
            trace.steps[0].mean_forget_nll,
            trace.steps[1].mean_forget_nll
        );
    }
}

#[test]
fn full_set_batch_equals_one_manual_mean_gradient_step() {
    let bundle = tiny_bundle();
    let subject = tiny_subject(&bundle, 12, 3);
    let mut plan = UnlearnPlan::new("ind_x2", 4, 5);
    plan.lr = 2e-3;
    plan.max_passes = 1;
    let trace = unlearn(&subject, &bundle, &plan).unwrap();

    // The scheduled batch is a shuffle of F; bit-exact comparison must sum
    // per-example gradients in the same order.
    let ids = &bundle.forget_set("ind_x2").unwrap().example_ids;
    let scheduled = batch_schedule(ids, &plan);
    assert_eq!(scheduled.len(), 1);
    let mut sorted = scheduled[0].clone();
    sorted.sort_unstable();
    let mut expect = ids.clone();
    expect.sort_unstable();
    assert_eq!(sorted, expect, "one full-set batch covers F exactly");
    let batch: Vec<&[u32]> =
        scheduled[0].iter().map(|&id| bundle.example(id).tokens.as_slice()).collect();
    let model = Model { config: subject.config.clone(), params: subject.params.clone() };
    let (_, grads) = model.nll_gradient(&batch).unwrap();
    let mut manual = subject.params.clone();
    let mut opt = OptimizerState::sgd(2e-3);
    opt.apply_update(&mut manual, &grads, Direction::Ascent).unwrap();
    assert!(trace.last().checkpoint.params.bit_eq(&manual));
}

#[test]
fn a_trace_replays_bit_identically_from_its_plan() {
    let bundle = tiny_bundle();
    let subject = tiny_subject(&bundle, 12, 3);
    let mut plan = UnlearnPlan::new("ood_x3", 2, 31);
    plan.lr = 5e-4;
    plan.max_passes = 2;
    let trace = unlearn(&subject, &bundle, &plan).unwrap();

    let ids = &bundle.forget_set("ood_x3").unwrap().example_ids;
    let mut model = Model { config: subject.config.clone(), params: subject.params.clone() };
    let mut opt = OptimizerState::sgd(plan.lr);
    for (k, batch_ids) in batch_schedule(ids, &plan).into_iter().enumerate() {
        let batch: Vec<&[u32]> =
            batch_ids.iter().map(|&id| bundle.example(id).tokens.as_slice()).collect();
        let (_, grads) = model.nll_gradient(&batch).unwrap();
        opt.apply_update(&mut model.params, &grads, Direction::Ascent).unwrap();
        assert!(
            trace.steps[k + 1].checkpoint.params.bit_eq(&model.params),
            "diverged at ascent step {}",
            k + 1
        );
    }
}

#[test]
fn early_stop_halts_at_the_first_step_at_or_below_threshold() {
    let bundle = tiny_bundle();
    let subject = tiny_subject(&bundle, 12, 3);
    let mut plan = UnlearnPlan::new("ood_x3", 2, 31);
    plan.lr = 1e-4;
    plan.max_passes = 2;

    // A synthetic metric that sinks by 1 bit per evaluation: 10, 9, 8, 7...
    let make_metric = || {
        let mut calls = 0i64;
        move |_: &Checkpoint| {
            calls += 1;
            Ok(10.0 - (calls - 1) as f64)
        }
    };
    let (trace, stop) = early_stop_on_exposure(&subject, &bundle, &plan, 7.5, make_metric()).unwrap();
    assert!(stop.reached);
    assert_eq!(stop.step, 3);
    assert_eq!(trace.steps.len(), 4);
    assert_eq!(trace.last().stop_metric, Some(7.0));

    // An infinite threshold is satisfied by the subject itself.
    let (trace, stop) =
        early_stop_on_exposure(&subject, &bundle, &plan, f64::INFINITY, make_metric()).unwrap();
    assert!(stop.reached);
    assert_eq!(stop.step, 0);
    assert_eq!(trace.steps.len(), 1);

    // An unreachable threshold runs the whole plan and says so.
    let (trace, stop) =
        early_stop_on_exposure(&subject, &bundle, &plan, -100.0, make_metric()).unwrap();
    assert!(!stop.reached);
    assert_eq!(stop.step, 6);
    assert_eq!(trace.steps.len(), 7);

    // The callback entry point insists on a configured threshold.
    let no_threshold = UnlearnPlan::new("ood_x3", 2, 31);
    assert!(unlearn_with_stop(&subject, &bundle, &no_threshold, |_| Ok(0.0)).is_err());
}

#[test]
fn exploding_ascent_truncates_the_trace_at_the_last_finite_step() {
    let bundle = tiny_bundle();
    let subject = tiny_subject(&bundle, 12, 3);
    let mut plan = UnlearnPlan::new("ood_x3", 5, 2);
    plan.lr = 1e308;
    plan.max_passes = 2;
    let trace = unlearn(&subject, &bundle, &plan).unwrap();
    assert!(trace.nan_truncated);
    assert!(trace.steps.len() <= 2, "recorded {} steps", trace.steps.len());
    for s in &trace.steps {
        assert!(s.checkpoint.params.all_finite());
        assert!(s.mean_forget_nll.is_finite());
    }
}

#[test]
fn plans_reject_oversized_batches_and_unknown_sets() {
    let bundle = tiny_bundle();
    let subject = tiny_subject(&bundle, 2, 3);
    let plan = UnlearnPlan::new("ood_x3", 6, 0);
    assert!(unlearn(&subject, &bundle, &plan).is_err());
    let plan = UnlearnPlan::new("no_such_set", 2, 0);
    assert!(unlearn(&subject, &bundle, &plan).is_err());
}

#[test]
fn traces_round_trip_through_the_manifest() {
    let bundle = tiny_bundle();
    let subject = tiny_subject(&bundle, 12, 3);
    let mut plan = UnlearnPlan::new("ind_x2", 2, 8);
    plan.lr = 1e-4;
    plan.max_passes = 1;
    let trace = unlearn(&subject, &bundle, &plan).unwrap();

    let dir = tempdir().unwrap();
    let manifest = trace.save(dir.path()).unwrap();
    assert_eq!(manifest.steps.len(), trace.steps.len());
    assert!(dir.path().join("trace.json").exists());
    assert!(dir.path().join("step_0000.ckpt").exists());

    let loaded = crate::unlearning::UnlearnTrace::load(dir.path()).unwrap();
    assert_eq!(loaded.plan, trace.plan);
    assert_eq!(loaded.steps.len(), trace.steps.len());
    for (a, b) in loaded.steps.iter().zip(&trace.steps) {
        assert_eq!(a.step, b.step);
        assert_eq!(a.mean_forget_nll, b.mean_forget_nll);
        assert!(a.checkpoint.params.bit_eq(&b.checkpoint.params));
    }
}
