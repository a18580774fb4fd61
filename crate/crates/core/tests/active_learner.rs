use riskal::active_learner::{run, EmPoolPolicy, LearnerConfig, RunResult};
use riskal::classifier::{fit_supervised, ConjugatePrior};
use riskal::dataset::{generate, split, DatasetConfig, DatasetSplit};
use riskal::decision::{evpi, meu, TransitionModel, UtilityModel};

fn small_split(seed: u64) -> DatasetSplit {
    let data = generate(&DatasetConfig {
        n_cycles: 2,
        points_per_cycle: 400,
        seed,
        ..DatasetConfig::default()
    })
    .unwrap();
    split(&data, 0.5, 0.02, seed).unwrap()
}

fn run_with(split: &DatasetSplit, c_ins: f64, config: &LearnerConfig) -> RunResult {
    let um = UtilityModel {
        c_ins,
        ..UtilityModel::default()
    };
    run(
        split,
        &ConjugatePrior::weakly_informative(2),
        &TransitionModel::default(),
        &um,
        config,
    )
    .unwrap()
}

fn em_config() -> LearnerConfig {
    LearnerConfig {
        em_enabled: true,
        ..LearnerConfig::default()
    }
}

#[test]
fn infinite_cost_never_queries() {
    let s = small_split(1);
    for config in [LearnerConfig::default(), em_config()] {
        let r = run_with(&s, f64::INFINITY, &config);
        assert_eq!(r.query_count, 0);
        assert_eq!(r.metric_curve.len(), 1);
        assert_eq!(r.labeled_final.len(), s.labeled_seed.len());
        assert_eq!(r.step_records.len(), s.unlabeled_stream.len());
    }
}

#[test]
fn zero_cost_queries_every_uncertain_point() {
    let s = small_split(2);
    let r = run_with(&s, 0.0, &LearnerConfig::default());
    for step in &r.step_records {
        assert_eq!(step.queried, step.evpi_value > 0.0, "t = {}", step.t);
    }
    assert!(r.query_count > 0);
}

#[test]
fn query_flags_replay_from_recorded_evpi() {
    let s = small_split(3);
    let tm = TransitionModel::default();
    let um = UtilityModel::default();
    for config in [LearnerConfig::default(), em_config()] {
        let r = run_with(&s, um.c_ins, &config);
        let mut queries = 0;
        for (step, obs) in r.step_records.iter().zip(&s.unlabeled_stream) {
            assert_eq!(step.t, obs.t);
            assert_eq!(step.true_label, obs.y_true);
            let v = evpi(&step.posterior, &tm, &um).unwrap();
            assert!((v - step.evpi_value).abs() < 1e-12);
            assert_eq!(step.queried, step.evpi_value > um.c_ins);
            if step.queried {
                queries += 1;
                assert_eq!(step.chosen_action, step.optimal_action);
            } else {
                assert_eq!(step.chosen_action, meu(&step.posterior, &tm, &um).unwrap().0);
            }
        }
        assert_eq!(queries, r.query_count);
        assert_eq!(r.queried_indices().count(), r.query_count);
        assert_eq!(r.labeled_final.len(), s.labeled_seed.len() + r.query_count);
        assert_eq!(r.metric_curve.len(), r.query_count + 1);
        for (q, m) in r.metric_curve.iter().enumerate() {
            assert_eq!(m.query_count, q);
            assert!((0.0..=1.0).contains(&m.decision_accuracy));
            assert!((0.0..=1.0).contains(&m.macro_f1));
        }
    }
}

#[test]
fn plain_final_state_equals_a_refit_on_the_final_labels() {
    let s = small_split(4);
    let r = run_with(&s, 7.0, &LearnerConfig::default());
    assert_eq!(r.em_invocations, 0);
    let refit = fit_supervised(&ConjugatePrior::weakly_informative(2), &r.labeled_final).unwrap();
    assert!(r.final_state.parameter_distance(&refit) < 1e-10);
}

#[test]
fn em_runs_once_per_query() {
    let s = small_split(5);
    let r = run_with(&s, 7.0, &em_config());
    assert!(r.query_count > 0);
    assert_eq!(r.em_invocations, r.query_count);
}

#[test]
fn full_stream_policy_also_refines_the_initial_model() {
    let s = small_split(6);
    let config = LearnerConfig {
        em_pool_policy: EmPoolPolicy::FullStream,
        ..em_config()
    };
    let r = run_with(&s, 7.0, &config);
    assert_eq!(r.em_invocations, r.query_count + 1);
}

#[test]
fn runs_are_deterministic_and_serializable() {
    let s = small_split(7);
    let a = run_with(&s, 7.0, &em_config());
    let b = run_with(&s, 7.0, &em_config());
    let ja = serde_json::to_string(&a).unwrap();
    assert_eq!(ja, serde_json::to_string(&b).unwrap());
    let value: serde_json::Value = serde_json::from_str(&ja).unwrap();
    for key in ["step_records", "query_count", "em_invocations", "labeled_final", "metric_curve", "final_state"] {
        assert!(value.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn empty_seed_is_rejected() {
    let mut s = small_split(8);
    s.labeled_seed.clear();
    let err = run(
        &s,
        &ConjugatePrior::weakly_informative(2),
        &TransitionModel::default(),
        &UtilityModel::default(),
        &LearnerConfig::default(),
    )
    .unwrap_err();
    assert!(matches!(err, riskal::Error::EmptyLabeledSeed));
}
