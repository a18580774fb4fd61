use riskal::dataset::DatasetConfig;
use riskal::harness::{
    emit, load_report, quantile, run_experiment, run_repetitions, AggregateReport,
    ExperimentConfig, ReportFormat, Variant, REPORT_FILES,
};

fn small_config(n_reps: usize, variants: Vec<Variant>) -> ExperimentConfig {
    ExperimentConfig {
        n_reps,
        master_seed: 5,
        dataset: DatasetConfig {
            n_cycles: 2,
            points_per_cycle: 300,
            ..DatasetConfig::default()
        },
        variants,
        ..ExperimentConfig::default()
    }
}

#[test]
fn single_plain_repetition() {
    let report = run_experiment(&small_config(1, vec![Variant::Plain]), None).unwrap();
    assert_eq!(report.variants.len(), 1);
    let v = &report.variants[0];
    assert_eq!(v.variant, Variant::Plain);
    assert_eq!(v.query_counts.len(), 1);
    assert_eq!(v.median_queries, v.query_counts[0] as f64);
    assert_eq!(v.decision_accuracy.len(), v.query_counts[0] + 1);
}

#[test]
fn variants_share_each_split() {
    let runs = run_repetitions(&small_config(4, vec![Variant::Em, Variant::Plain]), None).unwrap();
    assert_eq!(runs.len(), 8);
    for pair in runs.chunks(2) {
        assert_eq!(pair[0].rep, pair[1].rep);
        assert_eq!(pair[0].split_fingerprint, pair[1].split_fingerprint);
    }
    assert_ne!(runs[0].split_fingerprint, runs[2].split_fingerprint);
}

#[test]
fn thread_count_does_not_change_results() {
    let config = small_config(3, vec![Variant::Plain, Variant::Em]);
    let one = run_experiment(&config, Some(1)).unwrap();
    let many = run_experiment(&config, Some(3)).unwrap();
    assert_eq!(
        serde_json::to_string(&one).unwrap(),
        serde_json::to_string(&many).unwrap()
    );
}

#[test]
fn aggregation_ignores_run_order() {
    let config = small_config(5, vec![Variant::Plain, Variant::Em]);
    let runs = run_repetitions(&config, None).unwrap();
    let forward = AggregateReport::from_runs(&config, runs.clone()).unwrap();
    let mut shuffled = runs;
    shuffled.reverse();
    shuffled.swap(1, 6);
    assert_eq!(forward, AggregateReport::from_runs(&config, shuffled).unwrap());
}

#[test]
fn emitted_files_round_trip() {
    let config = small_config(3, vec![Variant::Plain, Variant::Em]);
    let report = run_experiment(&config, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = emit(&report, dir.path(), ReportFormat::Csv).unwrap();
    assert_eq!(written.len(), REPORT_FILES.len());
    for name in REPORT_FILES {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    assert_eq!(load_report(dir.path()).unwrap(), report);

    // the histogram alone reproduces the median
    let hist = std::fs::read_to_string(dir.path().join("queries_hist.csv")).unwrap();
    for v in &report.variants {
        let mut samples = Vec::new();
        for line in hist.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            if f[0] == v.variant.name() {
                let q: f64 = f[1].parse().unwrap();
                samples.extend(std::iter::repeat_n(q, f[2].parse().unwrap()));
            }
        }
        samples.sort_by(f64::total_cmp);
        assert_eq!(quantile(&samples, 0.5), v.median_queries);
    }

    let curves = std::fs::read_to_string(dir.path().join("curves.csv")).unwrap();
    let mut rows = 0;
    for line in curves.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let v = report.variant(f[0].parse().unwrap()).unwrap();
        let curve = match f[2] {
            "decision_accuracy" => &v.decision_accuracy,
            "macro_f1" => &v.macro_f1,
            other => panic!("unexpected metric {other}"),
        };
        let p = &curve[f[1].parse::<usize>().unwrap()];
        for (text, value) in f[3..].iter().zip([p.q25, p.median, p.q75]) {
            assert!((text.parse::<f64>().unwrap() - value).abs() <= 1e-12);
        }
        rows += 1;
    }
    let expected: usize = report
        .variants
        .iter()
        .map(|v| v.decision_accuracy.len() + v.macro_f1.len())
        .sum();
    assert_eq!(rows, expected);

    let index = std::fs::read_to_string(dir.path().join("queries_by_index.csv")).unwrap();
    assert_eq!(index.lines().next().unwrap(), "variant,stream_index,query_frequency");
}

#[test]
fn report_json_schema() {
    let report = run_experiment(&small_config(2, vec![Variant::Plain]), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = emit(&report, dir.path(), ReportFormat::Json).unwrap();
    assert_eq!(written, vec![dir.path().join("report.json")]);
    let text = std::fs::read_to_string(&written[0]).unwrap();
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in ["n_reps", "master_seed", "dataset", "split", "variants", "learner", "transition", "utility"] {
        assert!(value["config"].get(key).is_some(), "config.{key}");
    }
    let v = &value["variants"][0];
    for key in [
        "variant",
        "query_counts",
        "median_queries",
        "query_histogram",
        "queries_by_index",
        "first_cycle_fraction",
        "mean_first_cycle_fraction",
        "split_fingerprints",
        "decision_accuracy",
        "macro_f1",
    ] {
        assert!(v.get(key).is_some(), "variants[0].{key}");
    }
    assert_eq!(v["variant"], "plain");
}

#[test]
fn empty_variant_list_is_rejected_before_writing() {
    let config = small_config(1, vec![]);
    assert!(run_experiment(&config, None).is_err());

    let mut report = run_experiment(&small_config(1, vec![Variant::Plain]), None).unwrap();
    report.variants.clear();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert!(emit(&report, &out, ReportFormat::Csv).is_err());
    assert!(!out.exists());
}

#[test]
fn config_round_trips_through_json() {
    let config = small_config(7, vec![Variant::Em]);
    let text = serde_json::to_string(&config).unwrap();
    let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string(&back).unwrap(), text);
    let partial: ExperimentConfig = serde_json::from_str(r#"{"n_reps": 3, "variants": ["plain"]}"#).unwrap();
    assert_eq!(partial.n_reps, 3);
    assert_eq!(partial.variants, vec![Variant::Plain]);
    assert!(serde_json::from_str::<ExperimentConfig>(r#"{"utility": {"c_ins": -1}}"#).is_err());
}
