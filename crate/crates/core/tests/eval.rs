use lras_core::eval::{
    behavior_report, run_benchmark, triage_report, EvalConfig, EvalError, EvalResult, EvalStatus, Proportion,
    SearchBucket,
};
use lras_core::fixture::{triage_fixture, FixtureBundle, TriageCalibration};
use lras_core::question::BenchmarkItem;
use lras_core::records::parse_jsonl;
use lras_core::trajectory::Trajectory;

fn result(id: usize, searches: usize, correct: bool) -> EvalResult {
    EvalResult {
        item_id: format!("i{id}"),
        benchmark_tag: "b".into(),
        trajectory: Trajectory::new(format!("i{id}"), "q"),
        predicted: Some("A".into()),
        gold: if correct { "A" } else { "B" }.into(),
        correct,
        search_count: searches,
        status: EvalStatus::Completed,
        error: None,
    }
}

#[test]
fn twenty_item_bucket_oracle() {
    // (searches, correct) per item; tallied by hand below.
    let plan = [
        (0, true), (0, true), (0, false), (0, true), (0, false), (0, false),
        (1, true), (1, true), (1, true), (1, false), (1, true), (1, true), (1, false),
        (2, true), (2, false), (3, true), (4, true), (2, true), (5, false), (2, true),
    ];
    let results: Vec<_> = plan.iter().enumerate().map(|(i, &(s, c))| result(i, s, c)).collect();
    let r = behavior_report(&results).unwrap();
    assert_eq!((r.n_items, r.n_correct), (20, 13));
    assert_eq!(r.accuracy_overall.render(), "0.6500");
    let zero = r.bucket(SearchBucket::Zero);
    assert_eq!((zero.n, zero.correct), (6, 3));
    let one = r.bucket(SearchBucket::One);
    assert_eq!((one.n, one.correct), (7, 5));
    let many = r.bucket(SearchBucket::Many);
    assert_eq!((many.n, many.correct), (7, 5));
    assert_eq!(r.multi_search_proportion, Proportion::new(7, 20).unwrap());
    assert_eq!(r.multi_search_proportion.render(), "0.3500");
    assert_eq!(one.accuracy.unwrap().render(), "0.7143");
    assert_eq!(behavior_report(&[]).unwrap_err(), EvalError::Empty);
}

#[test]
fn fixture_benchmark_run() {
    let world = FixtureBundle::builtin().world(Default::default());
    let items: Vec<BenchmarkItem> =
        parse_jsonl(include_str!("../fixtures/benchmark.jsonl"), "bench".as_ref()).unwrap();
    let cfg = EvalConfig {
        jobs: 4,
        ..EvalConfig::default()
    };
    let results = run_benchmark(&items, world.policy.as_ref(), world.env.as_ref(), &cfg);
    assert_eq!(results.len(), 20);
    assert!(results.iter().zip(&items).all(|(r, i)| r.item_id == i.id));
    let report = behavior_report(&results).unwrap();
    // Evaluation decodes without a seed, so every item plays its first
    // scripted rollout.
    assert_eq!((report.n_items, report.n_correct), (20, 15));
    let b = |k| {
        let s = report.bucket(k);
        (s.n, s.correct)
    };
    assert_eq!(b(SearchBucket::Zero), (8, 5));
    assert_eq!(b(SearchBucket::One), (9, 8));
    assert_eq!(b(SearchBucket::Many), (3, 2));
    let q10 = results.iter().find(|r| r.item_id == "q10").unwrap();
    assert_eq!(q10.status, EvalStatus::Error);
    assert!(!q10.correct);
    let q14 = results.iter().find(|r| r.item_id == "q14").unwrap();
    assert_eq!(q14.status, EvalStatus::Truncated);
    assert_eq!(q14.predicted, None);
}

#[test]
fn calibrated_triage() {
    let cal = TriageCalibration {
        items: 1000,
        failures: 705,
        triggered: 202,
        corrected: 58,
    };
    let (baseline, search) = triage_fixture(cal, 3);
    // Independent tally straight from the records.
    let failures: Vec<&EvalResult> = baseline.iter().filter(|r| !r.correct).collect();
    let find = |id: &str| search.iter().find(|r| r.item_id == id).unwrap();
    let triggered = failures.iter().filter(|r| find(&r.item_id).search_count >= 1).count();
    let corrected = failures
        .iter()
        .filter(|r| {
            let s = find(&r.item_id);
            s.search_count >= 1 && s.correct
        })
        .count();
    assert_eq!((failures.len(), triggered, corrected), (705, 202, 58));

    let t = triage_report(&baseline, &search).unwrap();
    assert_eq!(
        (t.failures, t.search_triggered, t.search_not_triggered, t.corrected_by_search),
        (705, 202, 503, 58)
    );
    assert_eq!(t.trigger_rate.unwrap().percent(), "28.7%");
    assert_eq!(t.corrected_rate.unwrap().percent(), "8.2%");
    assert_eq!(t.success_rate.unwrap().percent(), "28.7%");
    let printed = t.to_string();
    assert!(printed.contains("705") && printed.contains("202 (28.7%)"), "{printed}");

    let mut short = search.clone();
    short.pop();
    assert!(matches!(triage_report(&baseline, &short), Err(EvalError::ItemMismatch { .. })));
}
