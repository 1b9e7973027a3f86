//! Acceptance suite (no libtest harness, so the lines always show). Every
//! criterion prints one PASS/FAIL line with its timing; the binary exits
//! nonzero if any criterion fails.
//!
//! Tolerances and time budgets are pinned in the constants below.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use lras_core::agent::{run_group, run_trajectory, CandidateGroup, GroupConfig, LoopConfig, RolloutStatus, BUDGET_EXHAUSTED};
use lras_core::curation::{difficulty_filter, run_sft_pipeline, stats_for_trajectories, CurationConfig, SftEndpoints};
use lras_core::eval::{triage_report, EvalResult};
use lras_core::fixture::{triage_fixture, FixtureBundle, TriageCalibration};
use lras_core::question::SourceQuestion;
use lras_core::records::parse_jsonl;
use lras_core::reward::{
    case_reward, grpo_objective, group_advantages, surrogate_from_ratios, weighted_reward, GrpoParams, GrpoSample,
    RewardParams,
};
use lras_core::search::corpus::CannedCorpus;
use lras_core::search::{ObservationPipeline, SearchResult};
use lras_core::stubs::{ExtractiveSummarizer, Script, ScriptedPolicy};
use lras_core::trajectory::{
    from_tag_stream, parse_tag_stream, serialize, validate_format, Action, Observation, Trajectory, Turn,
    ViolationCode, PROMPT_LEVEL_KEY,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ADVANTAGE_TOL: f64 = 1e-9;
const SURROGATE_TOL: f64 = 1e-9;
const STATS_TOL: f64 = 0.01;

const BUDGET_REWARD: Duration = Duration::from_secs(1);
const BUDGET_ADVANTAGE: Duration = Duration::from_secs(5);
const BUDGET_SURROGATE: Duration = Duration::from_secs(5);
const BUDGET_GRAMMAR: Duration = Duration::from_secs(10);
const BUDGET_LOOP: Duration = Duration::from_secs(5);
const BUDGET_CURATION: Duration = Duration::from_secs(10);
const BUDGET_STATS: Duration = Duration::from_secs(5);
const BUDGET_TRIAGE: Duration = Duration::from_secs(10);
const BUDGET_E2E: Duration = Duration::from_secs(60);

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn core_fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn four_case_table() -> Outcome {
    let table = [
        (true, true, 1.0),
        (true, false, 0.8),
        (false, true, 0.2),
        (false, false, 0.0),
    ];
    for (acc, fmt, want) in table {
        let got = case_reward(acc, fmt, 0.2).value;
        ensure!(got == want, "acc={acc} fmt={fmt}: {got} != {want}");
    }
    // The same four cases end to end, from raw tag streams.
    let q = SourceQuestion::new("c", "Which provision applies? A. one B. two", "A");
    let streams = [
        ("<think>x</think><answer>A</answer>", 1.0),
        ("<answer>A</answer>", 0.8),
        ("<think>x</think><answer>B</answer>", 0.2),
        ("<answer>B</answer>", 0.0),
    ];
    for (s, want) in streams {
        let t = from_tag_stream("c", &q.text, s);
        let got = lras_core::reward::score_trajectory(&t, &q, &RewardParams::default())
            .map_err(|e| e.to_string())?
            .value;
        ensure!(got == want, "{s}: {got} != {want}");
    }
    Ok("{1, 0.8, 0.2, 0} exact".into())
}

fn weighted_table() -> Outcome {
    let p = RewardParams::weighted();
    let cases = [((true, true, true), 1.3), ((true, false, false), 1.0), ((false, true, true), 0.3)];
    for ((a, s, f), want) in cases {
        let got = weighted_reward(a, s, f, &p).map_err(|e| e.to_string())?.value;
        ensure!(got == want, "({a},{s},{f}): {got} != {want}");
    }
    Ok("1.3 / 1.0 / 0.3 exact".into())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn pop_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn advantage_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_mean, mut worst_std) = (0.0f64, 0.0f64);
    for g in 0..1000 {
        let k = rng.random_range(2..=16);
        let rewards: Vec<f64> = loop {
            let r: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
            if pop_std(&r) > 1e-3 {
                break r;
            }
        };
        let a = group_advantages(&rewards).map_err(|e| e.to_string())?.advantages;
        worst_mean = worst_mean.max(mean(&a).abs());
        worst_std = worst_std.max((pop_std(&a) - 1.0).abs());
        ensure!(mean(&a).abs() <= ADVANTAGE_TOL, "group {g}: mean {}", mean(&a));
        ensure!((pop_std(&a) - 1.0).abs() <= ADVANTAGE_TOL, "group {g}: std {}", pop_std(&a));
        let order = |xs: &[f64]| {
            let mut idx: Vec<usize> = (0..xs.len()).collect();
            idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
            idx
        };
        ensure!(order(&rewards) == order(&a), "group {g}: ordering changed");
        let shift = rng.random_range(-10.0..10.0);
        let scale = rng.random_range(0.01..100.0);
        let moved: Vec<f64> = rewards.iter().map(|r| r * scale + shift).collect();
        let b = group_advantages(&moved).map_err(|e| e.to_string())?.advantages;
        for (x, y) in a.iter().zip(&b) {
            ensure!((x - y).abs() <= ADVANTAGE_TOL, "group {g}: shift/scale changed {x} to {y}");
        }
    }
    Ok(format!("1000 groups; worst |mean| {worst_mean:.1e}, worst |std-1| {worst_std:.1e}"))
}

fn surrogate_oracle() -> Outcome {
    for (rho, adv, want) in [(1.0, 2.0, 2.0), (2.0, 1.0, 1.2), (2.0, -1.0, -2.0)] {
        let got = surrogate_from_ratios(&[(rho, adv)], 0.2).map_err(|e| e.to_string())?;
        ensure!(got == want, "rho={rho} A={adv}: {got} != {want}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let samples: Vec<GrpoSample> = (0..100)
        .map(|_| {
            let len = rng.random_range(1..16);
            GrpoSample {
                new_logprobs: (0..len).map(|_| rng.random_range(-2.0..0.0)).collect(),
                old_logprobs: (0..len).map(|_| rng.random_range(-2.0..0.0)).collect(),
                ref_logprobs: None,
                advantage: rng.random_range(-2.0..2.0),
            }
        })
        .collect();
    let unclipped = samples
        .iter()
        .map(|s| {
            let log_ratio: f64 = s.new_logprobs.iter().sum::<f64>() - s.old_logprobs.iter().sum::<f64>();
            log_ratio.exp() * s.advantage
        })
        .sum::<f64>()
        / samples.len() as f64;
    let params = GrpoParams {
        clip_epsilon: 1e6,
        kl_coefficient: 0.0,
        ..GrpoParams::default()
    };
    let got = grpo_objective(&samples, &params).map_err(|e| e.to_string())?;
    let diff = (got - unclipped).abs();
    ensure!(diff <= SURROGATE_TOL, "eps=1e6: {got} vs unclipped {unclipped}");
    Ok(format!("analytic cases exact; eps=1e6 gap {diff:.1e}"))
}

fn random_text(rng: &mut ChaCha8Rng) -> String {
    const WORDS: &[&str] = &["lease", "statute", "合同", "consent", "article 7", "court", "法律", "claim", "deposit"];
    let n = rng.random_range(1..6);
    (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

fn random_trajectory(rng: &mut ChaCha8Rng) -> Trajectory {
    let mut t = Trajectory::new("gen", "generated question");
    for _ in 0..rng.random_range(0..5) {
        let mut actions = Vec::new();
        if rng.random_bool(0.8) {
            actions.push(Action::think(random_text(rng)));
        }
        actions.push(Action::search(random_text(rng)));
        t.turns.push(Turn::new(actions).with_observation(Observation::fixture(random_text(rng))));
    }
    let mut actions = Vec::new();
    if rng.random_bool(0.8) {
        actions.push(Action::think(random_text(rng)));
    }
    let labels = ["A", "B", "AC", "BD", "ABCD"];
    actions.push(Action::answer(labels[rng.random_range(0..labels.len())]));
    t.turns.push(Turn::new(actions));
    t.refresh_final_answer();
    t
}

fn grammar() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..1000 {
        let t = random_trajectory(&mut rng);
        let stream = serialize(&t);
        let parsed = parse_tag_stream(&stream).map_err(|e| format!("trajectory {i}: {e}"))?;
        ensure!(parsed == t.turns, "trajectory {i}: round trip changed turns");
    }

    let check = |name: &str, stream: &str, codes: &[ViolationCode], level: &str| -> Result<(), String> {
        let mut t = from_tag_stream("v", "q", stream);
        t.metadata.insert(PROMPT_LEVEL_KEY.into(), level.into());
        let r = validate_format(&t);
        ensure!(!r.valid && codes.iter().any(|c| r.has(*c)), "{name} not rejected: {r:?}");
        Ok(())
    };
    // An answer tag opened inside an unclosed think reads as nesting too.
    check(
        "unclosed",
        "<think>reasoning<answer>A</answer>",
        &[ViolationCode::UnclosedTag, ViolationCode::NestedTag],
        "L3",
    )?;
    check("unclosed at end", "<think>ok</think><answer>A", &[ViolationCode::UnclosedTag], "L3")?;
    check("unknown tag", "<think>ok</think><tool>x</tool><answer>A</answer>", &[ViolationCode::UnknownTag], "L3")?;
    check(
        "search+answer",
        "<think>ok</think><search>q</search><answer>A</answer>",
        &[ViolationCode::BothSearchAndAnswer],
        "L3",
    )?;
    for level in ["L2", "L3"] {
        check(
            "missing think",
            "<search>q</search><information>x</information><answer>A</answer>",
            &[ViolationCode::ThinkRequired],
            level,
        )?;
    }
    // A policy that writes its own information block, run through the loop.
    let policy = ScriptedPolicy::always(Script::new([
        "<think>x</think><information>invented statute</information><answer>A</answer>",
    ]));
    let (_, env) = loop_env();
    let r = run_trajectory(&SourceQuestion::new("f", "Which statute applies?", "A"), &policy, &env, &LoopConfig::default())
        .map_err(|e| e.to_string())?;
    let report = validate_format(&r.trajectory);
    ensure!(
        !report.valid && report.has(ViolationCode::FabricatedInformation),
        "fabricated information not rejected: {report:?}"
    );
    Ok("1000 round trips; 5 violation classes rejected".into())
}

fn loop_env() -> (Arc<CannedCorpus>, ObservationPipeline) {
    let mut c = CannedCorpus::new();
    c.add_query(
        "limitation period",
        vec![SearchResult {
            url: "https://law.example/188".into(),
            title: "Article 188".into(),
            snippet: String::new(),
            rank: 1,
        }],
    )
    .add_page(
        "https://law.example/188",
        "text/html",
        "<html><head><title>Article 188</title></head><body><p>The limitation period for civil claims is three years.</p></body></html>",
    );
    let c = Arc::new(c);
    let env = ObservationPipeline::new(c.clone(), c.clone(), Arc::new(ExtractiveSummarizer::default()), Default::default());
    (c, env)
}

fn loop_budget() -> Outcome {
    let q = SourceQuestion::new("lim", "What is the limitation period for civil claims? A. one year B. three years", "B");
    let search = "<think>Search again.</think><search>limitation period</search>";
    let mut renders = Vec::new();
    for run in 0..3 {
        let policy = ScriptedPolicy::always(Script::new([search]));
        let (corpus, env) = loop_env();
        let r = run_trajectory(&q, &policy, &env, &LoopConfig::default()).map_err(|e| e.to_string())?;
        ensure!(policy.calls() == 6, "run {run}: {} assistant turns", policy.calls());
        ensure!(r.trajectory.turns.len() == 6, "run {run}: {} turns recorded", r.trajectory.turns.len());
        ensure!(r.status == RolloutStatus::Truncated, "run {run}: status {:?}", r.status);
        ensure!(corpus.search_calls() == 5, "run {run}: {} searches executed", corpus.search_calls());
        let last = r.trajectory.turns[5].observation.as_ref().map(|o| o.information_text.as_str());
        ensure!(last == Some(BUDGET_EXHAUSTED), "run {run}: last observation {last:?}");
        renders.push(serialize(&r.trajectory));
    }
    ensure!(renders.windows(2).all(|w| w[0] == w[1]), "reruns differ");

    let policy = ScriptedPolicy::always(
        Script::new([search]).on_force("<think>Answering with what I have.</think><answer>B</answer>"),
    );
    let (_, env) = loop_env();
    let r = run_trajectory(&q, &policy, &env, &LoopConfig::default()).map_err(|e| e.to_string())?;
    ensure!(
        r.trajectory.final_answer.as_deref() == Some("B") && r.trajectory.turns.len() == 6,
        "forced answer: {:?} after {} turns",
        r.trajectory.final_answer,
        r.trajectory.turns.len()
    );
    Ok("halts at 6 turns; forced answer B; 3 identical reruns".into())
}

fn fixture_groups() -> Result<Vec<CandidateGroup>, String> {
    let world = FixtureBundle::builtin().world(Default::default());
    let text = std::fs::read_to_string(core_fixture("questions.jsonl")).map_err(|e| e.to_string())?;
    let questions: Vec<SourceQuestion> = parse_jsonl(&text, Path::new("questions.jsonl")).map_err(|e| e.to_string())?;
    let group = GroupConfig {
        jobs: 4,
        ..GroupConfig::default()
    };
    questions
        .iter()
        .map(|q| run_group(q, world.policy.as_ref(), world.env.as_ref(), &LoopConfig::default(), &group).map_err(|e| e.to_string()))
        .collect()
}

fn curation_trace() -> Outcome {
    // Hand-traced from the fixture's rollout plans.
    const SFT: [&str; 7] = ["q05", "q06", "q09", "q13", "q15", "q16", "q19"];
    const RL: [&str; 8] = ["q09", "q10", "q11", "q12", "q14", "q16", "q19", "q20"];
    let groups = fixture_groups()?;
    let world = FixtureBundle::builtin().world(Default::default());
    let cfg = CurationConfig::default();
    let endpoints = SftEndpoints {
        synthesizer: world.policy.as_ref(),
        env: world.env.as_ref(),
        judge: world.judge.as_ref(),
        rewriter: world.rewriter.as_ref(),
    };
    let run = run_sft_pipeline(&groups, &endpoints, &cfg, &LoopConfig::default()).map_err(|e| e.to_string())?;
    ensure!(run.kept_ids() == SFT, "SFT set {:?}", run.kept_ids());
    let rl: Vec<String> = difficulty_filter(&groups, &cfg).into_iter().map(|q| q.id).collect();
    ensure!(rl == RL, "RL set {rl:?}");
    let half: Vec<&str> = groups.iter().filter(|g| g.correct == 4).map(|g| g.question.id.as_str()).collect();
    ensure!(!half.is_empty() && half.iter().all(|id| !rl.iter().any(|r| r == id)), "4/8 groups {half:?} leaked into RL");
    Ok(format!("SFT {} and RL {} ids match the oracle", SFT.len(), RL.len()))
}

fn dataset_stats() -> Outcome {
    let text = std::fs::read_to_string(core_fixture("stats_dataset.jsonl")).map_err(|e| e.to_string())?;
    let data: Vec<Trajectory> = parse_jsonl(&text, Path::new("stats_dataset.jsonl")).map_err(|e| e.to_string())?;
    let refs: Vec<&Trajectory> = data.iter().collect();
    let s = stats_for_trajectories(&refs).map_err(|e| e.to_string())?;
    let searches = s.search_calls.ok_or("no search samples")?;
    ensure!((s.conversation_turns.mean - 1.60).abs() <= STATS_TOL, "mean turns {}", s.conversation_turns.mean);
    ensure!(s.conversation_turns.max == 6.0, "max turns {}", s.conversation_turns.max);
    ensure!((searches.mean - 1.27).abs() <= STATS_TOL, "mean searches {}", searches.mean);
    Ok(format!(
        "turns {:.2} (max {}), searches {:.2}",
        s.conversation_turns.mean, s.conversation_turns.max, searches.mean
    ))
}

fn triage_shape() -> Outcome {
    let cal = TriageCalibration {
        items: 1000,
        failures: 705,
        triggered: 202,
        corrected: 58,
    };
    let (baseline, search) = triage_fixture(cal, 9);
    let failures: Vec<&EvalResult> = baseline.iter().filter(|r| !r.correct).collect();
    let after = |id: &str| search.iter().find(|r| r.item_id == id);
    let triggered = failures.iter().filter(|r| after(&r.item_id).is_some_and(|s| s.search_count > 0)).count();
    let corrected = failures
        .iter()
        .filter(|r| after(&r.item_id).is_some_and(|s| s.search_count > 0 && s.correct))
        .count();
    ensure!((failures.len(), triggered, corrected) == (705, 202, 58), "fixture tally {:?}", (failures.len(), triggered, corrected));
    let t = triage_report(&baseline, &search).map_err(|e| e.to_string())?;
    ensure!(
        (t.failures, t.search_triggered, t.corrected_by_search) == (failures.len() as u64, triggered as u64, corrected as u64),
        "report {t:?}"
    );
    let trigger = t.trigger_rate.map(|p| p.percent());
    let fixed = t.corrected_rate.map(|p| p.percent());
    // Independent: 202/705 = 28.65%, 58/705 = 8.23%.
    let want_trigger = format!("{:.1}%", 100.0 * triggered as f64 / failures.len() as f64);
    let want_fixed = format!("{:.1}%", 100.0 * corrected as f64 / failures.len() as f64);
    ensure!(trigger.as_deref() == Some(want_trigger.as_str()), "trigger {trigger:?} vs {want_trigger}");
    ensure!(fixed.as_deref() == Some(want_fixed.as_str()), "corrected {fixed:?} vs {want_fixed}");
    ensure!(want_trigger == "28.7%" && want_fixed == "8.2%", "{want_trigger} / {want_fixed}");
    Ok(format!("705 failures, 202 triggered ({want_trigger}), 58 corrected ({want_fixed})"))
}

fn hermetic_e2e() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let run = |args: &[&str]| -> Result<String, String> {
        let out = Command::new(env!("CARGO_BIN_EXE_lras"))
            .args(args)
            .current_dir(d)
            .env_clear()
            .env("PATH", std::env::var_os("PATH").unwrap_or_default())
            // Anything that tried the network would hit a dead proxy.
            .env("HTTP_PROXY", "http://127.0.0.1:9")
            .env("HTTPS_PROXY", "http://127.0.0.1:9")
            .env("ALL_PROXY", "http://127.0.0.1:9")
            .output()
            .map_err(|e| e.to_string())?;
        let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
        ensure!(
            out.status.success(),
            "lras {args:?} exited {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        );
        Ok(stdout)
    };
    let questions = core_fixture("questions.jsonl");
    let bench = core_fixture("benchmark.jsonl");
    let q = questions.to_str().ok_or("non-utf8 path")?;
    let b = bench.to_str().ok_or("non-utf8 path")?;
    run(&["--fixture", "--jobs", "4", "rollout", q, "-o", "groups.jsonl"])?;
    run(&["--fixture", "curate-sft", "groups.jsonl", "-o", "sft.jsonl", "--samples-out", "samples.jsonl"])?;
    run(&["--fixture", "curate-rl", "groups.jsonl", "-o", "rl.jsonl"])?;
    run(&["--fixture", "--jobs", "4", "eval", b, "-o", "results.jsonl"])?;
    let stats = run(&["--fixture", "stats", "samples.jsonl"])?;
    let lines = |f: &str| std::fs::read_to_string(d.join(f)).map(|s| s.lines().count()).unwrap_or(0);
    let counts = (lines("groups.jsonl"), lines("sft.jsonl"), lines("rl.jsonl"), lines("results.jsonl"));
    ensure!(counts == (20, 7, 8, 20), "record counts {counts:?}");
    ensure!(stats.contains("Conversation Turns"), "stats output: {stats}");
    Ok(format!("groups/sft/rl/results = {counts:?}"))
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 10] = [
        ("four-case reward table", BUDGET_REWARD, four_case_table),
        ("weighted reward", BUDGET_REWARD, weighted_table),
        ("advantage normalization", BUDGET_ADVANTAGE, advantage_properties),
        ("clipped surrogate", BUDGET_SURROGATE, surrogate_oracle),
        ("grammar round-trip and violations", BUDGET_GRAMMAR, grammar),
        ("loop budget", BUDGET_LOOP, loop_budget),
        ("curation trace", BUDGET_CURATION, curation_trace),
        ("dataset statistics", BUDGET_STATS, dataset_stats),
        ("triage shape", BUDGET_TRIAGE, triage_shape),
        ("hermetic end-to-end", BUDGET_E2E, hermetic_e2e),
    ];
    let mut failed = Vec::new();
    for (name, budget, f) in criteria {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if took <= budget => Ok(detail),
            Ok(detail) => Err(format!("{detail}; over budget {budget:?}")),
            Err(e) => Err(e),
        };
        match &outcome {
            Ok(detail) => println!("PASS  {name:<36} {took:>10.2?}  {detail}"),
            Err(why) => {
                println!("FAIL  {name:<36} {took:>10.2?}  {why}");
                failed.push(name);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", criteria.len());
    } else {
        println!("acceptance: failed {failed:?}");
        std::process::exit(1);
    }
}
