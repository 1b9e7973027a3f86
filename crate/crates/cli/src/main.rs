//! `lras`: rollouts, curation, evaluation, statistics, reward checks and the
//! review service from one binary.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.

mod config;
mod stack;

use std::fmt;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use lras_core::agent::{run_group, CandidateGroup, GroupConfig, LoopConfig};
use lras_core::curation::{
    compute_stats, difficulty_filter, export_rl, export_sft, run_sft_pipeline, stats_for_trajectories, Disposition,
    HumanGate, SftEndpoints, SynthesizedSample,
};
use lras_core::eval::{behavior_report, run_benchmark, triage_report, EvalConfig, EvalResult};
use lras_core::prompts::{PromptLevel, PromptStyle};
use lras_core::question::{BenchmarkItem, QuestionKind, SourceQuestion};
use lras_core::records::{read_jsonl, to_jsonl};
use lras_core::review::ReviewQueue;
use lras_core::reward::{score_trajectory, RewardMode, RewardParams, DEFAULT_LAMBDA_F};
use lras_core::trajectory::{from_tag_stream, Trajectory};
use serde::{Deserialize, Serialize};

use crate::config::{AppConfig, Mode};
use crate::stack::{Needs, Stack};

/// Bad invocation or configuration; exits with 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "lras", version, about = "Agentic legal search: rollouts, curation and evaluation")]
struct Cli {
    /// TOML config file [default: ./lras.toml when present].
    #[arg(long, global = true, env = "LRAS_CONFIG")]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    /// Log verbosity (-v, -vv).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

/// Settings that override the config file. Each also reads its `LRAS_*`
/// variable, so flag > environment > file.
#[derive(Debug, Args)]
struct Overrides {
    /// Run against live endpoints.
    #[arg(long, global = true, conflicts_with = "fixture")]
    live: bool,
    /// Run offline against a fixture bundle (the built-in one when no path).
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "", require_equals = true, value_name = "BUNDLE")]
    fixture: Option<String>,
    #[arg(long, global = true, env = "LRAS_MODE", value_enum, hide_possible_values = true)]
    mode: Option<Mode>,
    /// Parallel workers.
    #[arg(long, global = true, env = "LRAS_JOBS")]
    jobs: Option<usize>,
    #[arg(long, global = true, env = "LRAS_MAX_TURNS")]
    max_turns: Option<usize>,
    #[arg(long, global = true, env = "LRAS_TOP_K")]
    top_k: Option<usize>,
    /// Search and fetch timeout in seconds.
    #[arg(long, global = true, env = "LRAS_SEARCH_TIMEOUT")]
    search_timeout: Option<u64>,
    #[arg(long, global = true, env = "LRAS_REVIEW_DIR")]
    review_dir: Option<PathBuf>,
    #[arg(long, global = true, env = "LRAS_SAMPLER_URL")]
    sampler_url: Option<String>,
    #[arg(long, global = true, env = "LRAS_SAMPLER_MODEL")]
    sampler_model: Option<String>,
    #[arg(long, global = true, env = "LRAS_JUDGE_URL")]
    judge_url: Option<String>,
    #[arg(long, global = true, env = "LRAS_JUDGE_MODEL")]
    judge_model: Option<String>,
    #[arg(long, global = true, env = "LRAS_REWRITER_URL")]
    rewriter_url: Option<String>,
    #[arg(long, global = true, env = "LRAS_REWRITER_MODEL")]
    rewriter_model: Option<String>,
    #[arg(long, global = true, env = "LRAS_SUMMARIZER_URL")]
    summarizer_url: Option<String>,
    #[arg(long, global = true, env = "LRAS_SUMMARIZER_MODEL")]
    summarizer_model: Option<String>,
}

impl Overrides {
    fn apply(&self, cfg: &mut AppConfig) {
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if self.live {
            cfg.mode = Mode::Live;
        }
        if let Some(path) = &self.fixture {
            cfg.mode = Mode::Fixture;
            cfg.fixture = (!path.is_empty()).then(|| PathBuf::from(path));
        }
        let set = |slot: &mut String, v: &Option<String>| {
            if let Some(v) = v {
                *slot = v.clone();
            }
        };
        let e = &mut cfg.endpoints;
        set(&mut e.sampler.base_url, &self.sampler_url);
        set(&mut e.sampler.model, &self.sampler_model);
        set(&mut e.judge.base_url, &self.judge_url);
        set(&mut e.judge.model, &self.judge_model);
        set(&mut e.rewriter.base_url, &self.rewriter_url);
        set(&mut e.rewriter.model, &self.rewriter_model);
        set(&mut e.summarizer.base_url, &self.summarizer_url);
        set(&mut e.summarizer.model, &self.summarizer_model);
        if let Some(j) = self.jobs {
            cfg.jobs = j;
        }
        if let Some(t) = self.max_turns {
            cfg.loop_settings.max_turns = t;
        }
        if let Some(k) = self.top_k {
            cfg.search.top_k = k;
        }
        if let Some(t) = self.search_timeout {
            cfg.search.timeout_secs = t;
        }
        if let Some(d) = &self.review_dir {
            cfg.data.review_dir = d.clone();
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample candidate groups for each question.
    Rollout {
        /// JSONL of questions ({id, text, gold_answer, ...}).
        questions: PathBuf,
        /// Rollouts per question [default: curation.n_candidates].
        #[arg(long)]
        n: Option<usize>,
        /// System prompt level (L1, L2, L3).
        #[arg(long)]
        level: Option<PromptLevel>,
        /// Rollout i decodes with seed base + i.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Build the SFT set from candidate groups.
    CurateSft {
        /// JSONL of candidate groups from `rollout`.
        groups: PathBuf,
        /// SFT conversation records.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Rewritten samples, e.g. for review or `stats`.
        #[arg(long)]
        samples_out: Option<PathBuf>,
        #[arg(long, value_enum)]
        gate: Option<GateArg>,
        /// Put the rewritten samples in the review queue.
        #[arg(long)]
        enqueue: bool,
    },
    /// Turn synthesized samples (e.g. the review export) into SFT records.
    ExportSft {
        samples: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        gate: Option<GateArg>,
    },
    /// Select RL prompts from candidate groups.
    CurateRl {
        groups: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run a benchmark and report accuracy by search count.
    Eval {
        /// JSONL of benchmark items.
        benchmark: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Results of a no-search run over the same items, for failure triage.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Prompt the policy sees: a system prompt level or the RL prefix.
        #[arg(long, value_enum, default_value_t = PromptArg::L3)]
        prompt: PromptArg,
    },
    /// Dataset statistics for samples or trajectories.
    Stats { dataset: PathBuf },
    /// Score tag-stream traces and compare against expected rewards.
    RewardCheck {
        traces: PathBuf,
        #[arg(long, default_value_t = DEFAULT_LAMBDA_F)]
        lambda: f64,
        /// Reward scheme.
        #[arg(long, value_enum, default_value_t = ModeArg::Case)]
        reward: ModeArg,
    },
    /// Serve the review queue over HTTP.
    Serve {
        #[arg(long, env = "LRAS_ADDR", default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum GateArg {
    Strict,
    Permissive,
}

impl From<GateArg> for HumanGate {
    fn from(g: GateArg) -> Self {
        match g {
            GateArg::Strict => HumanGate::Strict,
            GateArg::Permissive => HumanGate::Permissive,
        }
    }
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum PromptArg {
    L1,
    L2,
    L3,
    Rl,
}

impl From<PromptArg> for PromptStyle {
    fn from(p: PromptArg) -> Self {
        match p {
            PromptArg::L1 => PromptStyle::System(PromptLevel::L1),
            PromptArg::L2 => PromptStyle::System(PromptLevel::L2),
            PromptArg::L3 => PromptStyle::System(PromptLevel::L3),
            PromptArg::Rl => PromptStyle::Rl,
        }
    }
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum ModeArg {
    Case,
    Weighted,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_env("LRAS_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

/// Records go to `--out` when given (report on stdout), otherwise to stdout
/// (report on stderr).
struct Output {
    path: Option<PathBuf>,
}

impl Output {
    fn records<T: Serialize>(&self, items: &[T]) -> anyhow::Result<()> {
        let text = to_jsonl(items);
        match &self.path {
            Some(p) => {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                }
                std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))
            }
            None => std::io::stdout()
                .lock()
                .write_all(text.as_bytes())
                .context("writing records to stdout"),
        }
    }

    fn report(&self, text: impl fmt::Display) {
        match self.path {
            Some(_) => println!("{text}"),
            None => eprintln!("{text}"),
        }
    }
}

fn read<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    Ok(read_jsonl(path)?)
}

fn loop_config(cfg: &AppConfig, style: PromptStyle) -> LoopConfig {
    LoopConfig {
        max_assistant_turns: cfg.loop_settings.max_turns,
        force_answer_on_budget: cfg.loop_settings.force_answer,
        prompt: style,
        ..LoopConfig::default()
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = AppConfig::load(cli.config.as_deref())?;
    cli.overrides.apply(&mut cfg);
    cfg.validate()?;
    tracing::info!(mode = ?cfg.mode, jobs = cfg.jobs, "configuration loaded");

    match cli.command {
        Command::Rollout {
            questions,
            n,
            level,
            seed,
            out,
        } => rollout(&cfg, &questions, n, level, seed, Output { path: out }),
        Command::CurateSft {
            groups,
            out,
            samples_out,
            gate,
            enqueue,
        } => {
            if let Some(g) = gate {
                cfg.curation.human_gate = g.into();
            }
            curate_sft(&cfg, &groups, Output { path: out }, samples_out.as_deref(), enqueue)
        }
        Command::ExportSft { samples, out, gate } => {
            let gate = gate.map_or(cfg.curation.human_gate, Into::into);
            let samples: Vec<SynthesizedSample> = read(&samples)?;
            let records = export_sft(&samples, gate);
            let out = Output { path: out };
            out.records(&records)?;
            out.report(format!("exported {} of {} samples ({gate:?} gate)", records.len(), samples.len()));
            Ok(())
        }
        Command::CurateRl { groups, out } => {
            let groups: Vec<CandidateGroup> = read(&groups)?;
            let kept = difficulty_filter(&groups, &cfg.curation_config());
            let out = Output { path: out };
            if kept.is_empty() {
                eprintln!("warning: no question passed the difficulty filter; writing an empty RL set");
            }
            out.records(&export_rl(&kept))?;
            out.report(format!(
                "RL prompts: {} of {} questions (pass rate < {})",
                kept.len(),
                groups.len(),
                cfg.curation.rl_retain_threshold
            ));
            Ok(())
        }
        Command::Eval {
            benchmark,
            out,
            baseline,
            prompt,
        } => eval(&cfg, &benchmark, prompt.into(), Output { path: out }, baseline.as_deref()),
        Command::Stats { dataset } => stats(&dataset),
        Command::RewardCheck { traces, lambda, reward } => reward_check(&traces, lambda, reward),
        Command::Serve { addr } => serve(&cfg, addr),
    }
}

fn rollout(
    cfg: &AppConfig,
    questions: &Path,
    n: Option<usize>,
    level: Option<PromptLevel>,
    seed: u64,
    out: Output,
) -> anyhow::Result<()> {
    let questions: Vec<SourceQuestion> = read(questions)?;
    if questions.is_empty() {
        return Err(UsageError("question file is empty".into()).into());
    }
    let n = n.unwrap_or(cfg.curation.n_candidates);
    if n == 0 {
        return Err(UsageError("--n must be >= 1".into()).into());
    }
    let stack = Stack::build(
        cfg,
        Needs {
            sampler: true,
            search: true,
            ..Needs::default()
        },
    )?;
    let level = level.unwrap_or(cfg.curation.prompt_level);
    let lc = loop_config(cfg, PromptStyle::System(level));
    let group = GroupConfig {
        n,
        sampling: cfg.endpoints.sampler.profile.params(),
        base_seed: seed,
        jobs: cfg.jobs,
    };
    let mut groups = Vec::with_capacity(questions.len());
    let mut failed = 0;
    for q in &questions {
        match run_group(q, stack.sampler.as_ref(), stack.env.as_ref(), &lc, &group) {
            Ok(g) => groups.push(g),
            Err(e) => {
                failed += 1;
                tracing::error!(question = %q.id, error = %e, "group failed");
            }
        }
    }
    out.records(&groups)?;
    let mut report = String::new();
    for g in &groups {
        report.push_str(&format!("{}\t{}/{}\tpass_rate {:.3}\n", g.question.id, g.correct, g.n(), g.pass_rate));
    }
    report.push_str(&format!("{} groups, {failed} failed", groups.len()));
    out.report(report);
    if groups.is_empty() {
        bail!("every group failed");
    }
    Ok(())
}

fn curate_sft(
    cfg: &AppConfig,
    groups: &Path,
    out: Output,
    samples_out: Option<&Path>,
    enqueue: bool,
) -> anyhow::Result<()> {
    let groups: Vec<CandidateGroup> = read(groups)?;
    let stack = Stack::build(
        cfg,
        Needs {
            sampler: true,
            search: true,
            judge: true,
            rewriter: true,
        },
    )?;
    let curation = cfg.curation_config();
    let endpoints = SftEndpoints {
        synthesizer: stack.sampler.as_ref(),
        env: stack.env.as_ref(),
        judge: stack.judge.as_ref(),
        rewriter: stack.rewriter.as_ref(),
    };
    // Synthesis decodes greedily with the data-construction prompt.
    let lc = loop_config(cfg, PromptStyle::System(curation.prompt_level));
    let run = run_sft_pipeline(&groups, &endpoints, &curation, &lc)?;

    if let Some(p) = samples_out {
        Output { path: Some(p.to_path_buf()) }.records(&run.samples)?;
    }
    if enqueue && !run.samples.is_empty() {
        let queue = ReviewQueue::open(&cfg.data.review_dir)?;
        let r = queue.enqueue_batch(run.samples.clone())?;
        out.report(format!(
            "review queue {}: {} enqueued, {} already present",
            cfg.data.review_dir.display(),
            r.enqueued,
            r.already_present
        ));
    }
    let records = export_sft(&run.samples, curation.human_gate);
    if run.samples.is_empty() {
        eprintln!("warning: no sample survived curation; writing an empty SFT set");
    } else if records.is_empty() && curation.human_gate == HumanGate::Strict {
        eprintln!("note: strict gate; samples need review acceptance before export");
    }
    out.records(&records)?;

    let mut report = String::new();
    for (id, d) in &run.dispositions {
        let what = match d {
            Disposition::PerfectPassRate => "dropped: every candidate correct".to_string(),
            Disposition::SynthesisFailed { error } => format!("dropped: synthesis failed ({error})"),
            Disposition::Incorrect => "dropped: incorrect answer".to_string(),
            Disposition::Unsupported { index } => format!("dropped: information block {index} unsupported"),
            Disposition::Kept { rewrite_applied } => {
                format!("kept{}", if *rewrite_applied { "" } else { " (rewrite fallback)" })
            }
        };
        report.push_str(&format!("{id}\t{what}\n"));
    }
    report.push_str(&format!(
        "{} of {} questions kept, {} SFT records\n",
        run.samples.len(),
        groups.len(),
        records.len()
    ));
    if let Ok(stats) = compute_stats(&run.samples) {
        report.push_str(&stats.to_string());
    }
    out.report(report.trim_end());
    Ok(())
}

fn eval(
    cfg: &AppConfig,
    benchmark: &Path,
    prompt: PromptStyle,
    out: Output,
    baseline: Option<&Path>,
) -> anyhow::Result<()> {
    let items: Vec<BenchmarkItem> = read(benchmark)?;
    if items.is_empty() {
        return Err(UsageError(format!("benchmark file {} has no items", benchmark.display())).into());
    }
    let stack = Stack::build(
        cfg,
        Needs {
            sampler: true,
            search: true,
            ..Needs::default()
        },
    )?;
    let ec = EvalConfig {
        loop_config: LoopConfig {
            decoding: EvalConfig::default().loop_config.decoding,
            ..loop_config(cfg, prompt)
        },
        jobs: cfg.jobs,
    };
    let results = run_benchmark(&items, stack.sampler.as_ref(), stack.env.as_ref(), &ec);
    out.records(&results)?;
    let mut report = behavior_report(&results)?.to_string();
    if let Some(b) = baseline {
        let base: Vec<EvalResult> = read(b)?;
        report.push('\n');
        report.push_str(&triage_report(&base, &results)?.to_string());
    }
    out.report(report);
    Ok(())
}

/// One line of a `stats` input file.
#[derive(Deserialize)]
#[serde(untagged)]
enum StatsRecord {
    Sample(Box<SynthesizedSample>),
    Trajectory(Box<Trajectory>),
}

fn stats(path: &Path) -> anyhow::Result<()> {
    let records: Vec<StatsRecord> = read(path)?;
    if records.is_empty() {
        return Err(UsageError(format!("{} has no records", path.display())).into());
    }
    let trajectories: Vec<&Trajectory> = records
        .iter()
        .map(|r| match r {
            StatsRecord::Sample(s) => &s.trajectory,
            StatsRecord::Trajectory(t) => t.as_ref(),
        })
        .collect();
    println!("{}", stats_for_trajectories(&trajectories)?);
    Ok(())
}

#[derive(Deserialize)]
struct TraceCase {
    id: String,
    question: String,
    gold: String,
    trace: String,
    #[serde(default)]
    kind: Option<QuestionKind>,
    #[serde(default)]
    expected: Option<f64>,
}

fn reward_check(path: &Path, lambda: f64, mode: ModeArg) -> anyhow::Result<()> {
    let cases: Vec<TraceCase> = read(path)?;
    let params = RewardParams {
        lambda_f: lambda,
        mode: match mode {
            ModeArg::Case => RewardMode::CaseBased,
            ModeArg::Weighted => RewardMode::Weighted,
        },
        ..RewardParams::default()
    };
    params.validate().map_err(|e| UsageError(e.to_string()))?;
    let mut mismatches = 0;
    for c in &cases {
        let mut q = SourceQuestion::new(&c.id, &c.question, &c.gold);
        if let Some(k) = c.kind {
            q = q.with_kind(k);
        }
        let t = from_tag_stream(&c.id, &c.question, &c.trace);
        let r = score_trajectory(&t, &q, &params)?;
        let verdict = match c.expected {
            Some(e) if (e - r.value).abs() > 1e-12 => {
                mismatches += 1;
                format!("\tMISMATCH expected {e}")
            }
            Some(_) => "\tok".to_string(),
            None => String::new(),
        };
        println!(
            "{}\t{}\taccuracy={} format={}{verdict}",
            c.id, r.value, r.accuracy, r.format_ok
        );
    }
    if mismatches > 0 {
        bail!("{mismatches} of {} traces scored differently than expected", cases.len());
    }
    Ok(())
}

fn serve(cfg: &AppConfig, addr: SocketAddr) -> anyhow::Result<()> {
    let queue = Arc::new(ReviewQueue::open(&cfg.data.review_dir)?);
    let stats = queue.stats();
    eprintln!(
        "review queue {}: {} items ({} pending); listening on http://{addr}",
        cfg.data.review_dir.display(),
        stats.total,
        stats.pending
    );
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .worker_threads(cfg.jobs.max(2))
        .build()
        .context("starting runtime")?;
    rt.block_on(lras_review_server::serve(addr, queue))
        .with_context(|| format!("serving on {addr}"))
}
