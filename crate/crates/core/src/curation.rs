//! SFT and RL dataset curation.
//!
//! SFT path: drop questions the sampler always gets right, synthesize one
//! trajectory per remaining question under a system prompt level, keep it
//! only if the answer matches gold and every observation is judged useful,
//! then rewrite it for fluency under strict conservation checks.
//!
//! RL path: keep questions whose pass rate is strictly below one half.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::agent::{
    par_map, run_trajectory, CandidateGroup, EnvironmentPort, LoopConfig, LoopError,
    RolloutStatus,
};
use crate::endpoint::{ChatMessage, DecodingParams, PolicyEndpoint, RetryPolicy};
use crate::prompts::{
    render_equivalence, render_relevance, render_rewrite_multi, render_rewrite_single,
    rl_user_content, PromptLevel, PromptStyle,
};
use crate::question::{QuestionKind, SourceQuestion};
use crate::trajectory::{
    parse_step, serialize, serialize_turn, split_steps, validate_with, ActionKind, ParseError,
    Trajectory, Turn, ValidationProfile, ViolationCode, DEFAULT_MAX_TURNS,
};

pub use crate::question::Origin;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineStage {
    Raw,
    Correct,
    Supported,
    Rewritten,
    HumanVerified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Yes,
    No,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub info_index: usize,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesizedSample {
    pub sample_id: String,
    pub question: SourceQuestion,
    pub trajectory: Trajectory,
    pub prompt_level: PromptLevel,
    #[serde(default)]
    pub judge_verdicts: Vec<JudgeVerdict>,
    #[serde(default)]
    pub rewrite_applied: bool,
    pub pipeline_stage: PipelineStage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rollout_status: Option<RolloutStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CurationError {
    #[error("sample {sample_id}: stage cannot move from {from:?} back to {to:?}")]
    StageRegression {
        sample_id: String,
        from: PipelineStage,
        to: PipelineStage,
    },
    #[error("sample {sample_id} is at stage {actual:?}, {expected:?} required")]
    WrongStage {
        sample_id: String,
        expected: PipelineStage,
        actual: PipelineStage,
    },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid curation config: {0}")]
    Config(String),
    #[error(transparent)]
    Loop(#[from] LoopError),
}

impl SynthesizedSample {
    pub fn sample_id_for(question_id: &str, level: PromptLevel) -> String {
        format!("{question_id}#{level}")
    }

    /// Moves the sample forward. Staying put is allowed, going back is not.
    pub fn advance(&mut self, to: PipelineStage) -> Result<(), CurationError> {
        if to < self.pipeline_stage {
            return Err(CurationError::StageRegression {
                sample_id: self.sample_id.clone(),
                from: self.pipeline_stage,
                to,
            });
        }
        self.pipeline_stage = to;
        Ok(())
    }

    fn require(&self, expected: PipelineStage) -> Result<(), CurationError> {
        if self.pipeline_stage == expected {
            Ok(())
        } else {
            Err(CurationError::WrongStage {
                sample_id: self.sample_id.clone(),
                expected,
                actual: self.pipeline_stage,
            })
        }
    }

    /// Profile the trajectory is checked under.
    pub fn validation_profile(&self) -> ValidationProfile {
        match self.prompt_level {
            PromptLevel::L1 => ValidationProfile::Relaxed,
            _ => ValidationProfile::Strict,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpenQaMode {
    /// Normalized string equality, as for choice questions.
    #[default]
    Exact,
    /// Ask the judge endpoint whether the answers are equivalent.
    Judge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumanGate {
    /// Export only samples accepted in human review.
    Strict,
    /// Export rewritten samples without review.
    #[default]
    Permissive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationConfig {
    pub n_candidates: usize,
    /// Groups at or above this pass rate are dropped from SFT synthesis.
    pub sft_discard_threshold: f64,
    /// Questions strictly below this pass rate go to the RL set.
    pub rl_retain_threshold: f64,
    pub prompt_level: PromptLevel,
    pub open_qa: OpenQaMode,
    pub human_gate: HumanGate,
    pub judge_decoding: DecodingParams,
    pub rewrite_decoding: DecodingParams,
    /// Transport-level retries for judge and rewriter calls.
    pub endpoint_retry: RetryPolicy,
    pub jobs: usize,
}

impl Default for CurationConfig {
    fn default() -> Self {
        Self {
            n_candidates: 8,
            sft_discard_threshold: 1.0,
            rl_retain_threshold: 0.5,
            prompt_level: PromptLevel::L3,
            open_qa: OpenQaMode::Exact,
            human_gate: HumanGate::Permissive,
            judge_decoding: DecodingParams::evaluation(),
            rewrite_decoding: DecodingParams::evaluation(),
            endpoint_retry: RetryPolicy::default(),
            jobs: 1,
        }
    }
}

impl CurationConfig {
    pub fn validate(&self) -> Result<(), CurationError> {
        for (name, v) in [
            ("sft_discard_threshold", self.sft_discard_threshold),
            ("rl_retain_threshold", self.rl_retain_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(CurationError::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.n_candidates == 0 {
            return Err(CurationError::Config("n_candidates must be >= 1".into()));
        }
        Ok(())
    }
}

/// Keeps groups whose pass rate is below the discard threshold (perfect
/// groups go; groups nobody solved stay).
pub fn uncertainty_filter(groups: &[CandidateGroup], config: &CurationConfig) -> Vec<CandidateGroup> {
    groups
        .iter()
        .filter(|g| !g.rollouts.is_empty() && g.pass_rate < config.sft_discard_threshold)
        .cloned()
        .collect()
}

/// Questions whose pass rate is strictly below the RL threshold.
pub fn difficulty_filter(groups: &[CandidateGroup], config: &CurationConfig) -> Vec<SourceQuestion> {
    groups
        .iter()
        .filter(|g| !g.rollouts.is_empty() && g.pass_rate < config.rl_retain_threshold)
        .map(|g| g.question.clone())
        .collect()
}

/// One trajectory for `question` under the level's system prompt. Rollout
/// failures come back as raw samples carrying the error.
pub fn synthesize(
    question: &SourceQuestion,
    level: PromptLevel,
    policy: &dyn PolicyEndpoint,
    env: &dyn EnvironmentPort,
    loop_config: &LoopConfig,
) -> SynthesizedSample {
    let cfg = LoopConfig {
        prompt: PromptStyle::System(level),
        ..loop_config.clone()
    };
    let sample_id = SynthesizedSample::sample_id_for(&question.id, level);
    let base = |trajectory, status, error| SynthesizedSample {
        sample_id: sample_id.clone(),
        question: question.clone(),
        trajectory,
        prompt_level: level,
        judge_verdicts: Vec::new(),
        rewrite_applied: false,
        pipeline_stage: PipelineStage::Raw,
        rollout_status: status,
        error,
    };
    match run_trajectory(question, policy, env, &cfg) {
        Ok(r) => base(r.trajectory, Some(r.status), r.error),
        Err(e) => base(
            Trajectory::new(&question.id, &question.text),
            None,
            Some(e.to_string()),
        ),
    }
}

/// Strict YES/NO parse: surrounding whitespace and a trailing full stop are
/// tolerated, nothing else.
pub fn parse_verdict(reply: &str) -> Option<Verdict> {
    let t = reply.trim().trim_end_matches(['.', '。']).trim();
    match t.to_ascii_uppercase().as_str() {
        "YES" => Some(Verdict::Yes),
        "NO" => Some(Verdict::No),
        _ => None,
    }
}

/// Asks the judge, re-asking once on an unparseable reply. Ambiguity and
/// endpoint failure both count as NO.
pub fn judge_verdict(judge: &dyn PolicyEndpoint, prompt: &str, config: &CurationConfig) -> Verdict {
    let messages = [ChatMessage::user(prompt)];
    for attempt in 0..2 {
        match config
            .endpoint_retry
            .run(|| judge.generate(&messages, &config.judge_decoding))
        {
            Ok(reply) => match parse_verdict(&reply) {
                Some(v) => return v,
                None => tracing::warn!(attempt, reply = %reply.trim(), "judge reply is neither YES nor NO"),
            },
            Err(e) => {
                tracing::warn!(error = %e, "judge call failed; treating as NO");
                return Verdict::No;
            }
        }
    }
    Verdict::No
}

fn answer_matches(
    sample: &SynthesizedSample,
    judge: Option<&dyn PolicyEndpoint>,
    config: &CurationConfig,
) -> bool {
    let q = &sample.question;
    match (q.kind, config.open_qa, judge, sample.trajectory.final_answer.as_deref()) {
        (QuestionKind::OpenQa, OpenQaMode::Judge, Some(judge), Some(pred)) => {
            let prompt = render_equivalence(&q.text, &q.gold_answer, pred);
            judge_verdict(judge, &prompt, config) == Verdict::Yes
        }
        (_, _, _, pred) => q.is_correct(pred),
    }
}

/// Keeps raw samples with a completed trajectory whose answer matches gold.
/// `judge` is consulted only for open QA in judge mode.
pub fn correctness_filter(
    samples: Vec<SynthesizedSample>,
    judge: Option<&dyn PolicyEndpoint>,
    config: &CurationConfig,
) -> Vec<SynthesizedSample> {
    samples
        .into_iter()
        .filter(|s| s.pipeline_stage == PipelineStage::Raw && s.trajectory.is_complete())
        .filter(|s| answer_matches(s, judge, config))
        .map(|mut s| {
            s.pipeline_stage = PipelineStage::Correct;
            s
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum DiscardReason {
    UnsupportedInfo { index: usize },
    WrongStage { stage: PipelineStage },
}

impl fmt::Display for DiscardReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiscardReason::UnsupportedInfo { index } => write!(f, "unsupported_info[{index}]"),
            DiscardReason::WrongStage { stage } => write!(f, "wrong_stage[{stage:?}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discard {
    pub sample_id: String,
    pub reason: DiscardReason,
    #[serde(default)]
    pub judge_verdicts: Vec<JudgeVerdict>,
}

/// Judges every information block against the question and gold answer and
/// stops at the first NO.
pub fn support_filter(
    mut sample: SynthesizedSample,
    judge: &dyn PolicyEndpoint,
    config: &CurationConfig,
) -> Result<SynthesizedSample, Discard> {
    if sample.pipeline_stage != PipelineStage::Correct {
        return Err(Discard {
            sample_id: sample.sample_id,
            reason: DiscardReason::WrongStage {
                stage: sample.pipeline_stage,
            },
            judge_verdicts: sample.judge_verdicts,
        });
    }
    let blocks: Vec<String> = sample
        .trajectory
        .observations()
        .map(|o| o.information_text.clone())
        .collect();
    let mut verdicts = Vec::with_capacity(blocks.len());
    for (info_index, info) in blocks.iter().enumerate() {
        let prompt = render_relevance(&sample.question.text, &sample.question.gold_answer, info);
        let verdict = judge_verdict(judge, &prompt, config);
        verdicts.push(JudgeVerdict { info_index, verdict });
        if verdict == Verdict::No {
            return Err(Discard {
                sample_id: sample.sample_id,
                reason: DiscardReason::UnsupportedInfo { index: info_index },
                judge_verdicts: verdicts,
            });
        }
    }
    sample.judge_verdicts = verdicts;
    sample.pipeline_stage = PipelineStage::Supported;
    Ok(sample)
}

/// Why a rewrite was not accepted.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RewriteRejection {
    #[error("rewriter call failed: {0}")]
    Endpoint(String),
    #[error("rewrite does not parse: {0}")]
    Parse(ParseError),
    #[error("rewrite changed the answer from {before:?} to {after:?}")]
    AnswerChanged {
        before: Option<String>,
        after: Option<String>,
    },
    #[error("rewrite has {got} searches, expected {expected}")]
    SearchCount { expected: usize, got: usize },
    #[error("rewrite violates the format: {0:?}")]
    Format(Vec<ViolationCode>),
}

/// Evidence listing handed to the multi-turn rewrite prompt.
pub fn evidence_text(trajectory: &Trajectory) -> String {
    trajectory
        .turns
        .iter()
        .filter_map(|t| Some((t.search()?, t.observation.as_ref()?)))
        .enumerate()
        .map(|(i, (search, obs))| {
            format!(
                "[Search {n}] {q}\n[Information {n}] {info}",
                n = i + 1,
                q = search.text,
                info = obs.information_text
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn rebuild(original: &Trajectory, output: &str) -> Result<Trajectory, RewriteRejection> {
    let mut observations = original.observations().cloned();
    let mut rebuilt = Trajectory::new(&original.question_id, &original.question_text);
    rebuilt.metadata = original.metadata.clone();
    for step in split_steps(output) {
        let parsed = parse_step(step).map_err(RewriteRejection::Parse)?;
        let mut turn = Turn::new(parsed.actions);
        turn.stray_text = parsed.stray_text;
        if turn.search().is_some() {
            turn.observation = observations.next();
        }
        rebuilt.turns.push(turn);
    }
    rebuilt.refresh_final_answer();
    Ok(rebuilt)
}

fn check_rewrite(
    original: &Trajectory,
    rebuilt: &Trajectory,
    profile: ValidationProfile,
) -> Result<(), RewriteRejection> {
    let expected = original.search_count();
    let got = rebuilt.search_count();
    if got != expected {
        return Err(RewriteRejection::SearchCount { expected, got });
    }
    if rebuilt.final_answer != original.final_answer {
        return Err(RewriteRejection::AnswerChanged {
            before: original.final_answer.clone(),
            after: rebuilt.final_answer.clone(),
        });
    }
    let max_turns = DEFAULT_MAX_TURNS.max(original.turns.len());
    let report = validate_with(rebuilt, profile, max_turns);
    if !report.valid {
        return Err(RewriteRejection::Format(
            report.violations.iter().map(|v| v.code).collect(),
        ));
    }
    Ok(())
}

/// One rewrite attempt: prompt, parse, conservation checks.
pub fn rewrite_once(
    sample: &SynthesizedSample,
    rewriter: &dyn PolicyEndpoint,
    config: &CurationConfig,
) -> Result<Trajectory, RewriteRejection> {
    let t = &sample.trajectory;
    let answer = t.final_answer.clone().unwrap_or_default();
    let searches = t.search_count();
    let prompt = if searches == 0 {
        render_rewrite_single(&answer, &t.question_text, &serialize(t))
    } else {
        render_rewrite_multi(searches, &answer, &t.question_text, &evidence_text(t))
    };
    let messages = [ChatMessage::user(prompt)];
    let output = config
        .endpoint_retry
        .run(|| rewriter.generate(&messages, &config.rewrite_decoding))
        .map_err(|e| RewriteRejection::Endpoint(e.to_string()))?;
    let rebuilt = rebuild(t, &output)?;
    check_rewrite(t, &rebuilt, sample.validation_profile())?;
    Ok(rebuilt)
}

/// Metadata key set when a rewrite was abandoned.
pub const REWRITE_FALLBACK_KEY: &str = "rewrite_fallback";

/// Rewrites a supported sample, retrying once; if both attempts fail the
/// checks the original trajectory is kept. Either way the sample reaches
/// the rewritten stage.
pub fn rewrite(
    mut sample: SynthesizedSample,
    rewriter: &dyn PolicyEndpoint,
    config: &CurationConfig,
) -> Result<SynthesizedSample, CurationError> {
    sample.require(PipelineStage::Supported)?;
    let mut last = None;
    for attempt in 0..2 {
        match rewrite_once(&sample, rewriter, config) {
            Ok(t) => {
                sample.trajectory = t;
                sample.rewrite_applied = true;
                sample.advance(PipelineStage::Rewritten)?;
                return Ok(sample);
            }
            Err(e) => {
                tracing::warn!(sample = %sample.sample_id, attempt, error = %e, "rewrite rejected");
                last = Some(e);
            }
        }
    }
    if let Some(e) = last {
        sample
            .trajectory
            .metadata
            .insert(REWRITE_FALLBACK_KEY.into(), e.to_string());
    }
    sample.rewrite_applied = false;
    sample.advance(PipelineStage::Rewritten)?;
    Ok(sample)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanMax {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl MeanMax {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let sum: f64 = values.iter().sum();
        Some(Self {
            mean: sum / values.len() as f64,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

/// Dataset statistics in the layout of the SFT statistics table.
///
/// * turns: assistant turns per sample;
/// * search calls and query lengths: over samples with at least one search;
/// * total response: characters of the final assistant turn;
/// * think: characters of all think content in a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_samples: usize,
    pub n_search_samples: usize,
    pub conversation_turns: MeanMax,
    pub search_calls: Option<MeanMax>,
    pub total_response_chars: MeanMax,
    pub think_chars: MeanMax,
    pub search_query_chars: Option<MeanMax>,
}

pub fn compute_stats(dataset: &[SynthesizedSample]) -> Result<DatasetStats, CurationError> {
    let trajectories: Vec<&Trajectory> = dataset.iter().map(|s| &s.trajectory).collect();
    stats_for_trajectories(&trajectories)
}

pub fn stats_for_trajectories(dataset: &[&Trajectory]) -> Result<DatasetStats, CurationError> {
    if dataset.is_empty() {
        return Err(CurationError::EmptyDataset);
    }
    let chars = |s: &str| s.chars().count() as f64;
    let mut turns = Vec::new();
    let mut searches = Vec::new();
    let mut response = Vec::new();
    let mut think = Vec::new();
    let mut queries = Vec::new();
    for t in dataset {
        turns.push(t.turns.len() as f64);
        let n = t.search_count();
        if n > 0 {
            searches.push(n as f64);
            queries.extend(t.search_queries().map(chars));
        }
        response.push(t.turns.last().map_or(0.0, |last| chars(&serialize_turn(last))));
        think.push(
            t.turns
                .iter()
                .flat_map(|turn| &turn.actions)
                .filter(|a| a.kind == ActionKind::Think)
                .map(|a| chars(&a.text))
                .sum(),
        );
    }
    Ok(DatasetStats {
        n_samples: dataset.len(),
        n_search_samples: searches.len(),
        conversation_turns: MeanMax::of(&turns).expect("non-empty"),
        search_calls: MeanMax::of(&searches),
        total_response_chars: MeanMax::of(&response).expect("non-empty"),
        think_chars: MeanMax::of(&think).expect("non-empty"),
        search_query_chars: MeanMax::of(&queries),
    })
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let row = |f: &mut fmt::Formatter<'_>, name: &str, m: Option<MeanMax>| match m {
            Some(m) => writeln!(f, "  {name:<30}{:>10.2}{:>10}", m.mean, m.max),
            None => writeln!(f, "  {name:<30}{:>10}{:>10}", "-", "-"),
        };
        writeln!(f, "{:<32}{:>10}{:>10}", "Metric", "Mean", "Max")?;
        writeln!(f, "Interaction Dynamics")?;
        row(f, "Conversation Turns", Some(self.conversation_turns))?;
        row(f, "Search Calls (per question)", self.search_calls)?;
        writeln!(f, "Length Characteristics (Chars)")?;
        row(f, "Total Response", Some(self.total_response_chars))?;
        row(f, "Reasoning Process (<think>)", Some(self.think_chars))?;
        row(f, "Search Query", self.search_query_chars)?;
        write!(
            f,
            "samples: {} ({} with search)",
            self.n_samples, self.n_search_samples
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub id: String,
    pub prompt_level: PromptLevel,
    pub messages: Vec<ChatMessage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RlRecord {
    pub id: String,
    pub prompt: String,
    pub gold: String,
    pub kind: QuestionKind,
}

/// Conversation form: system prompt, question, then assistant text split
/// at each observation, which is sent back as a user message.
pub fn sft_conversation(sample: &SynthesizedSample) -> Vec<ChatMessage> {
    let mut messages = vec![
        ChatMessage::system(sample.prompt_level.system_prompt()),
        ChatMessage::user(&sample.question.text),
    ];
    let mut pending = String::new();
    for turn in &sample.trajectory.turns {
        pending.push_str(&serialize_turn(turn));
        if let Some(obs) = &turn.observation {
            messages.push(ChatMessage::assistant(std::mem::take(&mut pending)));
            messages.push(crate::agent::observation_message(obs));
        }
    }
    if !pending.is_empty() {
        messages.push(ChatMessage::assistant(pending));
    }
    messages
}

/// Why a sample may not be exported, if it may not.
pub fn sft_ineligibility(sample: &SynthesizedSample, gate: HumanGate) -> Option<String> {
    let needed = match gate {
        HumanGate::Strict => PipelineStage::HumanVerified,
        HumanGate::Permissive => PipelineStage::Rewritten,
    };
    if sample.pipeline_stage < needed {
        return Some(format!("stage {:?} below {needed:?}", sample.pipeline_stage));
    }
    if !sample.question.is_correct(sample.trajectory.final_answer.as_deref())
        && sample.question.kind != QuestionKind::OpenQa
    {
        return Some("answer does not match gold".into());
    }
    let blocks = sample.trajectory.observations().count();
    if sample.judge_verdicts.len() != blocks
        || sample.judge_verdicts.iter().any(|v| v.verdict != Verdict::Yes)
    {
        return Some("not every information block was judged YES".into());
    }
    let report = validate_with(
        &sample.trajectory,
        sample.validation_profile(),
        DEFAULT_MAX_TURNS.max(sample.trajectory.turns.len()),
    );
    if !report.valid {
        return Some("format is invalid".into());
    }
    None
}

pub fn export_sft(dataset: &[SynthesizedSample], gate: HumanGate) -> Vec<SftRecord> {
    dataset
        .iter()
        .filter(|s| match sft_ineligibility(s, gate) {
            None => true,
            Some(why) => {
                tracing::warn!(sample = %s.sample_id, %why, "not exported");
                false
            }
        })
        .map(|s| SftRecord {
            id: s.sample_id.clone(),
            prompt_level: s.prompt_level,
            messages: sft_conversation(s),
        })
        .collect()
}

pub fn export_rl(questions: &[SourceQuestion]) -> Vec<RlRecord> {
    questions
        .iter()
        .map(|q| RlRecord {
            id: q.id.clone(),
            prompt: rl_user_content(&q.text),
            gold: q.gold_answer.clone(),
            kind: q.kind,
        })
        .collect()
}

/// What became of one question on the SFT path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "disposition", rename_all = "snake_case")]
pub enum Disposition {
    PerfectPassRate,
    SynthesisFailed { error: String },
    Incorrect,
    Unsupported { index: usize },
    Kept { rewrite_applied: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftRun {
    pub dispositions: Vec<(String, Disposition)>,
    /// Samples that reached the rewritten stage, in input order.
    pub samples: Vec<SynthesizedSample>,
}

impl SftRun {
    pub fn kept_ids(&self) -> Vec<&str> {
        self.samples.iter().map(|s| s.question.id.as_str()).collect()
    }
}

/// Endpoints the SFT path talks to.
pub struct SftEndpoints<'a> {
    pub synthesizer: &'a dyn PolicyEndpoint,
    pub env: &'a dyn EnvironmentPort,
    pub judge: &'a dyn PolicyEndpoint,
    pub rewriter: &'a dyn PolicyEndpoint,
}

/// Runs the SFT path over candidate groups: uncertainty filter, synthesis,
/// correctness, support, rewrite.
pub fn run_sft_pipeline(
    groups: &[CandidateGroup],
    endpoints: &SftEndpoints<'_>,
    config: &CurationConfig,
    loop_config: &LoopConfig,
) -> Result<SftRun, CurationError> {
    config.validate()?;
    loop_config.validate()?;
    let retained = uncertainty_filter(groups, config);
    type Outcome = Result<(Disposition, Option<SynthesizedSample>), CurationError>;
    let per_question = par_map(retained.len(), config.jobs, |i| -> Outcome {
        let q = &retained[i].question;
        let raw = synthesize(q, config.prompt_level, endpoints.synthesizer, endpoints.env, loop_config);
        if raw.rollout_status.map_or(true, RolloutStatus::is_error) {
            let error = raw.error.clone().unwrap_or_else(|| "rollout failed".into());
            return Ok((Disposition::SynthesisFailed { error }, None));
        }
        let Some(correct) = correctness_filter(vec![raw], Some(endpoints.judge), config).pop() else {
            return Ok((Disposition::Incorrect, None));
        };
        let supported = match support_filter(correct, endpoints.judge, config) {
            Ok(s) => s,
            Err(Discard {
                reason: DiscardReason::UnsupportedInfo { index },
                ..
            }) => return Ok((Disposition::Unsupported { index }, None)),
            Err(d) => unreachable!("sample came straight from the correctness filter: {d:?}"),
        };
        let rewritten = rewrite(supported, endpoints.rewriter, config)?;
        Ok((
            Disposition::Kept {
                rewrite_applied: rewritten.rewrite_applied,
            },
            Some(rewritten),
        ))
    });

    let mut run = SftRun {
        dispositions: Vec::new(),
        samples: Vec::new(),
    };
    for g in groups {
        if !retained.iter().any(|r| r.question.id == g.question.id) {
            run.dispositions
                .push((g.question.id.clone(), Disposition::PerfectPassRate));
        }
    }
    for (group, outcome) in retained.iter().zip(per_question) {
        let (disposition, sample) = outcome?;
        run.dispositions.push((group.question.id.clone(), disposition));
        run.samples.extend(sample);
    }
    let order = |id: &str| groups.iter().position(|g| g.question.id == id);
    run.dispositions.sort_by_key(|(id, _)| order(id));
    Ok(run)
}
