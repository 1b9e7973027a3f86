//! The think / search / answer rollout loop.
//!
//! One rollout is strictly sequential: generate a step, parse it, run the
//! search it asks for, inject the observation as a user message and go
//! again, until an answer arrives or the turn budget is spent. Groups of
//! rollouts for the same question run in parallel.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::endpoint::{ChatMessage, DecodingParams, PolicyEndpoint, RetryPolicy};
use crate::prompts::{rl_user_content, PromptStyle};
use crate::question::SourceQuestion;
use crate::trajectory::{
    parse_step, serialize_turn, Observation, StepDefect, Trajectory, Turn, DEFAULT_MAX_TURNS,
    MODEL_KEY, PROMPT_LEVEL_KEY,
};

/// Appended before the last allowed generation when force-answer is on.
pub const FORCE_ANSWER_NUDGE: &str = "You have reached the maximum number of search rounds. \
Do not search again. Provide your final answer now inside <answer></answer>.";

/// Sent after a step that thought but neither searched nor answered.
pub const CONTINUE_NUDGE: &str =
    "Continue. After <think>, output exactly one <search>...</search> or one <answer>...</answer>.";

/// Prefix of the corrective message sent after an unparseable step.
pub const FORMAT_NUDGE: &str = "Your previous output did not follow the required tag format";

/// Observation injected when the policy searches on its final allowed turn.
pub const BUDGET_EXHAUSTED: &str =
    "Search budget exhausted. No further searches will be executed for this question.";

/// Port to whatever produces observations for search queries.
pub trait EnvironmentPort: Send + Sync {
    fn observe(&self, query: &str, original_question: &str) -> Result<Observation, EnvError>;
}

impl<T: EnvironmentPort + ?Sized> EnvironmentPort for &T {
    fn observe(&self, query: &str, original_question: &str) -> Result<Observation, EnvError> {
        (**self).observe(query, original_question)
    }
}

impl<T: EnvironmentPort + ?Sized> EnvironmentPort for std::sync::Arc<T> {
    fn observe(&self, query: &str, original_question: &str) -> Result<Observation, EnvError> {
        (**self).observe(query, original_question)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("search environment failed: {0}")]
    Failed(String),
    #[error("replay diverged: search #{requested} requested but only {recorded} observations were recorded")]
    Divergence { requested: usize, recorded: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub max_assistant_turns: usize,
    pub prompt: PromptStyle,
    pub force_answer_on_budget: bool,
    #[serde(with = "crate::endpoint::secs_f64")]
    pub per_request_timeout: Duration,
    pub decoding: DecodingParams,
    pub retry: RetryPolicy,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            max_assistant_turns: DEFAULT_MAX_TURNS,
            prompt: PromptStyle::default(),
            force_answer_on_budget: true,
            per_request_timeout: Duration::from_secs(600),
            decoding: DecodingParams::evaluation(),
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LoopError {
    #[error("invalid loop config: {0}")]
    Config(String),
    #[error("question text is empty")]
    EmptyQuestion,
    #[error("group size must be at least 1")]
    EmptyGroup,
    #[error("all {n} rollouts for question {question_id} failed; first error: {first_error}")]
    GroupFailed {
        question_id: String,
        n: usize,
        first_error: String,
    },
    #[error(transparent)]
    Divergence(EnvError),
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), LoopError> {
        if self.max_assistant_turns == 0 {
            return Err(LoopError::Config("max_assistant_turns must be >= 1".into()));
        }
        self.decoding.validate().map_err(LoopError::Config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RolloutStatus {
    Completed,
    Truncated,
    PolicyError,
    EnvError,
}

impl RolloutStatus {
    /// Policy and environment failures; truncation is a normal outcome.
    pub fn is_error(self) -> bool {
        matches!(self, RolloutStatus::PolicyError | RolloutStatus::EnvError)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutResult {
    pub trajectory: Trajectory,
    pub status: RolloutStatus,
    pub wall_time_secs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateGroup {
    pub question: SourceQuestion,
    pub rollouts: Vec<RolloutResult>,
    pub correct: usize,
    pub pass_rate: f64,
}

impl CandidateGroup {
    pub fn n(&self) -> usize {
        self.rollouts.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupConfig {
    pub n: usize,
    pub sampling: DecodingParams,
    /// Rollout `i` decodes with seed `base_seed + i`.
    pub base_seed: u64,
    pub jobs: usize,
}

impl Default for GroupConfig {
    fn default() -> Self {
        Self {
            n: 8,
            sampling: DecodingParams::sampling(),
            base_seed: 0,
            jobs: 1,
        }
    }
}

/// Initial message list for a question under the given prompt style.
pub fn initial_context(question: &str, style: PromptStyle) -> Vec<ChatMessage> {
    match style {
        PromptStyle::System(level) => vec![
            ChatMessage::system(level.system_prompt()),
            ChatMessage::user(question),
        ],
        PromptStyle::Rl => vec![ChatMessage::user(rl_user_content(question))],
    }
}

/// User message carrying an observation back to the policy.
pub fn observation_message(obs: &Observation) -> ChatMessage {
    ChatMessage::user(format!("<information>{}</information>", obs.information_text))
}

pub fn run_trajectory(
    question: &SourceQuestion,
    policy: &dyn PolicyEndpoint,
    env: &dyn EnvironmentPort,
    config: &LoopConfig,
) -> Result<RolloutResult, LoopError> {
    config.validate()?;
    if question.text.trim().is_empty() {
        return Err(LoopError::EmptyQuestion);
    }
    let mut metadata = BTreeMap::new();
    metadata.insert(PROMPT_LEVEL_KEY.to_string(), config.prompt.label().to_string());
    metadata.insert(MODEL_KEY.to_string(), policy.model_id().to_string());
    Ok(run_loop(
        &question.id,
        &question.text,
        metadata,
        policy,
        env,
        config,
    ))
}

fn run_loop(
    question_id: &str,
    question_text: &str,
    metadata: BTreeMap<String, String>,
    policy: &dyn PolicyEndpoint,
    env: &dyn EnvironmentPort,
    config: &LoopConfig,
) -> RolloutResult {
    let started = Instant::now();
    let mut trajectory = Trajectory::new(question_id, question_text);
    trajectory.metadata = metadata;
    let mut messages = initial_context(question_text, config.prompt);
    let mut status = RolloutStatus::Truncated;
    let mut error = None;

    for turn_idx in 0..config.max_assistant_turns {
        let final_turn = turn_idx + 1 == config.max_assistant_turns;
        if final_turn && config.force_answer_on_budget && turn_idx > 0 {
            messages.push(ChatMessage::user(FORCE_ANSWER_NUDGE));
        }

        let raw = match config.retry.run(|| policy.generate(&messages, &config.decoding)) {
            Ok(raw) => raw,
            Err(e) => {
                status = RolloutStatus::PolicyError;
                error = Some(e.to_string());
                break;
            }
        };
        messages.push(ChatMessage::assistant(raw.clone()));

        let step = match parse_step(&raw) {
            Ok(step) => step,
            Err(e) => {
                let note = format!("{FORMAT_NUDGE} ({e}). Use only <think>, <search> and <answer>.");
                let mut turn = Turn::default();
                turn.defect = Some(StepDefect { error: e, raw });
                trajectory.turns.push(turn);
                messages.push(ChatMessage::user(note));
                continue;
            }
        };
        let mut turn = Turn::new(step.actions);
        turn.stray_text = step.stray_text;

        if turn.answer().is_some() {
            trajectory.turns.push(turn);
            status = RolloutStatus::Completed;
            break;
        }

        let Some(query) = turn.search().map(|a| a.text.clone()) else {
            trajectory.turns.push(turn);
            messages.push(ChatMessage::user(CONTINUE_NUDGE));
            continue;
        };

        let obs = if final_turn && config.force_answer_on_budget {
            Observation::environment(BUDGET_EXHAUSTED, Vec::new())
        } else {
            match env.observe(&query, question_text) {
                Ok(obs) => obs,
                Err(e) => {
                    trajectory.turns.push(turn);
                    status = RolloutStatus::EnvError;
                    error = Some(e.to_string());
                    break;
                }
            }
        };
        messages.push(observation_message(&obs));
        trajectory.turns.push(turn.with_observation(obs));
    }

    trajectory.refresh_final_answer();
    if status != RolloutStatus::Completed {
        // Only a completed rollout carries a usable answer.
        trajectory.final_answer = None;
    }
    RolloutResult {
        trajectory,
        status,
        wall_time_secs: started.elapsed().as_secs_f64(),
        error,
    }
}

/// Runs `n` independent rollouts with sampling decoding and scores them.
pub fn run_group(
    question: &SourceQuestion,
    policy: &dyn PolicyEndpoint,
    env: &dyn EnvironmentPort,
    config: &LoopConfig,
    group: &GroupConfig,
) -> Result<CandidateGroup, LoopError> {
    if group.n == 0 {
        return Err(LoopError::EmptyGroup);
    }
    config.validate()?;
    let rollouts = par_map(group.n, group.jobs, |i| {
        let cfg = LoopConfig {
            decoding: group.sampling.clone().with_seed(group.base_seed + i as u64),
            ..config.clone()
        };
        run_trajectory(question, policy, env, &cfg)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    if rollouts.iter().all(|r| r.status.is_error()) {
        return Err(LoopError::GroupFailed {
            question_id: question.id.clone(),
            n: group.n,
            first_error: rollouts[0].error.clone().unwrap_or_default(),
        });
    }
    let correct = rollouts
        .iter()
        .filter(|r| question.is_correct(r.trajectory.final_answer.as_deref()))
        .count();
    Ok(CandidateGroup {
        question: question.clone(),
        pass_rate: correct as f64 / group.n as f64,
        correct,
        rollouts,
    })
}

/// Observations replayed from a recording, in order.
struct RecordedEnvironment {
    observations: Vec<Observation>,
    cursor: AtomicUsize,
    diverged: AtomicBool,
}

impl EnvironmentPort for RecordedEnvironment {
    fn observe(&self, _query: &str, _question: &str) -> Result<Observation, EnvError> {
        let i = self.cursor.fetch_add(1, Ordering::SeqCst);
        self.observations.get(i).cloned().ok_or_else(|| {
            self.diverged.store(true, Ordering::SeqCst);
            EnvError::Divergence {
                requested: i + 1,
                recorded: self.observations.len(),
            }
        })
    }
}

/// Re-runs the loop with `policy`, feeding the recorded observations back in
/// order instead of searching. The recording's metadata is kept.
pub fn replay(
    trajectory: &Trajectory,
    policy: &dyn PolicyEndpoint,
    config: &LoopConfig,
) -> Result<RolloutResult, LoopError> {
    config.validate()?;
    let env = RecordedEnvironment {
        observations: trajectory.observations().cloned().collect(),
        cursor: AtomicUsize::new(0),
        diverged: AtomicBool::new(false),
    };
    let result = run_loop(
        &trajectory.question_id,
        &trajectory.question_text,
        trajectory.metadata.clone(),
        policy,
        &env,
        config,
    );
    if env.diverged.load(Ordering::SeqCst) {
        let requested = env.cursor.load(Ordering::SeqCst);
        return Err(LoopError::Divergence(EnvError::Divergence {
            requested,
            recorded: env.observations.len(),
        }));
    }
    Ok(result)
}

/// Policy that plays back the assistant steps of a recorded trajectory,
/// indexed by how many assistant messages the context already holds.
pub struct RecordingPolicy {
    steps: Vec<String>,
    model: String,
}

impl RecordingPolicy {
    pub fn new(trajectory: &Trajectory) -> Self {
        Self {
            steps: trajectory.turns.iter().map(serialize_turn).collect(),
            model: trajectory
                .metadata
                .get(MODEL_KEY)
                .cloned()
                .unwrap_or_else(|| "recording".into()),
        }
    }
}

impl PolicyEndpoint for RecordingPolicy {
    fn generate(
        &self,
        messages: &[ChatMessage],
        _decoding: &DecodingParams,
    ) -> Result<String, crate::endpoint::EndpointError> {
        let done = messages
            .iter()
            .filter(|m| m.role == crate::endpoint::MessageRole::Assistant)
            .count();
        self.steps.get(done).cloned().ok_or_else(|| {
            crate::endpoint::EndpointError::InvalidResponse(format!(
                "recording has only {} steps",
                self.steps.len()
            ))
        })
    }

    fn model_id(&self) -> &str {
        &self.model
    }
}

/// Maps `f` over `0..n` on at most `jobs` threads, keeping index order.
pub fn par_map<R: Send>(n: usize, jobs: usize, f: impl Fn(usize) -> R + Sync) -> Vec<R> {
    let jobs = jobs.clamp(1, n.max(1));
    if jobs == 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = f(i);
                slots.lock().expect("result slots poisoned")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|r| r.expect("every index is filled"))
        .collect()
}
