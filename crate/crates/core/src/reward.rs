//! Rewards, group-normalized advantages and the clipped GRPO surrogate.
//!
//! Nothing here trains anything. The surrogate is a scalar cross-check for
//! external trainers that log per-token log-probabilities.

use serde::{Deserialize, Serialize};

use crate::question::SourceQuestion;
use crate::trajectory::{is_option_label, normalize_answer, validate_format, FormatReport, Trajectory};

pub const DEFAULT_LAMBDA_F: f64 = 0.2;
pub const STD_GUARD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    #[default]
    CaseBased,
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub acc: f64,
    #[serde(rename = "struct")]
    pub structure: f64,
    pub format: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            acc: 1.0,
            structure: 0.2,
            format: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    pub lambda_f: f64,
    pub mode: RewardMode,
    pub weights: RewardWeights,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            lambda_f: DEFAULT_LAMBDA_F,
            mode: RewardMode::CaseBased,
            weights: RewardWeights::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RewardError {
    #[error("lambda_f must lie in [0, 0.5], got {0}")]
    LambdaOutOfRange(f64),
    #[error("reward params are in {actual:?} mode, {expected:?} required")]
    WrongMode {
        expected: RewardMode,
        actual: RewardMode,
    },
    #[error("advantage group needs at least 2 rewards, got {0}")]
    GroupTooSmall(usize),
    #[error("non-finite value in input")]
    NonFinite,
    #[error("no samples")]
    NoSamples,
    #[error("sample {index}: {what} has {got} tokens, expected {expected}")]
    LengthMismatch {
        index: usize,
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("sample {0}: ref_logprobs required when kl_coefficient > 0")]
    MissingReference(usize),
    #[error("clip_epsilon must be > 0, got {0}")]
    BadEpsilon(f64),
    #[error("kl_coefficient must be >= 0, got {0}")]
    BadKl(f64),
}

impl RewardParams {
    pub fn validate(&self) -> Result<(), RewardError> {
        if !(0.0..=0.5).contains(&self.lambda_f) {
            return Err(RewardError::LambdaOutOfRange(self.lambda_f));
        }
        Ok(())
    }

    pub fn weighted() -> Self {
        Self {
            mode: RewardMode::Weighted,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub accuracy: bool,
    pub format_ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub struct_ok: Option<bool>,
    pub value: f64,
}

/// Four-case reward: correct answers score 1 or 1−λ_f depending on format,
/// incorrect ones λ_f or 0.
pub fn composite_reward(
    pred: Option<&str>,
    gold: &str,
    fmt: &FormatReport,
    params: &RewardParams,
) -> Result<RewardBreakdown, RewardError> {
    if params.mode != RewardMode::CaseBased {
        return Err(RewardError::WrongMode {
            expected: RewardMode::CaseBased,
            actual: params.mode,
        });
    }
    params.validate()?;
    let accuracy = pred.is_some_and(|p| p == gold);
    Ok(case_reward(accuracy, fmt.valid, params.lambda_f))
}

/// The four-case table on bare flags.
pub fn case_reward(accuracy: bool, format_ok: bool, lambda_f: f64) -> RewardBreakdown {
    let value = match (accuracy, format_ok) {
        (true, true) => 1.0,
        (true, false) => 1.0 - lambda_f,
        (false, true) => lambda_f,
        (false, false) => 0.0,
    };
    RewardBreakdown {
        accuracy,
        format_ok,
        struct_ok: None,
        value,
    }
}

const MICRO: f64 = 1_000_000.0;

/// `acc·w_acc + struct·w_struct + fmt·w_fmt`, summed in integer millionths
/// so that e.g. 0.2 + 0.1 comes out as exactly 0.3.
pub fn weighted_reward(
    acc: bool,
    struct_ok: bool,
    fmt_ok: bool,
    params: &RewardParams,
) -> Result<RewardBreakdown, RewardError> {
    if params.mode != RewardMode::Weighted {
        return Err(RewardError::WrongMode {
            expected: RewardMode::Weighted,
            actual: params.mode,
        });
    }
    let w = params.weights;
    if ![w.acc, w.structure, w.format].iter().all(|x| x.is_finite()) {
        return Err(RewardError::NonFinite);
    }
    let micro = |on: bool, weight: f64| if on { (weight * MICRO).round() as i64 } else { 0 };
    let total = micro(acc, w.acc) + micro(struct_ok, w.structure) + micro(fmt_ok, w.format);
    Ok(RewardBreakdown {
        accuracy: acc,
        format_ok: fmt_ok,
        struct_ok: Some(struct_ok),
        value: total as f64 / MICRO,
    })
}

/// Scores a finished trajectory against its question under either mode.
/// The structure flag is set when a final answer exists and, for choice
/// questions, is a valid option label.
pub fn score_trajectory(
    trajectory: &Trajectory,
    question: &SourceQuestion,
    params: &RewardParams,
) -> Result<RewardBreakdown, RewardError> {
    let predicted = trajectory.answer_text().map(normalize_answer);
    let fmt = validate_format(trajectory);
    let gold = normalize_answer(&question.gold_answer);
    match params.mode {
        RewardMode::CaseBased => composite_reward(predicted.as_deref(), &gold, &fmt, params),
        RewardMode::Weighted => {
            let struct_ok = predicted.as_deref().is_some_and(|p| {
                if question.kind.is_choice() {
                    is_option_label(p)
                } else {
                    !p.is_empty()
                }
            });
            weighted_reward(question.is_correct(predicted.as_deref()), struct_ok, fmt.valid, params)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageGroup {
    pub rewards: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub advantages: Vec<f64>,
}

/// `A_k = (R_k − mean) / std` with population std; all zeros when
/// `std <= STD_GUARD`.
pub fn group_advantages(rewards: &[f64]) -> Result<AdvantageGroup, RewardError> {
    if rewards.len() < 2 {
        return Err(RewardError::GroupTooSmall(rewards.len()));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(RewardError::NonFinite);
    }
    let k = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / k;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / k;
    let std = var.sqrt();
    let advantages = if std <= STD_GUARD {
        vec![0.0; rewards.len()]
    } else {
        rewards.iter().map(|r| (r - mean) / std).collect()
    };
    Ok(AdvantageGroup {
        rewards: rewards.to_vec(),
        mean,
        std,
        advantages,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioMode {
    /// ρ = exp(Σ new − Σ old) over the whole response.
    #[default]
    Sequence,
    /// Clipped term averaged over per-token ratios.
    Token,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrpoParams {
    pub clip_epsilon: f64,
    pub kl_coefficient: f64,
    pub kl_in_reward: bool,
    #[serde(default)]
    pub ratio_mode: RatioMode,
}

impl Default for GrpoParams {
    fn default() -> Self {
        Self {
            clip_epsilon: 0.2,
            kl_coefficient: 0.001,
            kl_in_reward: false,
            ratio_mode: RatioMode::Sequence,
        }
    }
}

impl GrpoParams {
    /// Configuration-level check, including `clip_epsilon < 1`.
    /// [`grpo_objective`] itself accepts any positive epsilon.
    pub fn validate(&self) -> Result<(), RewardError> {
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(RewardError::BadEpsilon(self.clip_epsilon));
        }
        if !(self.kl_coefficient >= 0.0) {
            return Err(RewardError::BadKl(self.kl_coefficient));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoSample {
    pub new_logprobs: Vec<f64>,
    pub old_logprobs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_logprobs: Option<Vec<f64>>,
    pub advantage: f64,
}

impl GrpoSample {
    /// Sequence-level probability ratio.
    pub fn ratio(&self) -> f64 {
        let new: f64 = self.new_logprobs.iter().sum();
        let old: f64 = self.old_logprobs.iter().sum();
        (new - old).exp()
    }
}

/// `min(ρ·A, clip(ρ, 1−ε, 1+ε)·A)` for one sample.
pub fn clipped_term(rho: f64, adv: f64, eps: f64) -> f64 {
    let clipped = rho.clamp(1.0 - eps, 1.0 + eps);
    (rho * adv).min(clipped * adv)
}

/// The surrogate over precomputed `(ρ, A)` pairs, without a KL term.
pub fn surrogate_from_ratios(pairs: &[(f64, f64)], eps: f64) -> Result<f64, RewardError> {
    if pairs.is_empty() {
        return Err(RewardError::NoSamples);
    }
    if !(eps > 0.0) {
        return Err(RewardError::BadEpsilon(eps));
    }
    Ok(pairs.iter().map(|&(rho, adv)| clipped_term(rho, adv, eps)).sum::<f64>() / pairs.len() as f64)
}

/// Per-token k3 estimate of KL(new ‖ ref): `exp(r − n) − (r − n) − 1`,
/// averaged over tokens.
pub fn kl_estimate(new_logprobs: &[f64], ref_logprobs: &[f64]) -> f64 {
    if new_logprobs.is_empty() {
        return 0.0;
    }
    let total: f64 = new_logprobs
        .iter()
        .zip(ref_logprobs)
        .map(|(n, r)| {
            let d = r - n;
            d.exp() - d - 1.0
        })
        .sum();
    total / new_logprobs.len() as f64
}

/// `(1/K) Σ min(ρ_k A_k, clip(ρ_k, 1−ε, 1+ε) A_k) − λ·KL̂`.
///
/// The KL term is the mean over samples of [`kl_estimate`]; it is skipped
/// when `kl_coefficient` is 0 or `kl_in_reward` is set (the penalty then
/// lives in the reward instead).
pub fn grpo_objective(samples: &[GrpoSample], params: &GrpoParams) -> Result<f64, RewardError> {
    if samples.is_empty() {
        return Err(RewardError::NoSamples);
    }
    if !(params.clip_epsilon > 0.0) {
        return Err(RewardError::BadEpsilon(params.clip_epsilon));
    }
    if !(params.kl_coefficient >= 0.0) {
        return Err(RewardError::BadKl(params.kl_coefficient));
    }
    let use_kl = params.kl_coefficient > 0.0 && !params.kl_in_reward;
    for (index, s) in samples.iter().enumerate() {
        let expected = s.new_logprobs.len();
        if s.old_logprobs.len() != expected {
            return Err(RewardError::LengthMismatch {
                index,
                what: "old_logprobs",
                got: s.old_logprobs.len(),
                expected,
            });
        }
        match &s.ref_logprobs {
            Some(r) if r.len() != expected => {
                return Err(RewardError::LengthMismatch {
                    index,
                    what: "ref_logprobs",
                    got: r.len(),
                    expected,
                })
            }
            None if use_kl => return Err(RewardError::MissingReference(index)),
            _ => {}
        }
    }

    let eps = params.clip_epsilon;
    let surrogate: f64 = samples
        .iter()
        .map(|s| match params.ratio_mode {
            RatioMode::Sequence => clipped_term(s.ratio(), s.advantage, eps),
            RatioMode::Token => {
                if s.new_logprobs.is_empty() {
                    return clipped_term(1.0, s.advantage, eps);
                }
                let sum: f64 = s
                    .new_logprobs
                    .iter()
                    .zip(&s.old_logprobs)
                    .map(|(n, o)| clipped_term((n - o).exp(), s.advantage, eps))
                    .sum();
                sum / s.new_logprobs.len() as f64
            }
        })
        .sum::<f64>()
        / samples.len() as f64;

    let kl = if use_kl {
        samples
            .iter()
            .map(|s| kl_estimate(&s.new_logprobs, s.ref_logprobs.as_deref().unwrap_or_default()))
            .sum::<f64>()
            / samples.len() as f64
    } else {
        0.0
    };
    Ok(surrogate - params.kl_coefficient * kl)
}
