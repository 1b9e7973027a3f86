//! Browser bindings for the reward, advantage, surrogate and trajectory
//! checks. Everything crosses the boundary as numbers, slices or JSON text.
//!
//! Build with `wasm-pack build crates/demo --target web --out-dir www/pkg`
//! and serve `crates/demo/www/`.

use lras_core::reward::{self, RewardParams};
use lras_core::trajectory::{
    from_tag_stream, serialize, validate_with, FormatReport, ValidationProfile, DEFAULT_MAX_TURNS,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Four-case reward for the given flags.
#[wasm_bindgen]
pub fn case_reward(accuracy: bool, format_ok: bool, lambda_f: f64) -> Result<f64, String> {
    let params = RewardParams {
        lambda_f,
        ..RewardParams::default()
    };
    params.validate().map_err(|e| e.to_string())?;
    Ok(reward::case_reward(accuracy, format_ok, lambda_f).value)
}

/// Weighted reward with the default weights (1.0 / 0.2 / 0.1).
#[wasm_bindgen]
pub fn weighted_reward(accuracy: bool, struct_ok: bool, format_ok: bool) -> Result<f64, String> {
    reward::weighted_reward(accuracy, struct_ok, format_ok, &RewardParams::weighted())
        .map(|b| b.value)
        .map_err(|e| e.to_string())
}

/// Group-normalized advantages as JSON `{rewards, mean, std, advantages}`.
#[wasm_bindgen]
pub fn advantages(rewards: &[f64]) -> Result<String, String> {
    let group = reward::group_advantages(rewards).map_err(|e| e.to_string())?;
    serde_json::to_string(&group).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct SurrogateView {
    objective: f64,
    terms: Vec<f64>,
    clipped: Vec<bool>,
}

/// Clipped surrogate over paired ratios and advantages, as JSON
/// `{objective, terms, clipped}`. `clipped[i]` marks terms where the clip
/// branch was the minimum.
#[wasm_bindgen]
pub fn surrogate(ratios: &[f64], advantages: &[f64], epsilon: f64) -> Result<String, String> {
    if ratios.len() != advantages.len() {
        return Err(format!(
            "{} ratios but {} advantages",
            ratios.len(),
            advantages.len()
        ));
    }
    if ratios.iter().chain(advantages).any(|x| !x.is_finite()) {
        return Err("inputs must be finite".into());
    }
    let pairs: Vec<(f64, f64)> = ratios.iter().copied().zip(advantages.iter().copied()).collect();
    let objective = reward::surrogate_from_ratios(&pairs, epsilon).map_err(|e| e.to_string())?;
    let terms: Vec<f64> = pairs
        .iter()
        .map(|&(rho, adv)| reward::clipped_term(rho, adv, epsilon))
        .collect();
    let clipped = pairs
        .iter()
        .zip(&terms)
        .map(|(&(rho, adv), &t)| t != rho * adv)
        .collect();
    serde_json::to_string(&SurrogateView {
        objective,
        terms,
        clipped,
    })
    .map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct ValidationView {
    turns: usize,
    search_calls: usize,
    answer: Option<String>,
    /// Canonical re-serialization, when every turn parsed.
    canonical: Option<String>,
    report: FormatReport,
}

/// Parses a tag stream (`<think>`, `<search>`, `<information>`, `<answer>`)
/// and checks it. `level` "L1" skips the think-first rule.
#[wasm_bindgen]
pub fn validate_trajectory(stream: &str, level: &str) -> String {
    let t = from_tag_stream("demo", "", stream);
    let profile = if level.trim().eq_ignore_ascii_case("L1") {
        ValidationProfile::Relaxed
    } else {
        ValidationProfile::Strict
    };
    let report = validate_with(&t, profile, DEFAULT_MAX_TURNS);
    let parsed = t.turns.iter().all(|turn| turn.defect.is_none());
    let view = ValidationView {
        turns: t.turns.len(),
        search_calls: t.search_count(),
        answer: t.answer_text().map(str::to_string),
        canonical: parsed.then(|| serialize(&t)),
        report,
    };
    serde_json::to_string(&view).expect("view serializes")
}
