//! Deterministic endpoint stand-ins for fixture mode and tests.
//!
//! None of these call a model. They read the rendered prompt they are given
//! and answer from scripts or simple text rules, so whole pipelines become
//! pure functions of their inputs.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::agent::FORCE_ANSWER_NUDGE;
use crate::endpoint::{ChatMessage, DecodingParams, EndpointError, MessageRole, PolicyEndpoint};
use crate::prompts::{section, UNRELATED_SENTINEL};
use crate::trajectory::normalize_answer;

/// Step text that makes [`ScriptedPolicy`] fail the call.
pub const SCRIPTED_ERROR: &str = "!error";

/// One rollout's worth of assistant steps.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Script {
    pub steps: Vec<String>,
    /// Step returned instead when the latest user message is the
    /// force-answer nudge.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub on_force: Option<String>,
}

impl Script {
    pub fn new<S: Into<String>>(steps: impl IntoIterator<Item = S>) -> Self {
        Self {
            steps: steps.into_iter().map(Into::into).collect(),
            on_force: None,
        }
    }

    pub fn on_force(mut self, step: impl Into<String>) -> Self {
        self.on_force = Some(step.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    /// Question text; matched as a suffix of the first user message.
    pub question: String,
    /// Rollout `i` uses `rollouts[seed % len]`.
    pub rollouts: Vec<Script>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct ScriptedPolicy {
    #[serde(default = "scripted_model")]
    pub model: String,
    #[serde(default)]
    pub entries: Vec<ScriptEntry>,
    #[serde(default)]
    pub fallback: Option<Script>,
    #[serde(skip)]
    calls: AtomicUsize,
}

fn scripted_model() -> String {
    "scripted".into()
}

impl Clone for ScriptedPolicy {
    fn clone(&self) -> Self {
        Self {
            model: self.model.clone(),
            entries: self.entries.clone(),
            fallback: self.fallback.clone(),
            calls: AtomicUsize::new(0),
        }
    }
}

impl ScriptedPolicy {
    pub fn new() -> Self {
        Self {
            model: scripted_model(),
            ..Self::default()
        }
    }

    /// Every question, every rollout plays `script`.
    pub fn always(script: Script) -> Self {
        Self {
            fallback: Some(script),
            ..Self::new()
        }
    }

    pub fn with_entry(mut self, question: &str, rollouts: Vec<Script>) -> Self {
        self.entries.push(ScriptEntry {
            question: question.to_string(),
            rollouts,
        });
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn script_for(&self, messages: &[ChatMessage], seed: u64) -> Option<&Script> {
        let first_user = messages.iter().find(|m| m.role == MessageRole::User)?;
        let content = first_user.content.trim_end();
        let entry = self
            .entries
            .iter()
            .filter(|e| content.ends_with(e.question.trim()))
            .max_by_key(|e| e.question.trim().len());
        match entry {
            Some(e) if !e.rollouts.is_empty() => {
                Some(&e.rollouts[(seed % e.rollouts.len() as u64) as usize])
            }
            _ => self.fallback.as_ref(),
        }
    }
}

impl PolicyEndpoint for ScriptedPolicy {
    fn generate(
        &self,
        messages: &[ChatMessage],
        decoding: &DecodingParams,
    ) -> Result<String, EndpointError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let script = self
            .script_for(messages, decoding.seed.unwrap_or(0))
            .ok_or_else(|| EndpointError::InvalidResponse("no script for question".into()))?;
        let forced = messages
            .last()
            .is_some_and(|m| m.role == MessageRole::User && m.content == FORCE_ANSWER_NUDGE);
        let step = match (&script.on_force, forced) {
            (Some(step), true) => step.as_str(),
            _ => {
                let done = messages
                    .iter()
                    .filter(|m| m.role == MessageRole::Assistant)
                    .count();
                script
                    .steps
                    .get(done)
                    .or(script.steps.last())
                    .map(String::as_str)
                    .unwrap_or("")
            }
        };
        if step == SCRIPTED_ERROR {
            return Err(EndpointError::InvalidResponse("scripted failure".into()));
        }
        Ok(step.to_string())
    }

    fn model_id(&self) -> &str {
        &self.model
    }
}

const STOPWORDS: &[&str] = &[
    "about", "after", "also", "been", "does", "from", "have", "into", "many", "more", "must",
    "only", "other", "shall", "should", "than", "that", "their", "them", "then", "there", "these",
    "they", "this", "what", "when", "which", "while", "with", "within", "would", "your", "following",
    "question", "answer", "correct", "option", "options", "statement", "statements", "under",
];

fn is_cjk(c: char) -> bool {
    matches!(c, '\u{4e00}'..='\u{9fff}' | '\u{3400}'..='\u{4dbf}')
}

/// Content words of `text`: lowercase Latin words of 4+ letters minus
/// stopwords, plus CJK character bigrams.
pub fn keywords(text: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for word in text.split(|c: char| !c.is_alphanumeric()) {
        let lower = word.to_lowercase();
        if lower.chars().count() >= 4
            && lower.chars().all(|c| c.is_ascii_alphanumeric())
            && !STOPWORDS.contains(&lower.as_str())
        {
            out.insert(lower);
        }
    }
    let cjk: Vec<char> = text.chars().collect();
    for pair in cjk.windows(2) {
        if pair.iter().all(|&c| is_cjk(c)) {
            out.insert(pair.iter().collect());
        }
    }
    out
}

fn overlap(a: &BTreeSet<String>, b: &BTreeSet<String>) -> usize {
    a.intersection(b).count()
}

fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c == '\n' {
            if !cur.trim().is_empty() {
                out.push(cur.trim().to_string());
            }
            cur.clear();
            continue;
        }
        cur.push(c);
        if matches!(c, '.' | '。' | '!' | '?' | '！' | '？' | '；') {
            if !cur.trim().is_empty() {
                out.push(cur.trim().to_string());
            }
            cur.clear();
        }
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

/// Summarizer stand-in. A page sharing fewer than `min_overlap` keywords
/// with the question gets the unrelated sentinel; otherwise the summary is
/// the keyword-bearing sentences in page order, topped up with leading
/// sentences to at least six and capped at ten.
#[derive(Debug, Clone)]
pub struct ExtractiveSummarizer {
    pub min_overlap: usize,
    calls: std::sync::Arc<AtomicUsize>,
}

impl Default for ExtractiveSummarizer {
    fn default() -> Self {
        Self {
            min_overlap: 2,
            calls: Default::default(),
        }
    }
}

impl ExtractiveSummarizer {
    pub fn with_min_overlap(min_overlap: usize) -> Self {
        Self {
            min_overlap,
            ..Self::default()
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn summarize_text(&self, question: &str, content: &str) -> String {
        let q = keywords(question);
        if overlap(&q, &keywords(content)) < self.min_overlap {
            return UNRELATED_SENTINEL.to_string();
        }
        let all = sentences(content);
        let mut picked: Vec<usize> = all
            .iter()
            .enumerate()
            .filter(|(_, s)| overlap(&q, &keywords(s)) > 0)
            .map(|(i, _)| i)
            .take(10)
            .collect();
        let mut i = 0;
        while picked.len() < 6 && i < all.len() {
            if !picked.contains(&i) {
                picked.push(i);
            }
            i += 1;
        }
        picked.sort_unstable();
        picked
            .iter()
            .map(|&i| all[i].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl PolicyEndpoint for ExtractiveSummarizer {
    fn generate(
        &self,
        messages: &[ChatMessage],
        _decoding: &DecodingParams,
    ) -> Result<String, EndpointError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let prompt = &messages
            .last()
            .ok_or_else(|| EndpointError::InvalidResponse("empty context".into()))?
            .content;
        let question = section(prompt, "User Question:\n", Some("\n\nRequirements:"))
            .ok_or_else(|| EndpointError::InvalidResponse("not a summarization prompt".into()))?;
        let content = section(prompt, "Webpage Content:\n", None).unwrap_or_default();
        Ok(self.summarize_text(question, content))
    }

    fn model_id(&self) -> &str {
        "extractive-summarizer"
    }
}

/// Judge stand-in for relevance and answer-equivalence prompts.
///
/// Relevance: NO when the information block contains any `reject_markers`
/// entry, an unparseable reply when it contains a `garble_markers` entry,
/// YES otherwise. Equivalence: YES when the normalized answers are equal or
/// one contains the other.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RuleJudge {
    #[serde(default)]
    pub reject_markers: Vec<String>,
    #[serde(default)]
    pub garble_markers: Vec<String>,
    #[serde(skip)]
    calls: std::sync::Arc<AtomicUsize>,
}

impl RuleJudge {
    pub fn rejecting<S: Into<String>>(markers: impl IntoIterator<Item = S>) -> Self {
        Self {
            reject_markers: markers.into_iter().map(Into::into).collect(),
            ..Self::default()
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl PolicyEndpoint for RuleJudge {
    fn generate(
        &self,
        messages: &[ChatMessage],
        _decoding: &DecodingParams,
    ) -> Result<String, EndpointError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let prompt = &messages
            .last()
            .ok_or_else(|| EndpointError::InvalidResponse("empty context".into()))?
            .content;
        if let Some(info) = section(prompt, "[Retrieved Information]\n", Some("\n\nJudgment Result")) {
            if self.garble_markers.iter().any(|m| info.contains(m.as_str())) {
                return Ok("It depends on the jurisdiction.".into());
            }
            let verdict = if self.reject_markers.iter().any(|m| info.contains(m.as_str())) {
                "NO"
            } else {
                "YES"
            };
            return Ok(verdict.into());
        }
        let reference = section(prompt, "[Reference Answer]\n", Some("\n\n[Candidate Answer]"));
        let candidate = section(prompt, "[Candidate Answer]\n", Some("\n\nEquivalent (YES/NO):"));
        match (reference, candidate) {
            (Some(r), Some(c)) => {
                let (r, c) = (normalize_answer(r).to_lowercase(), normalize_answer(c).to_lowercase());
                let same = !c.is_empty() && (r == c || r.contains(&c) || c.contains(&r));
                Ok(if same { "YES" } else { "NO" }.into())
            }
            _ => Err(EndpointError::InvalidResponse("unrecognized judge prompt".into())),
        }
    }

    fn model_id(&self) -> &str {
        "rule-judge"
    }
}

/// Strips question-type priors from reasoning text.
pub fn strip_type_priors(text: &str) -> String {
    let mut out = text.to_string();
    for prior in [
        "This is a single choice question.",
        "This is a multiple choice question.",
        "single choice",
        "multiple choice",
        "单选题",
        "多选题",
    ] {
        out = out.replace(prior, "");
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Rewriter stand-in. Single-turn prompts get the original think text with
/// type priors removed; multi-turn prompts get one think+search step per
/// evidence entry and a closing think+answer.
#[derive(Debug, Clone, Default)]
pub struct TemplateRewriter;

impl TemplateRewriter {
    fn single(prompt: &str) -> Option<String> {
        let answer = section(prompt, "The final answer must be exactly consistent: ", Some("\n"))?;
        let original = section(
            prompt,
            "Original Response:\n",
            Some("\n\nPlease output the optimized complete assistant response"),
        )?;
        let think: Vec<&str> = original
            .split("<think>")
            .skip(1)
            .filter_map(|s| s.split("</think>").next())
            .collect();
        let think = strip_type_priors(&think.join(" "));
        let think = if think.is_empty() {
            "The relevant provisions settle the issue.".to_string()
        } else {
            think
        };
        Some(format!("<think>{think}</think><answer>{answer}</answer>"))
    }

    fn multi(prompt: &str) -> Option<String> {
        let answer = section(
            prompt,
            "The final answer must be exactly consistent with the original answer: ",
            Some("\n"),
        )?;
        let evidence = section(
            prompt,
            "searches):\n",
            Some("\n\nPlease output the optimized complete assistant trajectory"),
        )?;
        let mut out = String::new();
        for line in evidence.lines() {
            let Some(rest) = line.strip_prefix("[Search ") else {
                continue;
            };
            let query = rest.split_once("] ").map(|(_, q)| q.trim())?;
            out.push_str(&format!(
                "<think>I need the legal basis for this point, so I will look up: {query}</think><search>{query}</search>\n"
            ));
        }
        out.push_str(&format!(
            "<think>The retrieved provisions support the conclusion.</think><answer>{answer}</answer>"
        ));
        Some(out)
    }
}

impl PolicyEndpoint for TemplateRewriter {
    fn generate(
        &self,
        messages: &[ChatMessage],
        _decoding: &DecodingParams,
    ) -> Result<String, EndpointError> {
        let prompt = &messages
            .last()
            .ok_or_else(|| EndpointError::InvalidResponse("empty context".into()))?
            .content;
        let out = if prompt.contains("Original Response:") {
            Self::single(prompt)
        } else {
            Self::multi(prompt)
        };
        out.ok_or_else(|| EndpointError::InvalidResponse("unrecognized rewrite prompt".into()))
    }

    fn model_id(&self) -> &str {
        "template-rewriter"
    }
}
