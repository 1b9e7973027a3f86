//! Prompt registry.
//!
//! Templates are stored as text resources under `prompts/<version>/` and use
//! `{name}` placeholders. Rendering is a single left-to-right pass, so braces
//! inside substituted values are never re-expanded.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const PROMPT_VERSION: &str = "v1";

pub const LEVEL1_SYSTEM: &str = include_str!("../prompts/v1/level1_system.txt");
pub const LEVEL2_SYSTEM: &str = include_str!("../prompts/v1/level2_system.txt");
pub const LEVEL3_SYSTEM: &str = include_str!("../prompts/v1/level3_system.txt");
pub const RELEVANCE_JUDGE: &str = include_str!("../prompts/v1/relevance_judge.txt");
pub const REWRITE_SINGLE_TURN: &str = include_str!("../prompts/v1/rewrite_single_turn.txt");
pub const REWRITE_MULTI_TURN: &str = include_str!("../prompts/v1/rewrite_multi_turn.txt");
pub const RL_USER_PREFIX: &str = include_str!("../prompts/v1/rl_user_prefix.txt");
pub const SUMMARIZATION: &str = include_str!("../prompts/v1/summarization.txt");

/// Summarizer reply marking a page as irrelevant.
pub const UNRELATED_SENTINEL: &str = "The webpage content is unrelated to the question";

/// Introspection level of the data-construction system prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum PromptLevel {
    L1,
    L2,
    #[default]
    L3,
}

impl PromptLevel {
    pub fn system_prompt(self) -> &'static str {
        match self {
            PromptLevel::L1 => LEVEL1_SYSTEM,
            PromptLevel::L2 => LEVEL2_SYSTEM,
            PromptLevel::L3 => LEVEL3_SYSTEM,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PromptLevel::L1 => "L1",
            PromptLevel::L2 => "L2",
            PromptLevel::L3 => "L3",
        }
    }
}

impl fmt::Display for PromptLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "L1" | "1" => Ok(PromptLevel::L1),
            "L2" | "2" => Ok(PromptLevel::L2),
            "L3" | "3" => Ok(PromptLevel::L3),
            other => Err(format!("unknown prompt level {other:?}")),
        }
    }
}

/// How the question is presented to the policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStyle {
    /// System prompt of the given level, bare question as user content.
    System(PromptLevel),
    /// No system prompt; the user content is the RL prefix plus the question.
    Rl,
}

impl Default for PromptStyle {
    fn default() -> Self {
        PromptStyle::System(PromptLevel::L3)
    }
}

impl PromptStyle {
    pub fn label(self) -> &'static str {
        match self {
            PromptStyle::System(level) => level.as_str(),
            PromptStyle::Rl => "RL",
        }
    }
}

/// User content for RL prompts: the prefix, a newline, then the question.
pub fn rl_user_content(question: &str) -> String {
    format!("{RL_USER_PREFIX}\n{question}")
}

/// Substitutes `{key}` placeholders in one pass. Unknown placeholders are
/// left as they are.
pub fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let substituted = after.find('}').and_then(|close| {
            let key = &after[..close];
            values
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| (*v, close))
        });
        match substituted {
            Some((value, close)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

pub fn render_relevance(question: &str, final_answer: &str, info_text: &str) -> String {
    fill(
        RELEVANCE_JUDGE,
        &[
            ("question", question),
            ("final_answer", final_answer),
            ("info_text", info_text),
        ],
    )
}

pub fn render_rewrite_single(original_answer: &str, question: &str, assistant_content: &str) -> String {
    fill(
        REWRITE_SINGLE_TURN,
        &[
            ("original_answer", original_answer),
            ("question", question),
            ("assistant_content", assistant_content),
        ],
    )
}

pub fn render_rewrite_multi(
    expected_search_count: usize,
    original_answer: &str,
    question: &str,
    evidence_text: &str,
) -> String {
    let count = expected_search_count.to_string();
    fill(
        REWRITE_MULTI_TURN,
        &[
            ("expected_search_count", &count),
            ("original_answer", original_answer),
            ("question", question),
            ("evidence_text", evidence_text),
        ],
    )
}

pub fn render_summarization(original_question: &str, content: &str) -> String {
    fill(
        SUMMARIZATION,
        &[("original_question", original_question), ("content", content)],
    )
}

/// Equivalence check for open-ended answers. Not one of the stored
/// data-construction prompts; used only when open QA is judged by a model.
pub const ANSWER_EQUIVALENCE: &str = "Decide whether the candidate answer to the legal question below states the same conclusion as the reference answer. Minor wording differences do not matter. Please answer only YES or NO.

[Question]
{question}

[Reference Answer]
{reference}

[Candidate Answer]
{candidate}

Equivalent (YES/NO):";

pub fn render_equivalence(question: &str, reference: &str, candidate: &str) -> String {
    fill(
        ANSWER_EQUIVALENCE,
        &[
            ("question", question),
            ("reference", reference),
            ("candidate", candidate),
        ],
    )
}

/// Text between `start` and the next `end` marker (or the end of input).
pub(crate) fn section<'a>(rendered: &'a str, start: &str, end: Option<&str>) -> Option<&'a str> {
    let from = rendered.find(start)? + start.len();
    let rest = &rendered[from..];
    let to = end.and_then(|e| rest.find(e)).unwrap_or(rest.len());
    Some(rest[..to].trim())
}
