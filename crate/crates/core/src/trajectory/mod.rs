//! Trajectory data model for the think / search / answer protocol.
//!
//! A [`Trajectory`] is the ordered record of assistant steps ([`Turn`]s) for
//! one question. Each step holds the actions the model emitted in a single
//! generation; a step that ends in a search carries the observation the
//! environment injected before the next step began.

mod grammar;
mod normalize;
mod validate;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use grammar::{
    parse_actions, parse_step, parse_tag_stream, serialize, serialize_turn, split_steps,
    ParseError, ParseErrorKind, ParsedStep, StrayText,
};
pub use normalize::{is_option_label, normalize_answer};
pub use validate::{
    validate_format, validate_with, FormatReport, Severity, ValidationProfile, Violation,
    ViolationCode,
};

/// Metadata key carrying the prompt level a trajectory was generated under.
pub const PROMPT_LEVEL_KEY: &str = "prompt_level";
/// Metadata key carrying the generating model id.
pub const MODEL_KEY: &str = "model";

/// Default assistant-turn budget.
pub const DEFAULT_MAX_TURNS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Think,
    Search,
    Answer,
}

impl ActionKind {
    pub fn tag(self) -> &'static str {
        match self {
            ActionKind::Think => "think",
            ActionKind::Search => "search",
            ActionKind::Answer => "answer",
        }
    }
}

/// One tagged span emitted by the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub kind: ActionKind,
    pub text: String,
}

impl Action {
    pub fn new(kind: ActionKind, text: impl Into<String>) -> Self {
        Self {
            kind,
            text: text.into(),
        }
    }

    pub fn think(text: impl Into<String>) -> Self {
        Self::new(ActionKind::Think, text)
    }

    pub fn search(text: impl Into<String>) -> Self {
        Self::new(ActionKind::Search, text)
    }

    pub fn answer(text: impl Into<String>) -> Self {
        Self::new(ActionKind::Answer, text)
    }
}

/// Who put an observation into the trajectory. Model output never does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Environment,
    Fixture,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub url: String,
    pub title: String,
}

/// Information returned by the search environment for one query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub information_text: String,
    #[serde(default)]
    pub sources: Vec<SourceRecord>,
    pub produced_by: Provenance,
}

impl Observation {
    pub fn fixture(text: impl Into<String>) -> Self {
        Self {
            information_text: text.into(),
            sources: Vec::new(),
            produced_by: Provenance::Fixture,
        }
    }

    pub fn environment(text: impl Into<String>, sources: Vec<SourceRecord>) -> Self {
        Self {
            information_text: text.into(),
            sources,
            produced_by: Provenance::Environment,
        }
    }
}

/// A generation step that could not be parsed. The raw text is kept so the
/// step still shows up in the serialized stream and in format reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepDefect {
    pub error: ParseError,
    pub raw: String,
}

/// One assistant generation step.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Turn {
    pub actions: Vec<Action>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<Observation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stray_text: Vec<StrayText>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defect: Option<StepDefect>,
}

impl Turn {
    pub fn new(actions: Vec<Action>) -> Self {
        Self {
            actions,
            ..Self::default()
        }
    }

    pub fn with_observation(mut self, observation: Observation) -> Self {
        self.observation = Some(observation);
        self
    }

    pub fn search(&self) -> Option<&Action> {
        self.actions.iter().find(|a| a.kind == ActionKind::Search)
    }

    pub fn answer(&self) -> Option<&Action> {
        self.actions.iter().find(|a| a.kind == ActionKind::Answer)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub question_id: String,
    #[serde(rename = "question")]
    pub question_text: String,
    pub turns: Vec<Turn>,
    #[serde(default)]
    pub final_answer: Option<String>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl Trajectory {
    pub fn new(question_id: impl Into<String>, question_text: impl Into<String>) -> Self {
        Self {
            question_id: question_id.into(),
            question_text: question_text.into(),
            turns: Vec::new(),
            final_answer: None,
            metadata: BTreeMap::new(),
        }
    }

    /// Text of the last answer action, if the trajectory has one.
    pub fn answer_text(&self) -> Option<&str> {
        self.turns
            .iter()
            .rev()
            .find_map(|t| t.answer())
            .map(|a| a.text.as_str())
    }

    /// Recomputes `final_answer` from the last answer action.
    pub fn refresh_final_answer(&mut self) {
        self.final_answer = self.answer_text().map(normalize_answer);
    }

    pub fn search_queries(&self) -> impl Iterator<Item = &str> {
        self.turns
            .iter()
            .flat_map(|t| t.actions.iter())
            .filter(|a| a.kind == ActionKind::Search)
            .map(|a| a.text.as_str())
    }

    pub fn observations(&self) -> impl Iterator<Item = &Observation> {
        self.turns.iter().filter_map(|t| t.observation.as_ref())
    }

    pub fn search_count(&self) -> usize {
        count_search_calls(self)
    }

    pub fn prompt_level(&self) -> Option<&str> {
        self.metadata.get(PROMPT_LEVEL_KEY).map(String::as_str)
    }

    /// True when the last turn holds an answer.
    pub fn is_complete(&self) -> bool {
        self.turns.last().is_some_and(|t| t.answer().is_some())
    }
}

/// Number of search actions across all turns.
/// Builds a trajectory from a recorded tag stream. A stream that does not
/// parse becomes one defective turn, so it still scores as format-invalid.
pub fn from_tag_stream(
    question_id: impl Into<String>,
    question_text: impl Into<String>,
    stream: &str,
) -> Trajectory {
    let mut t = Trajectory::new(question_id, question_text);
    match parse_tag_stream(stream) {
        Ok(turns) => t.turns = turns,
        Err(error) => t.turns.push(Turn {
            defect: Some(StepDefect {
                error,
                raw: stream.to_string(),
            }),
            ..Turn::default()
        }),
    }
    t.refresh_final_answer();
    t
}

pub fn count_search_calls(trajectory: &Trajectory) -> usize {
    trajectory
        .turns
        .iter()
        .flat_map(|t| t.actions.iter())
        .filter(|a| a.kind == ActionKind::Search)
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_three() -> Trajectory {
        let mut t = Trajectory::new("q1", "question");
        t.turns = vec![
            Turn::new(vec![
                Action::think("[Analysis and Judgment]"),
                Action::search("[First Search]"),
            ])
            .with_observation(Observation::fixture("[Search Results]")),
            Turn::new(vec![
                Action::think("[Continue Analysis]"),
                Action::search("[Second Search]"),
            ])
            .with_observation(Observation::fixture("[Search Results]")),
            Turn::new(vec![
                Action::think("[Final Analysis]"),
                Action::answer("ACD"),
            ]),
        ];
        t.refresh_final_answer();
        t
    }

    #[test]
    fn counts_searches() {
        let mut t = Trajectory::new("q", "x");
        t.turns = vec![Turn::new(vec![Action::think("t"), Action::answer("B")])];
        assert_eq!(count_search_calls(&t), 0);
        assert_eq!(count_search_calls(&example_three()), 2);
    }

    #[test]
    fn final_answer_tracks_last_answer() {
        let t = example_three();
        assert_eq!(t.final_answer.as_deref(), Some("ACD"));
        assert!(t.is_complete());
    }

    #[test]
    fn interchange_fields() {
        let json = serde_json::to_value(example_three()).unwrap();
        assert_eq!(json["question_id"], "q1");
        assert_eq!(json["question"], "question");
        assert_eq!(json["turns"][0]["actions"][1]["kind"], "search");
        assert_eq!(json["turns"][0]["observation"]["produced_by"], "fixture");
        assert!(json["turns"][2].get("observation").is_none());
    }
}
