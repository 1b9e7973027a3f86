//! Source questions and benchmark items.

use serde::{Deserialize, Serialize};

use crate::trajectory::normalize_answer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Jecqa,
    Cail2018,
    Cail2021,
    #[default]
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    #[default]
    SingleChoice,
    MultiChoice,
    OpenQa,
}

impl QuestionKind {
    pub fn is_choice(self) -> bool {
        !matches!(self, QuestionKind::OpenQa)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceQuestion {
    pub id: String,
    #[serde(rename = "question", alias = "text")]
    pub text: String,
    #[serde(rename = "gold", alias = "gold_answer")]
    pub gold_answer: String,
    #[serde(default)]
    pub origin: Origin,
    #[serde(default)]
    pub kind: QuestionKind,
}

impl SourceQuestion {
    pub fn new(id: impl Into<String>, text: impl Into<String>, gold: &str) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            gold_answer: normalize_answer(gold),
            origin: Origin::Custom,
            kind: QuestionKind::SingleChoice,
        }
    }

    pub fn with_kind(mut self, kind: QuestionKind) -> Self {
        self.kind = kind;
        self
    }

    /// Re-normalizes the gold label (records read from disk may carry raw
    /// labels such as `"dca"`).
    pub fn normalized(mut self) -> Self {
        self.gold_answer = normalize_answer(&self.gold_answer);
        self
    }

    /// String equality of normalized labels. `None` is never correct.
    pub fn is_correct(&self, predicted: Option<&str>) -> bool {
        predicted.is_some_and(|p| normalize_answer(p) == normalize_answer(&self.gold_answer))
    }
}

/// One line of a benchmark file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkItem {
    pub id: String,
    pub question: String,
    pub gold: String,
    #[serde(default)]
    pub kind: QuestionKind,
    #[serde(default)]
    pub benchmark_tag: String,
}

impl BenchmarkItem {
    pub fn to_source(&self) -> SourceQuestion {
        SourceQuestion::new(&self.id, &self.question, &self.gold).with_kind(self.kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_interchange_fields() {
        let q: SourceQuestion = serde_json::from_str(
            r#"{"id":"q1","question":"x?","gold":"dca","origin":"jecqa","kind":"multi_choice"}"#,
        )
        .unwrap();
        let q = q.normalized();
        assert_eq!(q.gold_answer, "ACD");
        assert_eq!(q.origin, Origin::Jecqa);
        assert!(q.is_correct(Some("A, D, C")));
        assert!(!q.is_correct(None));
    }
}
