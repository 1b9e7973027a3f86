//! Lexer and parser for the four-tag protocol.
//!
//! The tag set is closed: `think`, `search` and `answer` come from the model,
//! `information` only from the environment. Inside a tagged span any other
//! angle-bracket token is literal text. Outside of spans an unrecognised
//! tag-shaped token is an error, and plain text is kept as [`StrayText`].
//!
//! All offsets are byte offsets into the parsed string.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Action, ActionKind, Observation, Trajectory, Turn};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TagName {
    Think,
    Search,
    Answer,
    Information,
}

impl TagName {
    fn as_str(self) -> &'static str {
        match self {
            TagName::Think => "think",
            TagName::Search => "search",
            TagName::Answer => "answer",
            TagName::Information => "information",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        match name {
            "think" => Some(TagName::Think),
            "search" => Some(TagName::Search),
            "answer" => Some(TagName::Answer),
            "information" => Some(TagName::Information),
            _ => None,
        }
    }

    fn action_kind(self) -> Option<ActionKind> {
        match self {
            TagName::Think => Some(ActionKind::Think),
            TagName::Search => Some(ActionKind::Search),
            TagName::Answer => Some(ActionKind::Answer),
            TagName::Information => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum TokenName<'a> {
    Known(TagName),
    Unknown(&'a str),
}

#[derive(Debug, Clone, Copy)]
struct TagToken<'a> {
    name: TokenName<'a>,
    closing: bool,
    start: usize,
    end: usize,
}

/// Lexes `<name>` or `</name>` starting at `start` (which must index a `<`).
fn lex_tag(s: &str, start: usize) -> Option<TagToken<'_>> {
    let bytes = s.as_bytes();
    let mut i = start + 1;
    let closing = bytes.get(i) == Some(&b'/');
    if closing {
        i += 1;
    }
    let name_start = i;
    if !bytes.get(i)?.is_ascii_alphabetic() {
        return None;
    }
    while let Some(&b) = bytes.get(i) {
        if b.is_ascii_alphanumeric() || b == b'_' || b == b'-' {
            i += 1;
        } else {
            break;
        }
    }
    if bytes.get(i) != Some(&b'>') {
        return None;
    }
    let name = &s[name_start..i];
    let name = match TagName::from_name(name) {
        Some(known) => TokenName::Known(known),
        None => TokenName::Unknown(name),
    };
    Some(TagToken {
        name,
        closing,
        start,
        end: i + 1,
    })
}

/// Next tag-shaped token at or after `from`.
fn next_tag(s: &str, from: usize) -> Option<TagToken<'_>> {
    s[from..]
        .match_indices('<')
        .find_map(|(i, _)| lex_tag(s, from + i))
}

/// Next token naming one of the four protocol tags inside `s[from..to]`.
fn next_known_tag(s: &str, from: usize, to: usize) -> Option<TagToken<'_>> {
    s[from..to]
        .match_indices('<')
        .filter_map(|(i, _)| lex_tag(s, from + i))
        .find(|t| matches!(t.name, TokenName::Known(_)) && t.end <= to)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseErrorKind {
    UnclosedTag { tag: String },
    UnknownTag { tag: String },
    NestedTag { outer: String, inner: String },
    UnexpectedClose { tag: String },
    FabricatedInformation,
    SearchAndAnswer,
    DuplicateAction { tag: String },
    EmptyContent { tag: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
pub struct ParseError {
    #[serde(flatten)]
    pub kind: ParseErrorKind,
    pub offset: usize,
}

impl ParseError {
    fn new(kind: ParseErrorKind, offset: usize) -> Self {
        Self { kind, offset }
    }

    fn shifted(mut self, by: usize) -> Self {
        self.offset += by;
        self
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ParseErrorKind::UnclosedTag { tag } => write!(f, "unclosed <{tag}>"),
            ParseErrorKind::UnknownTag { tag } => write!(f, "unknown tag <{tag}>"),
            ParseErrorKind::NestedTag { outer, inner } => {
                write!(f, "<{inner}> nested inside <{outer}>")
            }
            ParseErrorKind::UnexpectedClose { tag } => write!(f, "unexpected </{tag}>"),
            ParseErrorKind::FabricatedInformation => {
                write!(f, "model output contains an <information> block")
            }
            ParseErrorKind::SearchAndAnswer => {
                write!(f, "step contains both <search> and <answer>")
            }
            ParseErrorKind::DuplicateAction { tag } => write!(f, "more than one <{tag}> in step"),
            ParseErrorKind::EmptyContent { tag } => write!(f, "<{tag}> has no content"),
        }?;
        write!(f, " at offset {}", self.offset)
    }
}

/// Untagged text found between spans.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrayText {
    pub offset: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedStep {
    pub actions: Vec<Action>,
    pub stray_text: Vec<StrayText>,
}

fn record_stray(out: &mut Vec<StrayText>, raw: &str, from: usize, to: usize) {
    let text = &raw[from..to];
    if !text.trim().is_empty() {
        out.push(StrayText {
            offset: from,
            text: text.to_string(),
        });
    }
}

/// Parses one assistant generation step into its actions.
pub fn parse_step(raw: &str) -> Result<ParsedStep, ParseError> {
    let mut step = ParsedStep::default();
    let mut pos = 0;
    let mut search_at = None;
    let mut answer_at = None;

    while let Some(tok) = next_tag(raw, pos) {
        record_stray(&mut step.stray_text, raw, pos, tok.start);
        let tag = match tok.name {
            TokenName::Unknown(name) => {
                return Err(ParseError::new(
                    ParseErrorKind::UnknownTag {
                        tag: name.to_string(),
                    },
                    tok.start,
                ))
            }
            TokenName::Known(TagName::Information) => {
                return Err(ParseError::new(
                    ParseErrorKind::FabricatedInformation,
                    tok.start,
                ))
            }
            TokenName::Known(tag) => tag,
        };
        if tok.closing {
            return Err(ParseError::new(
                ParseErrorKind::UnexpectedClose {
                    tag: tag.as_str().to_string(),
                },
                tok.start,
            ));
        }

        let close = format!("</{}>", tag.as_str());
        let Some(rel) = raw[tok.end..].find(&close) else {
            return Err(ParseError::new(
                ParseErrorKind::UnclosedTag {
                    tag: tag.as_str().to_string(),
                },
                tok.start,
            ));
        };
        let close_start = tok.end + rel;
        if let Some(inner) = next_known_tag(raw, tok.end, close_start) {
            let kind = match inner.name {
                TokenName::Known(TagName::Information) => ParseErrorKind::FabricatedInformation,
                TokenName::Known(name) => ParseErrorKind::NestedTag {
                    outer: tag.as_str().to_string(),
                    inner: name.as_str().to_string(),
                },
                TokenName::Unknown(_) => unreachable!("filtered to known tags"),
            };
            return Err(ParseError::new(kind, inner.start));
        }

        let content = &raw[tok.end..close_start];
        if content.trim().is_empty() {
            return Err(ParseError::new(
                ParseErrorKind::EmptyContent {
                    tag: tag.as_str().to_string(),
                },
                tok.start,
            ));
        }
        let kind = tag.action_kind().expect("information handled above");
        let slot = match kind {
            ActionKind::Search => Some(&mut search_at),
            ActionKind::Answer => Some(&mut answer_at),
            ActionKind::Think => None,
        };
        if let Some(slot) = slot {
            if slot.is_some() {
                return Err(ParseError::new(
                    ParseErrorKind::DuplicateAction {
                        tag: tag.as_str().to_string(),
                    },
                    tok.start,
                ));
            }
            *slot = Some(tok.start);
        }
        step.actions.push(Action::new(kind, content));
        pos = close_start + close.len();
    }
    record_stray(&mut step.stray_text, raw, pos, raw.len());

    if let (Some(s), Some(a)) = (search_at, answer_at) {
        return Err(ParseError::new(
            ParseErrorKind::SearchAndAnswer,
            s.max(a),
        ));
    }
    Ok(step)
}

/// Parses one generation step and returns its actions in textual order.
pub fn parse_actions(raw: &str) -> Result<Vec<Action>, ParseError> {
    parse_step(raw).map(|s| s.actions)
}

/// Splits assistant-only text (no observations) into steps, cutting after
/// every `</search>`.
pub fn split_steps(text: &str) -> Vec<&str> {
    let mut steps = Vec::new();
    let mut pos = 0;
    while let Some(rel) = text[pos..].find("</search>") {
        let end = pos + rel + "</search>".len();
        steps.push(&text[pos..end]);
        pos = end;
    }
    if !text[pos..].trim().is_empty() {
        steps.push(&text[pos..]);
    }
    steps
}

/// Parses a full tag stream (assistant steps interleaved with
/// `<information>` blocks) back into turns. Observations come back with
/// fixture provenance since they were read from a recording.
pub fn parse_tag_stream(stream: &str) -> Result<Vec<Turn>, ParseError> {
    const OPEN: &str = "<information>";
    const CLOSE: &str = "</information>";
    let mut turns = Vec::new();
    let mut pos = 0;
    loop {
        let next_info = stream[pos..].find(OPEN).map(|i| pos + i);
        let step_end = next_info.unwrap_or(stream.len());
        let segment = &stream[pos..step_end];
        if next_info.is_none() && segment.trim().is_empty() {
            break;
        }
        let step = parse_step(segment).map_err(|e| e.shifted(pos))?;
        let mut turn = Turn::new(step.actions);
        turn.stray_text = step
            .stray_text
            .into_iter()
            .map(|s| StrayText {
                offset: s.offset + pos,
                ..s
            })
            .collect();
        match next_info {
            Some(open_at) => {
                let body = open_at + OPEN.len();
                let Some(rel) = stream[body..].find(CLOSE) else {
                    return Err(ParseError::new(
                        ParseErrorKind::UnclosedTag {
                            tag: "information".into(),
                        },
                        open_at,
                    ));
                };
                turn.observation = Some(Observation::fixture(&stream[body..body + rel]));
                turns.push(turn);
                pos = body + rel + CLOSE.len();
            }
            None => {
                turns.push(turn);
                break;
            }
        }
    }
    Ok(turns)
}

/// Assistant text of one turn, without its observation.
pub fn serialize_turn(turn: &Turn) -> String {
    if let Some(defect) = &turn.defect {
        return defect.raw.clone();
    }
    let mut out = String::new();
    for action in &turn.actions {
        let tag = action.kind.tag();
        out.push('<');
        out.push_str(tag);
        out.push('>');
        out.push_str(&action.text);
        out.push_str("</");
        out.push_str(tag);
        out.push('>');
    }
    out
}

/// Emits the tag stream for a trajectory, with each observation wrapped in
/// `<information>` directly after the step that requested it.
pub fn serialize(trajectory: &Trajectory) -> String {
    let mut out = String::new();
    for turn in &trajectory.turns {
        out.push_str(&serialize_turn(turn));
        if let Some(obs) = &turn.observation {
            out.push_str("<information>");
            out.push_str(&obs.information_text);
            out.push_str("</information>");
        }
    }
    out
}
