use serde::{Deserialize, Serialize};

use super::grammar::{serialize_turn, ParseErrorKind};
use super::{ActionKind, Trajectory, DEFAULT_MAX_TURNS, PROMPT_LEVEL_KEY};

/// Which tag rules apply. Level-1 prompts never ask for `<think>`, so their
/// trajectories are checked without the think-first rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValidationProfile {
    Relaxed,
    #[default]
    Strict,
}

impl ValidationProfile {
    /// Profile selected by the trajectory's prompt-level metadata.
    pub fn for_trajectory(trajectory: &Trajectory) -> Self {
        match trajectory.metadata.get(PROMPT_LEVEL_KEY).map(String::as_str) {
            Some("L1") => ValidationProfile::Relaxed,
            _ => ValidationProfile::Strict,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    UnclosedTag,
    UnknownTag,
    NestedTag,
    UnexpectedClose,
    FabricatedInformation,
    BothSearchAndAnswer,
    DuplicateAction,
    EmptyContent,
    ThinkRequired,
    TrailingAction,
    EmptyTurn,
    IncompleteStep,
    MissingObservation,
    UnexpectedObservation,
    ActionAfterAnswer,
    MissingAnswer,
    TurnBudgetExceeded,
    StrayText,
}

impl ViolationCode {
    pub fn severity(self) -> Severity {
        match self {
            ViolationCode::StrayText => Severity::Warning,
            _ => Severity::Error,
        }
    }
}

impl From<&ParseErrorKind> for ViolationCode {
    fn from(kind: &ParseErrorKind) -> Self {
        match kind {
            ParseErrorKind::UnclosedTag { .. } => ViolationCode::UnclosedTag,
            ParseErrorKind::UnknownTag { .. } => ViolationCode::UnknownTag,
            ParseErrorKind::NestedTag { .. } => ViolationCode::NestedTag,
            ParseErrorKind::UnexpectedClose { .. } => ViolationCode::UnexpectedClose,
            ParseErrorKind::FabricatedInformation => ViolationCode::FabricatedInformation,
            ParseErrorKind::SearchAndAnswer => ViolationCode::BothSearchAndAnswer,
            ParseErrorKind::DuplicateAction { .. } => ViolationCode::DuplicateAction,
            ParseErrorKind::EmptyContent { .. } => ViolationCode::EmptyContent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

/// One broken rule. `location` is a byte offset into `serialize(trajectory)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub location: usize,
    pub turn: usize,
    pub detail: String,
    pub severity: Severity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

impl FormatReport {
    pub fn from_violations(violations: Vec<Violation>) -> Self {
        Self {
            valid: violations.is_empty(),
            violations,
        }
    }

    pub fn has(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }
}

/// Checks tag usage and step ordering with the profile implied by the
/// trajectory's metadata and the default turn budget.
pub fn validate_format(trajectory: &Trajectory) -> FormatReport {
    validate_with(
        trajectory,
        ValidationProfile::for_trajectory(trajectory),
        DEFAULT_MAX_TURNS,
    )
}

pub fn validate_with(
    trajectory: &Trajectory,
    profile: ValidationProfile,
    max_turns: usize,
) -> FormatReport {
    let mut out = Vec::new();
    let mut push = |code: ViolationCode, location: usize, turn: usize, detail: String| {
        out.push(Violation {
            code,
            location,
            turn,
            detail,
            severity: code.severity(),
        });
    };

    let turns = &trajectory.turns;
    let mut offset = 0;
    let mut answered_at: Option<usize> = None;

    for (i, turn) in turns.iter().enumerate() {
        let turn_start = offset;
        let assistant = serialize_turn(turn);
        offset += assistant.len();
        let last = i + 1 == turns.len();

        if let Some(prev) = answered_at {
            push(
                ViolationCode::ActionAfterAnswer,
                turn_start,
                i,
                format!("turn {i} follows the answer given in turn {prev}"),
            );
        }

        if let Some(defect) = &turn.defect {
            push(
                ViolationCode::from(&defect.error.kind),
                turn_start + defect.error.offset,
                i,
                defect.error.to_string(),
            );
        } else {
            check_actions(turn, i, turn_start, profile, &mut push);
        }

        for stray in &turn.stray_text {
            push(
                ViolationCode::StrayText,
                turn_start + stray.offset,
                i,
                format!("untagged text {:?}", stray.text.trim()),
            );
        }

        let searched = turn.search().is_some();
        match (&turn.observation, searched) {
            (None, true) if !last => push(
                ViolationCode::MissingObservation,
                offset,
                i,
                "search was not followed by an observation".into(),
            ),
            (Some(_), false) if turn.defect.is_none() => push(
                ViolationCode::UnexpectedObservation,
                offset,
                i,
                "observation attached to a step without a search".into(),
            ),
            _ => {}
        }
        if let Some(obs) = &turn.observation {
            offset += "<information>".len() + obs.information_text.len() + "</information>".len();
        }

        if turn.answer().is_some() {
            answered_at.get_or_insert(i);
        } else if !last && !searched && turn.defect.is_none() && !turn.actions.is_empty() {
            push(
                ViolationCode::IncompleteStep,
                offset,
                i,
                "step ended without a search or an answer".into(),
            );
        }
    }

    if !trajectory.is_complete() {
        push(
            ViolationCode::MissingAnswer,
            offset,
            turns.len().saturating_sub(1),
            "trajectory does not end in an answer".into(),
        );
    }
    if turns.len() > max_turns {
        push(
            ViolationCode::TurnBudgetExceeded,
            offset,
            turns.len() - 1,
            format!("{} turns exceed the budget of {max_turns}", turns.len()),
        );
    }

    out.sort_by_key(|v| (v.location, v.turn));
    FormatReport::from_violations(out)
}

fn check_actions(
    turn: &super::Turn,
    index: usize,
    turn_start: usize,
    profile: ValidationProfile,
    push: &mut impl FnMut(ViolationCode, usize, usize, String),
) {
    if turn.actions.is_empty() {
        push(
            ViolationCode::EmptyTurn,
            turn_start,
            index,
            "step has no actions".into(),
        );
        return;
    }

    let mut pos = turn_start;
    let mut searches = 0;
    let mut answers = 0;
    let mut terminal_seen = false;
    for (j, action) in turn.actions.iter().enumerate() {
        let tag = action.kind.tag();
        if terminal_seen {
            push(
                ViolationCode::TrailingAction,
                pos,
                index,
                format!("<{tag}> after the step's search/answer"),
            );
        }
        if action.text.trim().is_empty() {
            push(
                ViolationCode::EmptyContent,
                pos,
                index,
                format!("<{tag}> is empty"),
            );
        }
        if contains_protocol_tag(&action.text) {
            push(
                ViolationCode::NestedTag,
                pos,
                index,
                format!("<{tag}> content contains a protocol tag"),
            );
        }
        match action.kind {
            ActionKind::Search => searches += 1,
            ActionKind::Answer => answers += 1,
            ActionKind::Think => {}
        }
        if action.kind != ActionKind::Think {
            terminal_seen = true;
            if j == 0 && profile == ValidationProfile::Strict {
                push(
                    ViolationCode::ThinkRequired,
                    pos,
                    index,
                    format!("<{tag}> is not preceded by <think>"),
                );
            }
        }
        pos += 2 * tag.len() + 5 + action.text.len();
    }

    if searches > 0 && answers > 0 {
        push(
            ViolationCode::BothSearchAndAnswer,
            turn_start,
            index,
            "step contains both <search> and <answer>".into(),
        );
    }
    if searches > 1 || answers > 1 {
        push(
            ViolationCode::DuplicateAction,
            turn_start,
            index,
            "more than one <search> or <answer> in step".into(),
        );
    }
}

fn contains_protocol_tag(text: &str) -> bool {
    ["think", "search", "answer", "information"]
        .iter()
        .any(|t| text.contains(&format!("<{t}>")) || text.contains(&format!("</{t}>")))
}
