//! Canonical answer labels.
//!
//! Choice answers become sorted, de-duplicated uppercase option letters
//! (`"DCA"` → `"ACD"`); anything that carries no option letter passes through
//! trimmed. Two answers are equal iff their normalized labels are equal.

const OPTION_LETTERS: [char; 4] = ['A', 'B', 'C', 'D'];

fn is_separator(c: char) -> bool {
    c.is_whitespace() || matches!(c, ',' | '，' | '、' | ';' | '；' | '/' | '&' | '+' | '.' | '。')
}

fn letters_to_label(mut letters: Vec<char>) -> String {
    letters.sort_unstable();
    letters.dedup();
    letters.into_iter().collect()
}

/// The whole string is option letters (either case) plus separators.
fn bare_option_list(s: &str) -> Option<String> {
    let mut letters = Vec::new();
    for c in s.chars() {
        let upper = c.to_ascii_uppercase();
        if OPTION_LETTERS.contains(&upper) {
            letters.push(upper);
        } else if !is_separator(c) {
            return None;
        }
    }
    (!letters.is_empty()).then(|| letters_to_label(letters))
}

/// Uppercase option letters standing on their own inside running text,
/// e.g. `答案是 B` or `选AC`. Runs of ASCII letters count only when every
/// letter is A–D; a lone `A` followed by a lowercase word is an article.
fn embedded_options(s: &str) -> Option<String> {
    let chars: Vec<char> = s.chars().collect();
    let mut letters = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_ascii_alphanumeric() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && chars[i].is_ascii_alphanumeric() {
            i += 1;
        }
        let run = &chars[start..i];
        if run.len() > OPTION_LETTERS.len() || !run.iter().all(|c| OPTION_LETTERS.contains(c)) {
            continue;
        }
        let article = run == ['A']
            && chars.get(i) == Some(&' ')
            && chars.get(i + 1).is_some_and(|c| c.is_ascii_lowercase());
        if !article {
            letters.extend_from_slice(run);
        }
    }
    (!letters.is_empty()).then(|| letters_to_label(letters))
}

/// Normalizes the text of an answer action into a comparable label.
pub fn normalize_answer(raw: &str) -> String {
    let trimmed = raw.trim();
    bare_option_list(trimmed)
        .or_else(|| embedded_options(trimmed))
        .unwrap_or_else(|| trimmed.to_string())
}

/// True when `label` is a non-empty sorted set of option letters.
pub fn is_option_label(label: &str) -> bool {
    !label.is_empty()
        && label.chars().all(|c| OPTION_LETTERS.contains(&c))
        && normalize_answer(label) == label
}
