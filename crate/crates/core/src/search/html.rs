//! HTML to plain text with boilerplate removal.
//!
//! Deliberately small: a tag scanner, a skip list for chrome elements
//! (navigation, headers, footers, scripts, forms), class/id heuristics for
//! sidebars and banners, and an `<article>`/`<main>` focus when the page
//! has one. Block-level elements become line breaks.

const SKIP_ELEMENTS: &[&str] = &[
    "script", "style", "noscript", "template", "svg", "nav", "header", "footer", "aside", "form",
    "button", "select", "iframe", "head", "menu", "dialog",
];

const VOID_ELEMENTS: &[&str] = &[
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta", "source", "track",
    "wbr",
];

const BLOCK_ELEMENTS: &[&str] = &[
    "address", "article", "blockquote", "br", "dd", "div", "dl", "dt", "figcaption", "figure",
    "h1", "h2", "h3", "h4", "h5", "h6", "hr", "li", "main", "ol", "p", "pre", "section", "table",
    "tbody", "td", "th", "thead", "tr", "ul",
];

/// Words in a class or id that mark page chrome.
const BOILERPLATE_MARKERS: &[&str] = &[
    "nav", "navbar", "menu", "footer", "sidebar", "breadcrumb", "breadcrumbs", "cookie", "cookies",
    "banner", "advert", "ad", "ads", "share", "social", "related", "subscribe", "newsletter",
    "popup", "toolbar", "pagination",
];

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token<'a> {
    Open {
        name: String,
        attrs: &'a str,
        self_closing: bool,
    },
    Close {
        name: String,
    },
    Text(&'a str),
}

fn tokenize(html: &str) -> Vec<Token<'_>> {
    let bytes = html.as_bytes();
    let mut out = Vec::new();
    let mut pos = 0;
    let mut text_start = 0;
    while pos < bytes.len() {
        if bytes[pos] != b'<' {
            pos += 1;
            continue;
        }
        let rest = &html[pos..];
        let (len, tok) = if rest.starts_with("<!--") {
            (rest.find("-->").map_or(rest.len(), |i| i + 3), None)
        } else if rest.starts_with("<!") || rest.starts_with("<?") {
            (rest.find('>').map_or(rest.len(), |i| i + 1), None)
        } else {
            match lex_tag(rest) {
                Some((tok, len)) => (len, Some(tok)),
                None => {
                    pos += 1;
                    continue;
                }
            }
        };
        if text_start < pos {
            out.push(Token::Text(&html[text_start..pos]));
        }
        out.extend(tok);
        pos += len;
        text_start = pos;
    }
    if text_start < html.len() {
        out.push(Token::Text(&html[text_start..]));
    }
    out
}

fn lex_tag(s: &str) -> Option<(Token<'_>, usize)> {
    let bytes = s.as_bytes();
    let mut i = 1;
    let closing = bytes.get(i) == Some(&b'/');
    if closing {
        i += 1;
    }
    let name_start = i;
    while bytes.get(i).is_some_and(|b| b.is_ascii_alphanumeric()) {
        i += 1;
    }
    if i == name_start || !bytes[name_start].is_ascii_alphabetic() {
        return None;
    }
    let name = s[name_start..i].to_ascii_lowercase();
    // Scan to the closing '>' while respecting quoted attribute values.
    let attrs_start = i;
    let mut quote = None;
    while let Some(&b) = bytes.get(i) {
        match (quote, b) {
            (Some(q), b) if b == q => quote = None,
            (None, b'"' | b'\'') => quote = Some(b),
            (None, b'>') => break,
            _ => {}
        }
        i += 1;
    }
    if i >= bytes.len() {
        return None;
    }
    let attrs = &s[attrs_start..i];
    let tok = if closing {
        Token::Close { name }
    } else {
        Token::Open {
            self_closing: attrs.trim_end().ends_with('/'),
            name,
            attrs,
        }
    };
    Some((tok, i + 1))
}

fn attr_value<'a>(attrs: &'a str, key: &str) -> Option<&'a str> {
    let lower = attrs.to_ascii_lowercase();
    let mut from = 0;
    while let Some(rel) = lower[from..].find(key) {
        let at = from + rel;
        from = at + key.len();
        let boundary = at == 0 || lower.as_bytes()[at - 1].is_ascii_whitespace();
        let rest = lower[from..].trim_start();
        if !boundary || !rest.starts_with('=') {
            continue;
        }
        let value_at = attrs.len() - rest.len() + 1;
        let raw = attrs[value_at..].trim_start();
        return Some(match raw.chars().next() {
            Some(q @ ('"' | '\'')) => {
                let body = &raw[1..];
                &body[..body.find(q).unwrap_or(body.len())]
            }
            _ => &raw[..raw.find(|c: char| c.is_whitespace()).unwrap_or(raw.len())],
        });
    }
    None
}

fn looks_like_boilerplate(attrs: &str) -> bool {
    ["class", "id", "role"].iter().any(|key| {
        attr_value(attrs, key).is_some_and(|v| {
            v.to_ascii_lowercase()
                .split(|c: char| !c.is_ascii_alphanumeric())
                .any(|w| BOILERPLATE_MARKERS.contains(&w) || w == "navigation" || w == "contentinfo")
        })
    })
}

/// Text of the first `<title>` element, if any.
pub fn extract_title(html: &str) -> Option<String> {
    let tokens = tokenize(html);
    let start = tokens
        .iter()
        .position(|t| matches!(t, Token::Open { name, .. } if name == "title"))?;
    let mut title = String::new();
    for t in &tokens[start + 1..] {
        match t {
            Token::Text(s) => title.push_str(s),
            _ => break,
        }
    }
    let title = collapse_ws(&decode_entities(&title));
    (!title.is_empty()).then_some(title)
}

/// Boilerplate-free text of an HTML document, one block per line.
pub fn html_to_text(html: &str) -> String {
    let tokens = tokenize(html);
    let tokens = focus(&tokens);
    let mut out = String::new();
    // Name of the element being skipped and how deeply it is nested.
    let mut skipping: Option<(String, usize)> = None;
    for tok in tokens {
        if let Some((skip_name, depth)) = &mut skipping {
            match tok {
                Token::Open {
                    name, self_closing, ..
                } if name == skip_name && !self_closing => *depth += 1,
                Token::Close { name } if name == skip_name => {
                    *depth -= 1;
                    if *depth == 0 {
                        skipping = None;
                        out.push('\n');
                    }
                }
                _ => {}
            }
            continue;
        }
        match tok {
            Token::Open {
                name,
                attrs,
                self_closing,
            } => {
                let void = VOID_ELEMENTS.contains(&name.as_str()) || *self_closing;
                if !void && (SKIP_ELEMENTS.contains(&name.as_str()) || looks_like_boilerplate(attrs))
                {
                    skipping = Some((name.clone(), 1));
                } else if BLOCK_ELEMENTS.contains(&name.as_str()) {
                    out.push('\n');
                }
            }
            Token::Close { name } => {
                if BLOCK_ELEMENTS.contains(&name.as_str()) {
                    out.push('\n');
                }
            }
            Token::Text(s) => out.push_str(s),
        }
    }
    decode_entities(&out)
        .lines()
        .map(collapse_ws)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Restricts the token stream to the first `<article>` or, failing that,
/// the first `<main>` element.
fn focus<'t, 'a>(tokens: &'t [Token<'a>]) -> &'t [Token<'a>] {
    for wanted in ["article", "main"] {
        let Some(start) = tokens
            .iter()
            .position(|t| matches!(t, Token::Open { name, .. } if name == wanted))
        else {
            continue;
        };
        let mut depth = 0usize;
        for (i, t) in tokens.iter().enumerate().skip(start) {
            match t {
                Token::Open { name, .. } if name == wanted => depth += 1,
                Token::Close { name } if name == wanted => {
                    depth -= 1;
                    if depth == 0 {
                        return &tokens[start..=i];
                    }
                }
                _ => {}
            }
        }
        return &tokens[start..];
    }
    tokens
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Decodes the common named entities plus numeric references.
pub fn decode_entities(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        let after = &rest[amp + 1..];
        let decoded = after.find(';').filter(|&semi| semi <= 10).and_then(|semi| {
            let entity = &after[..semi];
            let c = match entity {
                "amp" => Some('&'),
                "lt" => Some('<'),
                "gt" => Some('>'),
                "quot" => Some('"'),
                "apos" => Some('\''),
                "nbsp" => Some(' '),
                "mdash" => Some('\u{2014}'),
                "ndash" => Some('–'),
                "hellip" => Some('…'),
                "copy" => Some('©'),
                "sect" => Some('\u{a7}'),
                _ => entity
                    .strip_prefix("#x")
                    .or_else(|| entity.strip_prefix("#X"))
                    .and_then(|h| u32::from_str_radix(h, 16).ok())
                    .or_else(|| entity.strip_prefix('#').and_then(|d| d.parse().ok()))
                    .and_then(char::from_u32),
            };
            c.map(|c| (c, semi))
        });
        match decoded {
            Some((c, semi)) => {
                out.push(c);
                rest = &after[semi + 1..];
            }
            None => {
                out.push('&');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}
