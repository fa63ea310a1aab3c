//! Parsing of knowledge-graph extraction responses into `(head, relation, tail)`
//! triples.
//!
//! Accepted noise:
//! - single, double, backtick-opened and typographic quotes;
//! - unescaped apostrophes inside an item (a quote only closes an item when the
//!   next non-space character is `,` or the end of the group) and `\'` escapes;
//! - numbered or bulleted list prefixes, surrounding prose, trailing punctuation,
//!   several triples on one line, and Python-style list brackets;
//! - a triple wrapped across lines (a line that ends inside an open parenthesis
//!   is joined with the following ones).
//!
//! A parenthesized group is "triplet-like" when it contains a quote character,
//! or when it is unquoted but leads its line. Triplet-like groups that do not
//! yield exactly three non-empty items are counted in `malformed`.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::write_file;
use crate::error::{Error, Result};

/// Longest run of physical lines folded into one logical line.
const MAX_FOLDED_LINES: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[String; 3]", into = "[String; 3]")]
pub struct Triple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl Triple {
    /// Builds a triple from trimmed fields; empty or multi-line fields are rejected.
    pub fn new(head: &str, relation: &str, tail: &str) -> Option<Self> {
        let clean = |s: &str| {
            let s = s.trim();
            (!s.is_empty() && !s.contains(['\n', '\r'])).then(|| s.to_string())
        };
        Some(Self {
            head: clean(head)?,
            relation: clean(relation)?,
            tail: clean(tail)?,
        })
    }

    pub fn fields(&self) -> [&str; 3] {
        [&self.head, &self.relation, &self.tail]
    }

    /// The canonical line format requested from the extractor.
    pub fn to_line(&self) -> String {
        let q = |s: &str| s.replace('\\', "\\\\").replace('\'', "\\'");
        format!(
            "('{}', '{}', '{}')",
            q(&self.head),
            q(&self.relation),
            q(&self.tail)
        )
    }
}

impl TryFrom<[String; 3]> for Triple {
    type Error = String;

    fn try_from([h, r, t]: [String; 3]) -> std::result::Result<Self, String> {
        Triple::new(&h, &r, &t).ok_or_else(|| format!("invalid triple ({h:?}, {r:?}, {t:?})"))
    }
}

impl From<Triple> for [String; 3] {
    fn from(t: Triple) -> Self {
        [t.head, t.relation, t.tail]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub doc_id: String,
    #[serde(rename = "none")]
    pub is_none: bool,
    pub triples: Vec<Triple>,
    #[serde(rename = "malformed")]
    pub malformed_lines: usize,
}

impl ExtractionResult {
    pub fn none(doc_id: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            is_none: true,
            triples: Vec::new(),
            malformed_lines: 0,
        }
    }
}

/// Parses an extraction response. Never fails; quality is reported through
/// `malformed_lines`.
pub fn parse_triples(response: &str, doc_id: &str) -> ExtractionResult {
    let mut result = ExtractionResult {
        doc_id: doc_id.to_string(),
        is_none: false,
        triples: Vec::new(),
        malformed_lines: 0,
    };
    if is_none_response(response) {
        result.is_none = true;
        return result;
    }
    for line in fold_lines(response) {
        for group in triplet_groups(&line) {
            let fields = if group.closed {
                parse_group(group.body)
            } else {
                None
            };
            match fields.and_then(|f| Triple::new(&f[0], &f[1], &f[2])) {
                Some(t) => result.triples.push(t),
                None => result.malformed_lines += 1,
            }
        }
    }
    result
}

fn is_none_response(response: &str) -> bool {
    let body = response.trim();
    let body = strip_matching_quotes(body);
    let body = body.strip_suffix('.').unwrap_or(body);
    body.eq_ignore_ascii_case("none")
}

fn strip_matching_quotes(s: &str) -> &str {
    for (open, close) in [('"', '"'), ('\'', '\''), ('“', '”'), ('`', '`')] {
        if let Some(inner) = s.strip_prefix(open).and_then(|r| r.strip_suffix(close)) {
            return inner.trim();
        }
    }
    s
}

/// Byte offsets of the parentheses of `line` that delimit groups. Parentheses
/// inside a quoted item (a quote that opens right after `(` or `,`) are skipped.
fn structural_parens(line: &str) -> Vec<(usize, char)> {
    let chars: Vec<(usize, char)> = line.char_indices().collect();
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut item_start = false;
    let mut k = 0;
    while k < chars.len() {
        let (i, c) = chars[k];
        if depth > 0 && item_start && is_quote(c) {
            // Skip to the closing quote of this item.
            let mut j = k + 1;
            while j < chars.len() {
                let d = chars[j].1;
                if d == '\\' {
                    j += 2;
                    continue;
                }
                if closes(c, d) {
                    let next = chars[j + 1..]
                        .iter()
                        .map(|p| p.1)
                        .find(|x| !x.is_whitespace());
                    if matches!(next, None | Some(',') | Some(')')) {
                        break;
                    }
                }
                j += 1;
            }
            k = j + 1;
            item_start = false;
            continue;
        }
        match c {
            '(' => {
                depth += 1;
                out.push((i, c));
                item_start = true;
            }
            ')' if depth > 0 => {
                depth -= 1;
                out.push((i, c));
                item_start = false;
            }
            ',' if depth > 0 => item_start = true,
            c if c.is_whitespace() => {}
            _ => item_start = false,
        }
        k += 1;
    }
    out
}

/// Joins physical lines so that no logical line ends inside an open parenthesis.
fn fold_lines(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut folded = 0;
    for line in text.lines() {
        if !current.is_empty() {
            current.push(' ');
            folded += 1;
        }
        current.push_str(line.trim());
        let mut depth: i64 = 0;
        for (_, c) in structural_parens(&current) {
            depth += if c == '(' { 1 } else { -1 };
        }
        if depth <= 0 || folded + 1 >= MAX_FOLDED_LINES {
            out.push(std::mem::take(&mut current));
            folded = 0;
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

fn is_quote(c: char) -> bool {
    matches!(c, '\'' | '"' | '`' | '‘' | '’' | '“' | '”')
}

struct Group<'a> {
    body: &'a str,
    closed: bool,
}

/// Top-level parenthesized groups of a logical line that look like triples.
/// Bodies exclude the outer parentheses.
fn triplet_groups(line: &str) -> Vec<Group<'_>> {
    let parens = structural_parens(line);
    let mut groups = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    let mut group_leading = false;
    let mut prev_end = 0usize;
    let mut leading = true;
    for (i, c) in parens {
        if depth == 0
            && !line[prev_end..i].chars().all(is_list_noise) {
                leading = false;
            }
        if c == '(' {
            if depth == 0 {
                start = i + 1;
                group_leading = leading;
            }
            depth += 1;
        } else {
            depth -= 1;
            if depth == 0 {
                let body = &line[start..i];
                if body.chars().any(is_quote) || (group_leading && body.contains(',')) {
                    groups.push(Group { body, closed: true });
                }
                leading = true;
                prev_end = i + 1;
            }
        }
    }
    // An unterminated trailing group that carries quotes counts as malformed.
    if depth > 0 {
        let body = &line[start..];
        if body.chars().any(is_quote) {
            groups.push(Group {
                body,
                closed: false,
            });
        }
    }
    groups
}

/// Characters that may precede a triple at the start of a line: bullets,
/// numbering, list brackets and separators.
fn is_list_noise(c: char) -> bool {
    c.is_whitespace()
        || c.is_ascii_digit()
        || matches!(
            c,
            '.' | '-' | '*' | '•' | '[' | ']' | ',' | ';' | ':' | '&' | '\\'
        )
}

/// Splits a group body into items. Quoted items end at a closing quote that is
/// followed by `,` or the end of the body; unquoted items end at the next comma.
fn parse_group(body: &str) -> Option<Vec<String>> {
    let chars: Vec<char> = body.chars().collect();
    let mut items = Vec::new();
    let mut i = 0;
    let n = chars.len();
    loop {
        while i < n && chars[i].is_whitespace() {
            i += 1;
        }
        if i >= n {
            break;
        }
        if is_quote(chars[i]) {
            let open = chars[i];
            i += 1;
            let mut item = String::new();
            let mut closed = false;
            while i < n {
                let c = chars[i];
                if c == '\\' && i + 1 < n {
                    item.push(chars[i + 1]);
                    i += 2;
                    continue;
                }
                if closes(open, c) {
                    let mut j = i + 1;
                    while j < n && chars[j].is_whitespace() {
                        j += 1;
                    }
                    if j >= n || chars[j] == ',' {
                        i = j;
                        closed = true;
                        break;
                    }
                }
                item.push(c);
                i += 1;
            }
            if !closed {
                return None;
            }
            items.push(item);
        } else {
            let mut item = String::new();
            while i < n && chars[i] != ',' {
                item.push(chars[i]);
                i += 1;
            }
            items.push(item.trim().to_string());
        }
        // At a separating comma or the end.
        if i < n && chars[i] == ',' {
            i += 1;
            if i >= n {
                // Trailing comma as in `('a', 'b', 'c',)`.
                break;
            }
        }
    }
    (items.len() == 3).then_some(items)
}

fn closes(open: char, c: char) -> bool {
    match open {
        '\'' | '`' | '‘' | '’' => matches!(c, '\'' | '’' | '`'),
        '"' | '“' | '”' => matches!(c, '"' | '”'),
        _ => false,
    }
}

/// Writes one JSON object per result. Document ids must be unique.
pub fn write_triples(results: &[ExtractionResult], path: &Path) -> Result<()> {
    let mut seen = HashSet::new();
    let mut out = String::new();
    for r in results {
        if !seen.insert(r.doc_id.as_str()) {
            return Err(Error::Argument(format!(
                "duplicate doc_id {:?} in triples",
                r.doc_id
            )));
        }
        out.push_str(&serde_json::to_string(r).expect("extraction results serialize"));
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

pub fn read_triples(path: &Path) -> Result<Vec<ExtractionResult>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut results = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: ExtractionResult = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("{}: line {}: {e}", path.display(), i + 1)))?;
        if r.is_none && !r.triples.is_empty() {
            return Err(Error::Format(format!(
                "{}: line {}: record marked none but has triples",
                path.display(),
                i + 1
            )));
        }
        results.push(r);
    }
    Ok(results)
}
