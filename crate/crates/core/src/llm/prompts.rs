//! Prompt templates. Bodies live in versioned resource files under `prompts/`
//! and are rendered by single-pass placeholder substitution, so inserted text
//! is never re-scanned for placeholders.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{read_file, Document, LabelSet};
use crate::error::{Error, Result};

pub const TEXT_PLACEHOLDER: &str = "[x]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Refine,
    ExtractKg,
    Classify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptTemplate {
    pub kind: PromptKind,
    pub version: u32,
    pub body: &'static str,
}

pub const REFINE: PromptTemplate = PromptTemplate {
    kind: PromptKind::Refine,
    version: 1,
    body: include_str!("../../prompts/refine.v1.txt"),
};

pub const EXTRACT_KG: PromptTemplate = PromptTemplate {
    kind: PromptKind::ExtractKg,
    version: 1,
    body: include_str!("../../prompts/extract_kg.v1.txt"),
};

pub const CLASSIFY: PromptTemplate = PromptTemplate {
    kind: PromptKind::Classify,
    version: 1,
    body: include_str!("../../prompts/classify.v1.txt"),
};

const GOOD_SHOT: &str = include_str!("../../prompts/classify_good_shot.v1.txt");
const BAD_SHOT: &str = include_str!("../../prompts/classify_bad_shot.v1.txt");

pub const SUPPORTED_SHOTS: [usize; 4] = [0, 1, 2, 5];

impl PromptTemplate {
    /// Text before and after the `[x]` placeholder.
    pub fn split(&self) -> (&'static str, &'static str) {
        self.body
            .split_once(TEXT_PLACEHOLDER)
            .expect("template has a text placeholder")
    }

    /// Recovers the inserted text from a prompt rendered with this template.
    /// Classify prompts carry variable text before the placeholder, so only
    /// their fixed opening is checked.
    pub fn extract_text<'a>(&self, prompt: &'a str) -> Option<&'a str> {
        let (before, after) = self.split();
        match self.kind {
            PromptKind::Classify => {
                let opening = before.split("[labels]").next().unwrap_or(before);
                if !prompt.starts_with(opening) {
                    return None;
                }
                let marker = "###Input###:\n";
                let start = prompt.rfind(marker)? + marker.len();
                prompt[start..].strip_suffix(after)
            }
            _ => prompt.strip_prefix(before)?.strip_suffix(after),
        }
    }
}

/// Substitutes each `(placeholder, value)` where it occurs in `template`,
/// scanning the template once.
fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out =
        String::with_capacity(template.len() + values.iter().map(|v| v.1.len()).sum::<usize>());
    let mut rest = template;
    'scan: while !rest.is_empty() {
        for (key, value) in values {
            if let Some(tail) = rest.strip_prefix(key) {
                out.push_str(value);
                rest = tail;
                continue 'scan;
            }
        }
        let c = rest.chars().next().expect("non-empty");
        out.push(c);
        rest = &rest[c.len_utf8()..];
    }
    out
}

pub fn render_refine_prompt(doc: &Document) -> Result<String> {
    if doc.raw_text.is_empty() {
        return Err(Error::Argument(format!(
            "document {:?} has empty text",
            doc.id
        )));
    }
    Ok(fill(REFINE.body, &[(TEXT_PLACEHOLDER, &doc.raw_text)]))
}

pub fn render_extract_prompt(refined: &str) -> Result<String> {
    if refined.is_empty() {
        return Err(Error::Argument(
            "cannot build an extraction prompt for empty text".into(),
        ));
    }
    Ok(fill(EXTRACT_KG.body, &[(TEXT_PLACEHOLDER, refined)]))
}

/// One in-prompt example: the same text shown with a label from the set
/// (good) and with one outside it (bad).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotExample {
    pub text: String,
    pub good_label: String,
    pub bad_label: String,
}

pub fn load_shot_bank(path: &Path) -> Result<Vec<ShotExample>> {
    read_file(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::Format(format!("{}: line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Python-style list literal, e.g. `['acq', 'crude']`.
pub fn label_list(labels: &LabelSet) -> String {
    let items: Vec<String> = labels
        .names()
        .iter()
        .map(|n| format!("'{}'", n.replace('\\', "\\\\").replace('\'', "\\'")))
        .collect();
    format!("[{}]", items.join(", "))
}

/// Examples alternate good and bad, starting with good: 1 shot is one good
/// example, 2 shots a good and a bad example of the same text, 5 shots three
/// good and two bad drawn from three bank entries.
pub fn render_classify_prompt(
    doc: &Document,
    labels: &LabelSet,
    shots: usize,
    shot_bank: &[ShotExample],
) -> Result<String> {
    if !SUPPORTED_SHOTS.contains(&shots) {
        return Err(Error::Argument(format!(
            "shots must be one of {SUPPORTED_SHOTS:?}, got {shots}"
        )));
    }
    let needed = shots.div_ceil(2);
    if shot_bank.len() < needed {
        return Err(Error::Argument(format!(
            "{shots}-shot prompts need {needed} shot examples, bank has {}",
            shot_bank.len()
        )));
    }
    let mut examples = String::new();
    for k in 0..shots {
        let ex = &shot_bank[k / 2];
        let (block, label) = if k % 2 == 0 {
            (GOOD_SHOT, &ex.good_label)
        } else {
            (BAD_SHOT, &ex.bad_label)
        };
        examples.push_str(&fill(block, &[("[text]", &ex.text), ("[label]", label)]));
    }
    let list = label_list(labels);
    Ok(fill(
        CLASSIFY.body,
        &[
            ("[labels]", &list),
            ("[shots]", &examples),
            (TEXT_PLACEHOLDER, &doc.raw_text),
        ],
    ))
}
