//! Labeled text corpora: one document per line in a text file, with a
//! parallel `<id>\t<split>\t<label>` metadata file.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    fn parse(token: &str) -> Option<Self> {
        match token {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub raw_text: String,
    pub refined_text: Option<String>,
    pub split: Split,
    pub label: Option<String>,
}

impl Document {
    /// Refined text when present, otherwise the raw text.
    pub fn display_text(&self) -> &str {
        self.refined_text.as_deref().unwrap_or(&self.raw_text)
    }

    pub fn is_train(&self) -> bool {
        self.split == Split::Train
    }
}

/// Ordered, duplicate-free label names. The position of a name is its class id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSet {
    names: Vec<String>,
}

impl LabelSet {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Argument("label set must not be empty".into()));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if name.is_empty() {
                return Err(Error::Argument("label names must be non-empty".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::Argument(format!("duplicate label {name:?}")));
            }
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, class: usize) -> Option<&str> {
        self.names.get(class).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

impl TryFrom<Vec<String>> for LabelSet {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        LabelSet::new(names)
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(labels: LabelSet) -> Self {
        labels.names
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    documents: Vec<Document>,
    labels: LabelSet,
}

impl Corpus {
    /// Validates document invariants and label membership.
    pub fn new(documents: Vec<Document>, labels: LabelSet) -> Result<Self> {
        let mut ids = HashSet::new();
        for (i, doc) in documents.iter().enumerate() {
            if doc.id.is_empty() {
                return Err(Error::Format(format!("document {} has an empty id", i + 1)));
            }
            if !ids.insert(doc.id.as_str()) {
                return Err(Error::Format(format!("duplicate document id {:?}", doc.id)));
            }
            if doc.raw_text.is_empty() {
                return Err(Error::Format(format!(
                    "document {:?} has empty text",
                    doc.id
                )));
            }
            match &doc.label {
                None if doc.is_train() => {
                    return Err(Error::Format(format!(
                        "training document {:?} has no label",
                        doc.id
                    )))
                }
                Some(label) if labels.index_of(label).is_none() => {
                    return Err(Error::Format(format!(
                        "document {:?} has label {label:?} outside the label set",
                        doc.id
                    )))
                }
                _ => {}
            }
        }
        Ok(Self { documents, labels })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }

    pub fn train(&self) -> impl Iterator<Item = &Document> {
        self.documents.iter().filter(|d| d.is_train())
    }

    pub fn test(&self) -> impl Iterator<Item = &Document> {
        self.documents.iter().filter(|d| !d.is_train())
    }

    pub fn train_len(&self) -> usize {
        self.train().count()
    }

    /// Gold class id of a document, if labeled.
    pub fn class_of(&self, doc: &Document) -> Option<usize> {
        doc.label.as_deref().and_then(|l| self.labels.index_of(l))
    }

    /// Errors unless the corpus has at least one train and one test document.
    pub fn require_end_to_end(&self) -> Result<()> {
        if self.train().next().is_none() || self.test().next().is_none() {
            return Err(Error::Format(
                "corpus needs at least one train and one test document".into(),
            ));
        }
        Ok(())
    }

    /// Attaches refined texts keyed by document id. Unknown ids are rejected.
    pub fn attach_refined(&mut self, refined: &HashMap<String, String>) -> Result<()> {
        let known: HashSet<&str> = self.documents.iter().map(|d| d.id.as_str()).collect();
        if let Some(unknown) = refined.keys().find(|k| !known.contains(k.as_str())) {
            return Err(Error::Argument(format!(
                "refined text for unknown document {unknown:?}"
            )));
        }
        for doc in &mut self.documents {
            if let Some(text) = refined.get(&doc.id) {
                doc.refined_text = Some(text.clone());
            }
        }
        Ok(())
    }

    /// Keeps the documents matching `keep`, preserving order and the label set.
    pub fn filtered(&self, keep: impl Fn(&Document) -> bool) -> Corpus {
        Corpus {
            documents: self.documents.iter().filter(|d| keep(d)).cloned().collect(),
            labels: self.labels.clone(),
        }
    }

    /// Writes the corpus back to the text/meta pair format.
    pub fn write(&self, text_path: &Path, meta_path: &Path) -> Result<()> {
        let mut text = String::new();
        let mut meta = String::new();
        for doc in &self.documents {
            if doc.raw_text.contains('\n') {
                return Err(Error::Argument(format!(
                    "document {:?} contains a line break and cannot be serialized",
                    doc.id
                )));
            }
            text.push_str(&doc.raw_text);
            text.push('\n');
            meta.push_str(&format!(
                "{}\t{}\t{}\n",
                doc.id,
                doc.split,
                doc.label.as_deref().unwrap_or("")
            ));
        }
        write_file(text_path, text.as_bytes())?;
        write_file(meta_path, meta.as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct RefinedRecord {
    id: String,
    text: String,
}

/// Writes refined texts as JSONL `{"id", "text"}` records in the given order.
pub fn write_refined(records: &[(String, String)], path: &Path) -> Result<()> {
    let mut out = String::new();
    for (id, text) in records {
        let rec = RefinedRecord {
            id: id.clone(),
            text: text.clone(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("refined record serializes"));
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

pub fn read_refined(path: &Path) -> Result<HashMap<String, String>> {
    let mut map = HashMap::new();
    for (i, line) in read_file(path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: RefinedRecord = serde_json::from_str(line)
            .map_err(|e| Error::Format(format!("{}: line {}: {e}", path.display(), i + 1)))?;
        if rec.text.is_empty() {
            return Err(Error::Format(format!(
                "{}: line {}: empty refined text",
                path.display(),
                i + 1
            )));
        }
        if map.insert(rec.id.clone(), rec.text).is_some() {
            return Err(Error::Format(format!(
                "{}: duplicate id {:?}",
                path.display(),
                rec.id
            )));
        }
    }
    Ok(map)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads and validates a corpus. The label set is the sorted set of distinct
/// labels appearing in the metadata.
pub fn load_corpus(text_path: &Path, meta_path: &Path) -> Result<Corpus> {
    let text = read_file(text_path)?;
    let meta = read_file(meta_path)?;
    parse_corpus(&text, &meta)
}

pub fn parse_corpus(text: &str, meta: &str) -> Result<Corpus> {
    let text_lines: Vec<&str> = text.lines().collect();
    let meta_lines: Vec<&str> = meta.lines().collect();
    if text_lines.len() != meta_lines.len() {
        return Err(Error::Format(format!(
            "metadata has {} lines but text has {} lines",
            meta_lines.len(),
            text_lines.len()
        )));
    }

    let mut documents = Vec::with_capacity(text_lines.len());
    let mut label_names = BTreeSet::new();
    for (i, (raw, meta_line)) in text_lines.iter().zip(&meta_lines).enumerate() {
        let line_no = i + 1;
        if raw.trim().is_empty() {
            return Err(Error::Format(format!(
                "empty document on text line {line_no}"
            )));
        }
        let fields: Vec<&str> = meta_line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Format(format!(
                "metadata line {line_no}: expected 3 tab-separated fields, found {}",
                fields.len()
            )));
        }
        let split = Split::parse(fields[1]).ok_or_else(|| {
            Error::Format(format!(
                "metadata line {line_no}: unknown split {:?} (expected train or test)",
                fields[1]
            ))
        })?;
        let label = (!fields[2].is_empty()).then(|| fields[2].to_string());
        if let Some(l) = &label {
            label_names.insert(l.clone());
        }
        documents.push(Document {
            id: fields[0].to_string(),
            raw_text: raw.to_string(),
            refined_text: None,
            split,
            label,
        });
    }

    let labels = LabelSet::new(label_names.into_iter().collect())
        .map_err(|_| Error::Format("metadata contains no labels".into()))?;
    Corpus::new(documents, labels)
}

/// Returns a corpus whose train split is a uniform random subset of size `k`.
/// Test documents are unchanged and document order is preserved.
pub fn subsample_train(corpus: &Corpus, k: usize, seed: u64) -> Result<Corpus> {
    let train_ids: Vec<&str> = corpus.train().map(|d| d.id.as_str()).collect();
    if k == 0 {
        return Err(Error::Argument("subsample size must be positive".into()));
    }
    if k > train_ids.len() {
        return Err(Error::Argument(format!(
            "subsample size {k} exceeds the {} training documents",
            train_ids.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: HashSet<&str> = index::sample(&mut rng, train_ids.len(), k)
        .into_iter()
        .map(|i| train_ids[i])
        .collect();
    Ok(corpus.filtered(|d| !d.is_train() || chosen.contains(d.id.as_str())))
}

/// Splits off a seeded fraction of the training ids for validation.
/// Returns `(fit_ids, validation_ids)`; both keep corpus order.
pub fn validation_split(
    corpus: &Corpus,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Argument(format!(
            "validation fraction {fraction} outside [0, 1)"
        )));
    }
    let train: Vec<&str> = corpus.train().map(|d| d.id.as_str()).collect();
    let n_val = (fraction * train.len() as f64).round() as usize;
    let n_val = n_val.min(train.len().saturating_sub(1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let val: HashSet<usize> = index::sample(&mut rng, train.len(), n_val)
        .into_iter()
        .collect();
    let (mut fit, mut held) = (Vec::new(), Vec::new());
    for (i, id) in train.iter().enumerate() {
        if val.contains(&i) {
            held.push(id.to_string());
        } else {
            fit.push(id.to_string());
        }
    }
    Ok((fit, held))
}
