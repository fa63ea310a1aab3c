use std::collections::{BTreeMap, HashMap, HashSet};

use log::warn;
use serde::{Deserialize, Serialize};

use super::{tokenize, triple_tokens, BuildOptions, CsrMatrix, Vocabulary};
use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::tripleparse::ExtractionResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PoolingMode {
    Binary,
    Tfidf,
}

/// Which token stream decides that a word "appears" in a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Membership {
    /// Tokens of the document's extracted triples.
    Triples,
    /// Tokens of the refined text (raw text when no refinement exists).
    Refined,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolingStats {
    /// Token occurrences dropped because they are not graph nodes.
    pub oov_dropped: usize,
    pub none_docs: usize,
    /// Vocabulary tokens whose document frequency was floored at 1.
    pub idf_floored: usize,
}

/// Document-by-word pooling matrix `S`, one row per corpus document.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolingMatrix {
    pub(crate) doc_ids: Vec<String>,
    pub(crate) matrix: CsrMatrix,
    pub(crate) mode: PoolingMode,
    pub(crate) vocab_digest: String,
    pub(crate) idf: Option<Vec<f64>>,
    pub(crate) stats: PoolingStats,
}

impl PoolingMatrix {
    pub fn new(
        doc_ids: Vec<String>,
        matrix: CsrMatrix,
        mode: PoolingMode,
        vocab_digest: String,
        idf: Option<Vec<f64>>,
    ) -> Result<Self> {
        if doc_ids.len() != matrix.n_rows() {
            return Err(Error::Consistency(format!(
                "{} row ids for a matrix with {} rows",
                doc_ids.len(),
                matrix.n_rows()
            )));
        }
        if matrix.values().iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Consistency(
                "pooling weights must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            doc_ids,
            matrix,
            mode,
            vocab_digest,
            idf,
            stats: PoolingStats::default(),
        })
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn mode(&self) -> PoolingMode {
        self.mode
    }

    pub fn vocab_digest(&self) -> &str {
        &self.vocab_digest
    }

    /// Frozen idf per vocabulary token (tfidf mode only).
    pub fn idf(&self) -> Option<&[f64]> {
        self.idf.as_deref()
    }

    pub fn stats(&self) -> PoolingStats {
        self.stats
    }

    pub fn n_rows(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn row_index(&self, doc_id: &str) -> Option<usize> {
        self.doc_ids.iter().position(|d| d == doc_id)
    }

    /// Keeps the named rows, in the given order.
    pub fn select(&self, doc_ids: &[String]) -> Result<PoolingMatrix> {
        let lookup: HashMap<&str, usize> = self
            .doc_ids
            .iter()
            .enumerate()
            .map(|(i, d)| (d.as_str(), i))
            .collect();
        let rows = doc_ids
            .iter()
            .map(|d| {
                lookup
                    .get(d.as_str())
                    .copied()
                    .ok_or_else(|| Error::Argument(format!("document {d:?} has no pooling row")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PoolingMatrix {
            doc_ids: doc_ids.to_vec(),
            matrix: self.matrix.select_rows(&rows),
            mode: self.mode,
            vocab_digest: self.vocab_digest.clone(),
            idf: self.idf.clone(),
            stats: self.stats,
        })
    }

    /// Multiplies every weight by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> PoolingMatrix {
        PoolingMatrix {
            matrix: self.matrix.map_values(|_, _, v| v * factor),
            ..self.clone()
        }
    }
}

/// Token stream of a document under the given membership rule.
pub fn document_stream(
    result: &ExtractionResult,
    doc: &Document,
    membership: Membership,
) -> Vec<String> {
    if result.is_none {
        return Vec::new();
    }
    match membership {
        Membership::Triples => result.triples.iter().flat_map(triple_tokens).collect(),
        Membership::Refined => tokenize(doc.display_text()),
    }
}

/// Term frequency `count(token) / |stream|`.
pub fn tf(token: &str, stream: &[String]) -> Result<f64> {
    if stream.is_empty() {
        return Err(Error::Argument("term frequency of an empty stream".into()));
    }
    let count = stream.iter().filter(|t| *t == token).count();
    Ok(count as f64 / stream.len() as f64)
}

/// Inverse document frequency `ln(|streams| / df(token))`. A token that occurs
/// in no stream is given `df = 1` and logged.
pub fn idf(token: &str, streams: &[Vec<String>]) -> Result<f64> {
    if streams.is_empty() {
        return Err(Error::Argument(
            "inverse document frequency over zero documents".into(),
        ));
    }
    let df = streams
        .iter()
        .filter(|s| s.iter().any(|t| t == token))
        .count();
    if df == 0 {
        warn!(
            "idf: token {token:?} unseen in {} documents; df floored at 1",
            streams.len()
        );
    }
    Ok((streams.len() as f64 / df.max(1) as f64).ln())
}

/// Pooling weights for one token stream. Returns sorted `(node, weight)` pairs
/// and the number of out-of-vocabulary occurrences dropped.
pub fn pooling_row(
    stream: &[String],
    vocab: &Vocabulary,
    mode: PoolingMode,
    idf: Option<&[f64]>,
) -> Result<(Vec<(usize, f64)>, usize)> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    let mut oov = 0;
    for token in stream {
        match vocab.id(token) {
            Some(id) => *counts.entry(id).or_default() += 1,
            None => oov += 1,
        }
    }
    let row = match mode {
        PoolingMode::Binary => counts.into_keys().map(|id| (id, 1.0)).collect(),
        PoolingMode::Tfidf => {
            let idf =
                idf.ok_or_else(|| Error::Argument("tfidf pooling needs idf weights".into()))?;
            if idf.len() != vocab.len() {
                return Err(Error::Consistency(format!(
                    "{} idf weights for {} tokens",
                    idf.len(),
                    vocab.len()
                )));
            }
            let len = stream.len() as f64;
            counts
                .into_iter()
                .map(|(id, c)| (id, c as f64 / len * idf[id]))
                .collect()
        }
    };
    Ok((row, oov))
}

/// Builds `S` with one row per corpus document in corpus order. Document
/// frequencies come from training documents only, or from all documents in
/// transductive mode.
pub fn build_pooling(
    results: &[ExtractionResult],
    corpus: &Corpus,
    vocab: &Vocabulary,
    options: BuildOptions,
) -> Result<PoolingMatrix> {
    let by_id: HashMap<&str, &ExtractionResult> =
        results.iter().map(|r| (r.doc_id.as_str(), r)).collect();
    let mut streams = Vec::with_capacity(corpus.len());
    let mut stats = PoolingStats::default();
    for doc in corpus.documents() {
        let result = by_id.get(doc.id.as_str()).ok_or_else(|| {
            Error::Argument(format!("no extraction result for document {:?}", doc.id))
        })?;
        if result.is_none {
            stats.none_docs += 1;
        }
        streams.push(document_stream(result, doc, options.membership));
    }

    let idf = match options.mode {
        PoolingMode::Binary => None,
        PoolingMode::Tfidf => {
            let stat_docs: Vec<&Vec<String>> = corpus
                .documents()
                .iter()
                .zip(&streams)
                .filter(|(d, _)| options.transductive || d.is_train())
                .map(|(_, s)| s)
                .collect();
            if stat_docs.is_empty() {
                return Err(Error::Argument(
                    "tfidf statistics need at least one document".into(),
                ));
            }
            let mut df = vec![0usize; vocab.len()];
            for stream in &stat_docs {
                let seen: HashSet<usize> = stream.iter().filter_map(|t| vocab.id(t)).collect();
                for id in seen {
                    df[id] += 1;
                }
            }
            let n = stat_docs.len() as f64;
            let weights = df
                .iter()
                .enumerate()
                .map(|(id, &d)| {
                    if d == 0 {
                        stats.idf_floored += 1;
                        warn!(
                            "idf: token {:?} absent from statistics documents; df floored at 1",
                            vocab.token(id)
                        );
                    }
                    (n / d.max(1) as f64).ln()
                })
                .collect::<Vec<f64>>();
            Some(weights)
        }
    };

    let mut rows = Vec::with_capacity(streams.len());
    for stream in &streams {
        let (row, oov) = pooling_row(stream, vocab, options.mode, idf.as_deref())?;
        stats.oov_dropped += oov;
        rows.push(row);
    }
    Ok(PoolingMatrix {
        doc_ids: corpus.documents().iter().map(|d| d.id.clone()).collect(),
        matrix: CsrMatrix::from_rows(vocab.len(), rows),
        mode: options.mode,
        vocab_digest: vocab.digest(),
        idf,
        stats,
    })
}
