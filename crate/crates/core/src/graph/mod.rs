//! The word graph built from extracted triples: vocabulary, adjacency with its
//! symmetric normalization, and the document-word pooling matrix.

mod adjacency;
mod artifact;
mod pooling;
mod sparse;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::tripleparse::{ExtractionResult, Triple};

pub use adjacency::{build_adjacency, TextGraph};
pub use artifact::GraphArtifact;
pub use pooling::{
    build_pooling, document_stream, idf, pooling_row, tf, Membership, PoolingMatrix, PoolingMode,
    PoolingStats,
};
pub use sparse::CsrMatrix;

/// Lowercases, splits on whitespace and strips leading/trailing
/// non-alphanumeric characters from each piece. Internal punctuation such as
/// hyphens and apostrophes is kept.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|piece| piece.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|piece| !piece.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Tokens of one triple, in head, relation, tail order.
pub fn triple_tokens(triple: &Triple) -> impl Iterator<Item = String> + '_ {
    triple.fields().into_iter().flat_map(tokenize)
}

/// Distinct tokens with a stable index. Tokens are the node set of the graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary preserving the given order. Tokens must be distinct.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Argument(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Hex SHA-256 over the newline-joined tokens; identifies the node order.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Vocabulary::from_tokens(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

/// Sorted distinct tokens over every head, relation and tail.
pub fn build_vocab(results: &[ExtractionResult]) -> Result<Vocabulary> {
    let tokens: BTreeSet<String> = results
        .iter()
        .flat_map(|r| &r.triples)
        .flat_map(triple_tokens)
        .collect();
    if tokens.is_empty() {
        return Err(Error::EmptyGraph);
    }
    Vocabulary::from_tokens(tokens.into_iter().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildOptions {
    pub mode: PoolingMode,
    pub membership: Membership,
    /// Include test documents' triples in the vocabulary, adjacency and
    /// document-frequency statistics (never their labels).
    pub transductive: bool,
    pub self_loops: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            mode: PoolingMode::Binary,
            membership: Membership::Triples,
            transductive: false,
            self_loops: true,
        }
    }
}

/// Builds vocabulary, graph and pooling matrix for every corpus document.
/// In inductive mode only training documents' triples shape the graph.
pub fn build_text_graph(
    results: &[ExtractionResult],
    corpus: &Corpus,
    options: BuildOptions,
) -> Result<(TextGraph, PoolingMatrix)> {
    let graph_results: Vec<ExtractionResult> = if options.transductive {
        results.to_vec()
    } else {
        let train: std::collections::HashSet<&str> =
            corpus.train().map(|d| d.id.as_str()).collect();
        results
            .iter()
            .filter(|r| train.contains(r.doc_id.as_str()))
            .cloned()
            .collect()
    };
    let vocab = build_vocab(&graph_results)?;
    let graph = build_adjacency(&graph_results, vocab, options.self_loops)?;
    let pooling = build_pooling(results, corpus, graph.vocab(), options)?;
    Ok((graph, pooling))
}
