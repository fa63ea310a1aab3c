use std::collections::BTreeSet;

use super::{triple_tokens, CsrMatrix, Vocabulary};
use crate::error::{Error, Result};
use crate::tripleparse::ExtractionResult;

/// Word graph with binary symmetric adjacency `A` and its normalization
/// `Ã = D^{-1/2} A D^{-1/2}`. Node features are the identity and never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct TextGraph {
    vocab: Vocabulary,
    adjacency: CsrMatrix,
    norm_adjacency: CsrMatrix,
    self_loops: bool,
}

impl TextGraph {
    /// Builds a graph from undirected edges `(i, j)`. Duplicates are ignored;
    /// `i == j` entries are allowed.
    pub fn from_edges(
        vocab: Vocabulary,
        edges: impl IntoIterator<Item = (usize, usize)>,
        self_loops: bool,
    ) -> Result<Self> {
        let n = vocab.len();
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::Consistency(format!(
                    "edge ({i}, {j}) outside {n} nodes"
                )));
            }
            set.insert((i, j));
            set.insert((j, i));
        }
        if self_loops {
            set.extend((0..n).map(|i| (i, i)));
        }
        let adjacency = CsrMatrix::from_triplets(n, n, set.into_iter().map(|(i, j)| (i, j, 1.0)));
        let degrees: Vec<usize> = (0..n).map(|i| adjacency.row_nnz(i)).collect();
        if let Some(iso) = degrees.iter().position(|&d| d == 0) {
            return Err(Error::Argument(format!(
                "node {:?} is isolated; its degree is zero without self-loops",
                vocab.token(iso)
            )));
        }
        let inv_sqrt: Vec<f64> = degrees.iter().map(|&d| 1.0 / (d as f64).sqrt()).collect();
        let norm_adjacency = adjacency.map_values(|i, j, a| a * inv_sqrt[i] * inv_sqrt[j]);
        Ok(Self {
            vocab,
            adjacency,
            norm_adjacency,
            self_loops,
        })
    }

    /// A graph whose normalized adjacency is the identity: a plain linear
    /// model over pooled features.
    pub fn identity(vocab: Vocabulary) -> Self {
        let n = vocab.len();
        Self {
            vocab,
            adjacency: CsrMatrix::identity(n),
            norm_adjacency: CsrMatrix::identity(n),
            self_loops: true,
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    pub fn norm_adjacency(&self) -> &CsrMatrix {
        &self.norm_adjacency
    }

    pub fn self_loops(&self) -> bool {
        self.self_loops
    }

    pub fn num_nodes(&self) -> usize {
        self.vocab.len()
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency.row_nnz(node)
    }

    /// Undirected edges between distinct nodes.
    pub fn edge_count(&self) -> usize {
        self.adjacency.triplets().filter(|&(i, j, _)| i < j).count()
    }
}

/// Connects every pair of distinct tokens that occur together in one triple,
/// then adds self-loops when requested.
pub fn build_adjacency(
    results: &[ExtractionResult],
    vocab: Vocabulary,
    self_loops: bool,
) -> Result<TextGraph> {
    let mut edges = Vec::new();
    for triple in results.iter().flat_map(|r| &r.triples) {
        let mut ids = BTreeSet::new();
        for token in triple_tokens(triple) {
            let id = vocab.id(&token).ok_or_else(|| {
                Error::Consistency(format!("token {token:?} missing from vocabulary"))
            })?;
            ids.insert(id);
        }
        let ids: Vec<usize> = ids.into_iter().collect();
        for (a, &i) in ids.iter().enumerate() {
            for &j in &ids[a + 1..] {
                edges.push((i, j));
            }
        }
    }
    TextGraph::from_edges(vocab, edges, self_loops)
}
