//! JSON container for a built graph.
//!
//! ```text
//! {
//!   "format": "graphtext-graph", "version": 1,
//!   "options": {"mode": "binary"|"tfidf", "membership": "triples"|"refined",
//!               "transductive": bool, "self_loops": bool},
//!   "vocab": [token, ...], "vocab_digest": hex,
//!   "adjacency": {"size": n, "entries": [[i, j, 1.0], ...]},   // both directions
//!   "pooling": {"mode": ..., "doc_ids": [...], "n_cols": n,
//!               "entries": [[row, col, weight], ...], "idf": [..] | null,
//!               "stats": {"oov_dropped", "none_docs", "idf_floored"}}
//! }
//! ```
//!
//! The normalized adjacency is recomputed on load.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    BuildOptions, CsrMatrix, PoolingMatrix, PoolingMode, PoolingStats, TextGraph, Vocabulary,
};
use crate::corpus::{read_file, write_file};
use crate::error::{Error, Result};

const FORMAT: &str = "graphtext-graph";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphArtifact {
    pub format: String,
    pub version: u32,
    pub options: BuildOptions,
    pub vocab: Vocabulary,
    pub vocab_digest: String,
    pub adjacency: AdjacencySection,
    pub pooling: PoolingSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjacencySection {
    pub size: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolingSection {
    pub mode: PoolingMode,
    pub doc_ids: Vec<String>,
    pub n_cols: usize,
    pub entries: Vec<(usize, usize, f64)>,
    pub idf: Option<Vec<f64>>,
    pub stats: PoolingStats,
}

impl GraphArtifact {
    pub fn new(graph: &TextGraph, pooling: &PoolingMatrix, options: BuildOptions) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            options,
            vocab: graph.vocab().clone(),
            vocab_digest: graph.vocab().digest(),
            adjacency: AdjacencySection {
                size: graph.num_nodes(),
                entries: graph.adjacency().triplets().collect(),
            },
            pooling: PoolingSection {
                mode: pooling.mode(),
                doc_ids: pooling.doc_ids().to_vec(),
                n_cols: pooling.matrix().n_cols(),
                entries: pooling.matrix().triplets().collect(),
                idf: pooling.idf().map(<[f64]>::to_vec),
                stats: pooling.stats(),
            },
        }
    }

    pub fn into_parts(self) -> Result<(TextGraph, PoolingMatrix)> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(Error::Format(format!(
                "unsupported graph artifact {} v{}",
                self.format, self.version
            )));
        }
        let digest = self.vocab.digest();
        if digest != self.vocab_digest {
            return Err(Error::Format(
                "graph artifact vocabulary digest does not match its tokens".into(),
            ));
        }
        let n = self.vocab.len();
        if self.adjacency.size != n || self.pooling.n_cols != n {
            return Err(Error::Format(format!(
                "graph artifact sizes disagree: vocab {n}, adjacency {}, pooling columns {}",
                self.adjacency.size, self.pooling.n_cols
            )));
        }
        let n_rows = self.pooling.doc_ids.len();
        let in_range = |&(r, c, _): &(usize, usize, f64), rows: usize| r < rows && c < n;
        if !self.adjacency.entries.iter().all(|e| in_range(e, n))
            || !self.pooling.entries.iter().all(|e| in_range(e, n_rows))
        {
            return Err(Error::Format(
                "graph artifact entry index out of range".into(),
            ));
        }
        if self.adjacency.entries.iter().any(|e| e.2 != 1.0) {
            return Err(Error::Format("adjacency entries must be 1".into()));
        }
        let edges = self.adjacency.entries.iter().map(|&(i, j, _)| (i, j));
        let graph = TextGraph::from_edges(self.vocab, edges, self.options.self_loops)?;
        let matrix = CsrMatrix::from_triplets(n_rows, n, self.pooling.entries);
        let mut pooling = PoolingMatrix::new(
            self.pooling.doc_ids,
            matrix,
            self.pooling.mode,
            digest,
            self.pooling.idf,
        )?;
        pooling.stats = self.pooling.stats;
        Ok((graph, pooling))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec(self).expect("graph artifact serializes");
        write_file(path, &json)
    }

    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_str(&read_file(path)?)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_corpus;
    use crate::graph::build_text_graph;
    use crate::tripleparse::{ExtractionResult, Triple};

    #[test]
    fn artifact_round_trip_is_lossless() {
        let corpus =
            parse_corpus("a\nb\nc\n", "d1\ttrain\tx\nd2\ttrain\ty\nd3\ttest\tx\n").unwrap();
        let tr = |h: &str, r: &str, t: &str| Triple::new(h, r, t).unwrap();
        let results = vec![
            ExtractionResult {
                doc_id: "d1".into(),
                is_none: false,
                triples: vec![tr("coffee prices", "drop", "cents")],
                malformed_lines: 0,
            },
            ExtractionResult {
                doc_id: "d2".into(),
                is_none: false,
                triples: vec![tr("bank", "cut", "rate rate")],
                malformed_lines: 0,
            },
            ExtractionResult {
                doc_id: "d3".into(),
                is_none: false,
                triples: vec![tr("bank", "raise", "prices")],
                malformed_lines: 0,
            },
        ];
        for mode in [PoolingMode::Binary, PoolingMode::Tfidf] {
            let opts = BuildOptions {
                mode,
                ..BuildOptions::default()
            };
            let (g, s) = build_text_graph(&results, &corpus, opts).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("g.json");
            GraphArtifact::new(&g, &s, opts).save(&path).unwrap();
            let (g2, s2) = GraphArtifact::load(&path).unwrap().into_parts().unwrap();
            assert_eq!(g, g2);
            assert_eq!(s, s2);
        }
    }
}
