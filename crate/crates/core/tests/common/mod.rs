#![allow(dead_code)]

use std::path::PathBuf;

use graphtext::corpus::{load_corpus, Corpus};
use graphtext::graph::{CsrMatrix, PoolingMatrix, PoolingMode, TextGraph, Vocabulary};
use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub fn data_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn corpus_paths(name: &str) -> (PathBuf, PathBuf) {
    let dir = data_dir(name);
    (dir.join("corpus.txt"), dir.join("meta.tsv"))
}

pub fn bundled(name: &str) -> Corpus {
    let (text, meta) = corpus_paths(name);
    load_corpus(&text, &meta).unwrap()
}

pub fn vocab(n: usize) -> Vocabulary {
    Vocabulary::from_tokens((0..n).map(|i| format!("w{i:02}")).collect()).unwrap()
}

/// Random graph with self-loops over `n` nodes; each pair is an edge with
/// probability `p`.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> TextGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                edges.push((i, j));
            }
        }
    }
    TextGraph::from_edges(vocab(n), edges, true).unwrap()
}

/// Random non-negative pooling matrix; roughly half the entries are non-zero.
pub fn random_pooling(
    rng: &mut ChaCha8Rng,
    docs: usize,
    n: usize,
    digest: String,
) -> PoolingMatrix {
    let rows = (0..docs)
        .map(|_| {
            let mut row = Vec::new();
            for i in 0..n {
                if rng.gen_bool(0.5) {
                    row.push((i, rng.gen_range(0.05..1.0)));
                }
            }
            row
        })
        .collect();
    PoolingMatrix::new(
        (0..docs).map(|d| format!("d{d}")).collect(),
        CsrMatrix::from_rows(n, rows),
        PoolingMode::Tfidf,
        digest,
        None,
    )
    .unwrap()
}

pub fn random_weights(rng: &mut ChaCha8Rng, n: usize, k: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((n, k), |_| rng.gen_range(-scale..scale))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
