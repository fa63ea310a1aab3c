//! Text classification over word graphs built from LLM-extracted knowledge
//! triples, with per-class word importances for interpretation.

pub mod baselines;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod explain;
pub mod graph;
pub mod harness;
pub mod llm;
pub mod manifest;
pub mod model;
pub mod synth;
pub mod tripleparse;

pub use error::{Error, Result};
