//! LLM-backed stages shared by the individual subcommands and `pipeline`.

use std::path::Path;

use log::warn;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::llm::{
    render_extract_prompt, render_refine_prompt, FixtureProvider, LlmClient, LlmConfig,
    MockProvider, Provider, ResponseCache, RetryPolicy,
};
use crate::manifest::Counters;
use crate::tripleparse::{parse_triples, ExtractionResult};

/// Where completions come from.
pub enum ProviderChoice<'a> {
    Http,
    Mock {
        stride: usize,
    },
    Fixtures {
        path: &'a Path,
        mock_fallback: Option<usize>,
    },
}

/// Builds a client for `config`. The cache is the file at `config.cache_path`
/// when set, otherwise in memory.
pub fn make_client(config: &LlmConfig, choice: ProviderChoice<'_>) -> Result<LlmClient> {
    let provider: Box<dyn Provider> = match choice {
        ProviderChoice::Http => return LlmClient::from_config(config),
        ProviderChoice::Mock { stride } => Box::new(MockProvider { stride }),
        ProviderChoice::Fixtures {
            path,
            mock_fallback,
        } => {
            let fixtures = FixtureProvider::load(path)?;
            Box::new(match mock_fallback {
                Some(stride) => fixtures.with_fallback(Box::new(MockProvider { stride })),
                None => fixtures,
            })
        }
    };
    let cache = match &config.cache_path {
        Some(p) => ResponseCache::open(p)?,
        None => ResponseCache::in_memory(),
    };
    Ok(LlmClient::new(provider, cache).with_retry(RetryPolicy {
        max_retries: config.max_retries,
        base: std::time::Duration::from_millis(config.backoff_base_ms),
        cap: std::time::Duration::from_millis(config.backoff_cap_ms),
    }))
}

/// Per-document outputs of a stage plus the first failure, if any. Failed
/// documents are left out of `records` and counted in `failed_docs`.
pub struct StageOutput<T> {
    pub records: Vec<T>,
    pub counters: Counters,
    pub first_error: Option<Error>,
}

fn run_stage<T>(
    corpus: &Corpus,
    client: &LlmClient,
    config: &LlmConfig,
    prompt: impl Fn(&crate::corpus::Document) -> Result<String>,
    finish: impl Fn(&crate::corpus::Document, String) -> T,
) -> Result<StageOutput<T>> {
    let before = client.stats();
    let requests = corpus
        .documents()
        .iter()
        .map(|d| prompt(d).map(|p| config.request(p).for_doc(d.id.clone())))
        .collect::<Result<Vec<_>>>()?;
    let responses = client.complete_batch(&requests, config.workers);
    let mut out = StageOutput {
        records: Vec::new(),
        counters: Counters::default(),
        first_error: None,
    };
    for (doc, response) in corpus.documents().iter().zip(responses) {
        match response {
            Ok(text) => out.records.push(finish(doc, text)),
            Err(e) => {
                warn!("document {:?}: {e}", doc.id);
                out.counters.failed_docs += 1;
                out.first_error.get_or_insert(e);
            }
        }
    }
    let after = client.stats();
    out.counters.provider_calls = after.provider_calls - before.provider_calls;
    out.counters.cache_hits = after.cache_hits - before.cache_hits;
    Ok(out)
}

/// Refines every document. Records are `(doc_id, refined_text)`.
pub fn refine_corpus(
    corpus: &Corpus,
    client: &LlmClient,
    config: &LlmConfig,
) -> Result<StageOutput<(String, String)>> {
    let mut out = run_stage(corpus, client, config, render_refine_prompt, |d, text| {
        (d.id.clone(), text)
    })?;
    // An empty refinement cannot be used downstream.
    let before = out.records.len();
    out.records.retain(|(id, text)| {
        let keep = !text.trim().is_empty();
        if !keep {
            warn!("document {id:?}: empty refined text");
        }
        keep
    });
    let dropped = before - out.records.len();
    if dropped > 0 {
        out.counters.failed_docs += dropped;
        out.first_error.get_or_insert(Error::Protocol(format!(
            "{dropped} documents received an empty refinement"
        )));
    }
    Ok(out)
}

/// Extracts triples from each document's refined text (raw text when none is attached).
pub fn extract_corpus(
    corpus: &Corpus,
    client: &LlmClient,
    config: &LlmConfig,
) -> Result<StageOutput<ExtractionResult>> {
    let mut out = run_stage(
        corpus,
        client,
        config,
        |d| render_extract_prompt(d.display_text()),
        |d, text| parse_triples(&text, &d.id),
    )?;
    out.counters.malformed_lines = out.records.iter().map(|r| r.malformed_lines).sum();
    out.counters.none_docs = out.records.iter().filter(|r| r.is_none).count();
    Ok(out)
}
