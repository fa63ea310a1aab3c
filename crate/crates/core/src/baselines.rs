//! Comparison methods: TF-IDF features with multinomial logistic regression,
//! and LLM zero/few-shot classification with answer-set validation.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{write_file, Corpus, LabelSet};
use crate::error::{Error, Result};
use crate::graph::{
    pooling_row, tokenize, CsrMatrix, PoolingMatrix, PoolingMode, TextGraph, Vocabulary,
};
use crate::llm::{render_classify_prompt, LlmClient, LlmConfig, ShotExample};
use crate::model::{train, ClassifierModel, Prediction, TrainConfig};

pub struct LogregRun {
    pub model: ClassifierModel,
    /// Identity graph over the raw-text vocabulary.
    pub graph: TextGraph,
    /// TF-IDF features for every corpus document.
    pub features: PoolingMatrix,
    /// Predictions for the test documents, in corpus order.
    pub predictions: Vec<Prediction>,
    /// Test accuracy over labeled test documents.
    pub accuracy: Option<f64>,
}

/// TF-IDF over raw-text tokens with the vocabulary and document frequencies of
/// the training split, classified by logistic regression. Logistic regression
/// is the graph model with `Ã = I`, so the same trainer is used.
pub fn tfidf_logreg(corpus: &Corpus, config: &TrainConfig) -> Result<LogregRun> {
    let streams: Vec<Vec<String>> = corpus
        .documents()
        .iter()
        .map(|d| tokenize(&d.raw_text))
        .collect();
    let train_streams: Vec<&Vec<String>> = corpus
        .documents()
        .iter()
        .zip(&streams)
        .filter(|(d, _)| d.is_train())
        .map(|(_, s)| s)
        .collect();
    let tokens: BTreeSet<String> = train_streams
        .iter()
        .flat_map(|s| s.iter().cloned())
        .collect();
    if tokens.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let vocab = Vocabulary::from_tokens(tokens.into_iter().collect())?;

    let mut df = vec![0usize; vocab.len()];
    for stream in &train_streams {
        let seen: HashSet<usize> = stream.iter().filter_map(|t| vocab.id(t)).collect();
        for id in seen {
            df[id] += 1;
        }
    }
    // Every vocabulary token occurs in some training document, so df >= 1.
    let n = train_streams.len() as f64;
    let idf: Vec<f64> = df.iter().map(|&d| (n / d as f64).ln()).collect();

    let rows = streams
        .iter()
        .map(|s| {
            if s.is_empty() {
                Ok(Vec::new())
            } else {
                pooling_row(s, &vocab, PoolingMode::Tfidf, Some(&idf)).map(|(row, _)| row)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let features = PoolingMatrix::new(
        corpus.documents().iter().map(|d| d.id.clone()).collect(),
        CsrMatrix::from_rows(vocab.len(), rows),
        PoolingMode::Tfidf,
        vocab.digest(),
        Some(idf),
    )?;
    let graph = TextGraph::identity(vocab);
    let model = train(&graph, &features, corpus, config)?;

    let test_ids: Vec<String> = corpus.test().map(|d| d.id.clone()).collect();
    let predictions = model.predict(&graph, &features.select(&test_ids)?)?;
    let accuracy = labeled_accuracy(corpus, &predictions);
    Ok(LogregRun {
        model,
        graph,
        features,
        predictions,
        accuracy,
    })
}

fn labeled_accuracy(corpus: &Corpus, predictions: &[Prediction]) -> Option<f64> {
    let scored: Vec<bool> = predictions
        .iter()
        .filter_map(|p| {
            corpus
                .get(&p.doc_id)?
                .label
                .as_deref()
                .map(|g| g == p.label)
        })
        .collect();
    (!scored.is_empty()).then(|| scored.iter().filter(|c| **c).count() as f64 / scored.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotOutcome {
    pub doc_id: String,
    pub raw_response: String,
    /// A label from the set, or the response itself when it is a single word
    /// outside the set.
    pub parsed_label: Option<String>,
    pub in_label_set: bool,
    pub gold: Option<String>,
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FewShotReport {
    pub shots: usize,
    pub outcomes: Vec<FewShotOutcome>,
    /// Correct over labeled test documents; abstentions count as incorrect.
    pub accuracy: Option<f64>,
}

/// Maps a response to a label: the trimmed response matched case-insensitively
/// against the set, otherwise a response mentioning exactly one label as a
/// whole word. Returns `(parsed_label, in_label_set)`.
pub fn parse_label_response(response: &str, labels: &LabelSet) -> (Option<String>, bool) {
    let answer = response.trim();
    let bare = answer
        .trim_matches(|c: char| matches!(c, '\'' | '"' | '`' | '.'))
        .trim();
    if let Some(name) = labels.names().iter().find(|n| n.eq_ignore_ascii_case(bare)) {
        return (Some(name.clone()), true);
    }
    let mentioned: Vec<&String> = labels
        .names()
        .iter()
        .filter(|n| mentions_word(answer, n))
        .collect();
    if let [only] = mentioned.as_slice() {
        return (Some((*only).clone()), true);
    }
    if !bare.is_empty() && !bare.contains(char::is_whitespace) {
        return (Some(bare.to_string()), false);
    }
    (None, false)
}

fn mentions_word(text: &str, word: &str) -> bool {
    if word.is_empty() {
        return false;
    }
    let hay = text.to_lowercase();
    let needle = word.to_lowercase();
    let is_word_char = |c: char| c.is_alphanumeric() || c == '-' || c == '_';
    hay.match_indices(&needle).any(|(i, m)| {
        let before = hay[..i].chars().next_back();
        let after = hay[i + m.len()..].chars().next();
        !before.is_some_and(is_word_char) && !after.is_some_and(is_word_char)
    })
}

/// Classifies every test document with the classification prompt. Provider
/// failures are recorded on the outcome and scored as incorrect.
pub fn llm_classify(
    corpus: &Corpus,
    shots: usize,
    shot_bank: &[ShotExample],
    client: &LlmClient,
    config: &LlmConfig,
) -> Result<FewShotReport> {
    let labels = corpus.labels();
    let docs: Vec<_> = corpus.test().collect();
    let requests = docs
        .iter()
        .map(|d| {
            render_classify_prompt(d, labels, shots, shot_bank)
                .map(|p| config.request(p).for_doc(d.id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let responses = client.complete_batch(&requests, config.workers);

    let outcomes: Vec<FewShotOutcome> = docs
        .iter()
        .zip(responses)
        .map(|(doc, response)| {
            let (raw_response, error) = match response {
                Ok(text) => (text, None),
                Err(e) => (String::new(), Some(e.to_string())),
            };
            let (parsed_label, in_label_set) = if error.is_some() {
                (None, false)
            } else {
                parse_label_response(&raw_response, labels)
            };
            let correct = in_label_set && parsed_label.is_some() && parsed_label == doc.label;
            FewShotOutcome {
                doc_id: doc.id.clone(),
                raw_response,
                parsed_label,
                in_label_set,
                gold: doc.label.clone(),
                correct,
                error,
            }
        })
        .collect();
    let labeled: Vec<&FewShotOutcome> = outcomes.iter().filter(|o| o.gold.is_some()).collect();
    let accuracy = (!labeled.is_empty())
        .then(|| labeled.iter().filter(|o| o.correct).count() as f64 / labeled.len() as f64);
    Ok(FewShotReport {
        shots,
        outcomes,
        accuracy,
    })
}

pub fn write_outcomes(outcomes: &[FewShotOutcome], path: &Path) -> Result<()> {
    let mut out = String::new();
    for o in outcomes {
        out.push_str(&serde_json::to_string(o).expect("outcomes serialize"));
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

/// One summary row: `method`, `shots` (`-` when not applicable), accuracy in
/// percent to two decimals (`NA` without labels), and the number of test documents.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub shots: Option<usize>,
    pub accuracy: Option<f64>,
    pub n: usize,
}

pub fn summary_tsv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("method\tshots\taccuracy\tn\n");
    for r in rows {
        let shots = r.shots.map_or("-".to_string(), |s| s.to_string());
        let acc = r
            .accuracy
            .map_or("NA".to_string(), |a| format!("{:.2}", 100.0 * a));
        out.push_str(&format!("{}\t{shots}\t{acc}\t{}\n", r.method, r.n));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_corpus, Document, Split};
    use crate::llm::{CompletionRequest, ProviderError, ResponseCache};

    fn r8() -> LabelSet {
        LabelSet::new(
            [
                "acq", "crude", "earn", "grain", "interest", "money-fx", "ship", "trade",
            ]
            .map(String::from)
            .to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn label_parsing_rules() {
        let l = r8();
        assert_eq!(
            parse_label_response("earn", &l),
            (Some("earn".into()), true)
        );
        assert_eq!(
            parse_label_response("  EARN\n", &l),
            (Some("earn".into()), true)
        );
        assert_eq!(
            parse_label_response("loss", &l),
            (Some("loss".into()), false)
        );
        assert_eq!(
            parse_label_response("The document is best described as crude.", &l),
            (Some("crude".into()), true)
        );
        assert_eq!(
            parse_label_response("Either crude or ship.", &l),
            (None, false)
        );
        // "money" alone is not the label "money-fx", and "fx" inside it is not a word.
        assert_eq!(
            parse_label_response("It is about money markets", &l),
            (None, false)
        );
        assert_eq!(
            parse_label_response("money-fx", &l).0.as_deref(),
            Some("money-fx")
        );
        assert_eq!(parse_label_response("", &l), (None, false));
        assert!(!mentions_word("earnings rose", "earn"));
    }

    fn toy() -> Corpus {
        let text = "alpha alpha common\nalpha common\nbeta beta common\nbeta common\nalpha common\nbeta common\n";
        let meta = "a\ttrain\tA\nb\ttrain\tA\nc\ttrain\tB\nd\ttrain\tB\ne\ttest\tA\nf\ttest\tB\n";
        parse_corpus(text, meta).unwrap()
    }

    #[test]
    fn tfidf_logreg_separates_toy() {
        let run = tfidf_logreg(&toy(), &TrainConfig::default()).unwrap();
        assert_eq!(run.accuracy, Some(1.0));
        let common = run.graph.vocab().id("common").unwrap();
        // A word in every training document has idf 0.
        assert_eq!(run.features.idf().unwrap()[common], 0.0);
        for r in 0..run.features.n_rows() {
            assert_eq!(run.features.matrix().get(r, common), 0.0);
        }
        assert!(run
            .model
            .loss_trace
            .windows(2)
            .all(|w| w[1].loss <= w[0].loss));
    }

    #[test]
    fn tfidf_logreg_without_updates_predicts_first_class() {
        let config = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let run = tfidf_logreg(&toy(), &config).unwrap();
        assert!(run.predictions.iter().all(|p| p.class == 0));
        assert_eq!(run.accuracy, Some(0.5));
    }

    fn classify_corpus() -> Corpus {
        let labels = r8();
        let docs = vec![
            Document {
                id: "t1".into(),
                raw_text: "champion products approves stock split".into(),
                refined_text: None,
                split: Split::Test,
                label: Some("earn".into()),
            },
            Document {
                id: "t2".into(),
                raw_text: "oil output cut".into(),
                refined_text: None,
                split: Split::Test,
                label: Some("crude".into()),
            },
            Document {
                id: "t3".into(),
                raw_text: "wheat exports".into(),
                refined_text: None,
                split: Split::Test,
                label: Some("grain".into()),
            },
            Document {
                id: "t4".into(),
                raw_text: "port strike".into(),
                refined_text: None,
                split: Split::Test,
                label: Some("ship".into()),
            },
            Document {
                id: "r1".into(),
                raw_text: "training".into(),
                refined_text: None,
                split: Split::Train,
                label: Some("acq".into()),
            },
        ];
        Corpus::new(docs, labels).unwrap()
    }

    #[test]
    fn few_shot_accounting() {
        let corpus = classify_corpus();
        let provider = |req: &CompletionRequest| match req.doc_id.as_deref() {
            Some("t1") => Ok("  EARN\n".to_string()),
            Some("t2") => Ok("loss".to_string()),
            Some("t3") => Err(ProviderError::Transient("down".into())),
            _ => Ok("ship".to_string()),
        };
        let client = LlmClient::new(Box::new(provider), ResponseCache::in_memory())
            .with_retry(crate::llm::RetryPolicy::none());
        let report = llm_classify(&corpus, 0, &[], &client, &LlmConfig::default()).unwrap();
        assert_eq!(report.outcomes.len(), 4);
        let by_id = |id: &str| report.outcomes.iter().find(|o| o.doc_id == id).unwrap();
        assert!(by_id("t1").correct && by_id("t1").in_label_set);
        assert!(!by_id("t2").correct && !by_id("t2").in_label_set);
        assert_eq!(by_id("t2").parsed_label.as_deref(), Some("loss"));
        assert!(!by_id("t3").correct && by_id("t3").error.is_some());
        assert!(by_id("t4").correct);
        assert_eq!(report.accuracy, Some(0.5));
        for o in &report.outcomes {
            assert_eq!(
                o.in_label_set,
                o.parsed_label
                    .as_ref()
                    .is_some_and(|l| r8().index_of(l).is_some())
            );
        }
    }

    #[test]
    fn shots_without_bank_is_an_argument_error() {
        let client = LlmClient::new(
            Box::new(|_: &CompletionRequest| Ok("earn".to_string())),
            ResponseCache::in_memory(),
        );
        let err =
            llm_classify(&classify_corpus(), 2, &[], &client, &LlmConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }

    #[test]
    fn summary_format() {
        let rows = [
            SummaryRow {
                method: "tfidf-lr".into(),
                shots: None,
                accuracy: Some(0.9639),
                n: 10,
            },
            SummaryRow {
                method: "llm".into(),
                shots: Some(2),
                accuracy: None,
                n: 0,
            },
        ];
        assert_eq!(
            summary_tsv(&rows),
            "method\tshots\taccuracy\tn\ntfidf-lr\t-\t96.39\t10\nllm\t2\tNA\t0\n"
        );
    }
}
