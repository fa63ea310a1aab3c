//! Evaluation harness: offline extraction over a corpus, fit-and-evaluate, and
//! the limited-training-data sweep.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{subsample_train, Corpus};
use crate::error::{Error, Result};
use crate::graph::{build_text_graph, BuildOptions, PoolingMatrix, TextGraph};
use crate::llm::mock_extract;
use crate::model::{train, ClassifierModel, Prediction, TrainConfig};
use crate::tripleparse::{parse_triples, ExtractionResult};

/// Extraction with the offline trigram extractor, one result per document in
/// corpus order. Uses refined text when attached.
pub fn mock_extract_corpus(corpus: &Corpus, stride: usize) -> Result<Vec<ExtractionResult>> {
    corpus
        .documents()
        .iter()
        .map(|d| mock_extract(d.display_text(), stride).map(|r| parse_triples(&r, &d.id)))
        .collect()
}

pub struct EvalRun {
    pub graph: TextGraph,
    pub pooling: PoolingMatrix,
    pub model: ClassifierModel,
    /// Test-document predictions in corpus order.
    pub predictions: Vec<Prediction>,
    pub accuracy: Option<f64>,
}

/// Builds the graph, trains, and predicts the test split.
pub fn fit_and_evaluate(
    corpus: &Corpus,
    results: &[ExtractionResult],
    options: BuildOptions,
    config: &TrainConfig,
) -> Result<EvalRun> {
    let (graph, pooling) = build_text_graph(results, corpus, options)?;
    let model = train(&graph, &pooling, corpus, config)?;
    let test_ids: Vec<String> = corpus.test().map(|d| d.id.clone()).collect();
    let predictions = model.predict(&graph, &pooling.select(&test_ids)?)?;
    let accuracy = test_accuracy(corpus, &predictions);
    Ok(EvalRun {
        graph,
        pooling,
        model,
        predictions,
        accuracy,
    })
}

/// Fraction of predictions matching the gold label, over labeled documents.
pub fn test_accuracy(corpus: &Corpus, predictions: &[Prediction]) -> Option<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for p in predictions {
        if let Some(gold) = corpus.get(&p.doc_id).and_then(|d| d.label.as_deref()) {
            total += 1;
            correct += usize::from(gold == p.label);
        }
    }
    (total > 0).then(|| correct as f64 / total as f64)
}

/// Mean and sample standard deviation (`n - 1`); the deviation is 0 for one value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Percent with two decimals, with `± std` when more than one value was seen.
pub fn format_accuracy(values: &[f64]) -> String {
    let (mean, std) = mean_std(values);
    if values.len() > 1 {
        format!("{:.2} ± {:.2}", 100.0 * mean, 100.0 * std)
    } else {
        format!("{:.2}", 100.0 * mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitedRow {
    pub train_size: usize,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// For each training size and seed, subsamples the training split, rebuilds the
/// graph from the kept documents and evaluates on the full test split.
pub fn limited_data(
    corpus: &Corpus,
    results: &[ExtractionResult],
    sizes: &[usize],
    seeds: &[u64],
    options: BuildOptions,
    config: &TrainConfig,
) -> Result<Vec<LimitedRow>> {
    if seeds.is_empty() {
        return Err(Error::Argument(
            "limited-data evaluation needs at least one seed".into(),
        ));
    }
    sizes
        .iter()
        .map(|&k| {
            let accuracies = seeds
                .iter()
                .map(|&seed| {
                    let sub = subsample_train(corpus, k, seed)?;
                    let run = fit_and_evaluate(&sub, results, options, config)?;
                    run.accuracy.ok_or_else(|| {
                        Error::Argument("test split has no labeled documents".into())
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            let (mean, std) = mean_std(&accuracies);
            Ok(LimitedRow {
                train_size: k,
                seeds: seeds.to_vec(),
                accuracies,
                mean,
                std,
            })
        })
        .collect()
}

/// Plot-ready CSV: `train_size,mean,std,n_seeds` with accuracies in percent.
pub fn limited_csv(rows: &[LimitedRow]) -> String {
    let mut out = String::from("train_size,mean,std,n_seeds\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.4},{:.4},{}",
            r.train_size,
            100.0 * r.mean,
            100.0 * r.std,
            r.seeds.len()
        );
    }
    out
}

/// Predictions TSV: `doc_id predicted gold p_<label>...`, probabilities with
/// round-trip precision.
pub fn predictions_tsv(corpus: &Corpus, predictions: &[Prediction]) -> String {
    let mut out = String::from("doc_id\tpredicted\tgold");
    for l in corpus.labels().names() {
        let _ = write!(out, "\tp_{l}");
    }
    out.push('\n');
    for p in predictions {
        let gold = corpus
            .get(&p.doc_id)
            .and_then(|d| d.label.as_deref())
            .unwrap_or("");
        let _ = write!(out, "{}\t{}\t{gold}", p.doc_id, p.label);
        for v in &p.probs {
            let _ = write!(out, "\t{v}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::separable_toy;

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[0.5, 0.6, 0.7]);
        assert!((m - 0.6).abs() < 1e-15);
        assert!((s - 0.1).abs() < 1e-12);
        assert_eq!(mean_std(&[0.3]), (0.3, 0.0));
        assert_eq!(format_accuracy(&[1.0]), "100.00");
        assert_eq!(format_accuracy(&[0.5, 0.7]), "60.00 ± 14.14");
    }

    #[test]
    fn toy_is_separated() {
        for classes in [2, 4] {
            let corpus = separable_toy(classes).unwrap();
            let results = mock_extract_corpus(&corpus, 1).unwrap();
            let run = fit_and_evaluate(
                &corpus,
                &results,
                BuildOptions::default(),
                &TrainConfig::default(),
            )
            .unwrap();
            assert_eq!(run.accuracy, Some(1.0));
            let tsv = predictions_tsv(&corpus, &run.predictions);
            assert_eq!(tsv.lines().count(), 1 + corpus.test().count());
        }
    }
}
