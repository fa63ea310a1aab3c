//! One-layer graph convolution classifier: `softmax(S · Ã · W)`.
//!
//! With identity node features the model is linear in `W`, so mean
//! cross-entropy is convex and plain full-batch gradient descent from `W = 0`
//! is deterministic.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{read_file, validation_split, write_file, Corpus, LabelSet};
use crate::error::{Error, Result};
use crate::graph::{PoolingMatrix, TextGraph, Vocabulary};

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop once the loss decreases by less than this between epochs.
    pub tolerance: f64,
    pub l2_weight: f64,
    pub validation_fraction: f64,
    pub patience: usize,
    pub momentum: f64,
    pub validation_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            max_epochs: 500,
            tolerance: 1e-7,
            l2_weight: 0.0,
            validation_fraction: 0.0,
            patience: 20,
            momentum: 0.0,
            validation_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Argument(format!("train config: {what}")));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive");
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return bad("tolerance must be positive");
        }
        if !(self.l2_weight >= 0.0 && self.l2_weight.is_finite()) {
            return bad("l2_weight must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must lie in [0, 1)");
        }
        if self.patience == 0 {
            return bad("patience must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(
            serde_json::to_vec(self).expect("config serializes"),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub weights: Array2<f64>,
    pub vocab: Vocabulary,
    pub labels: LabelSet,
    pub config: TrainConfig,
    pub config_digest: String,
    pub loss_trace: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub doc_id: String,
    pub probs: Vec<f64>,
    pub class: usize,
    pub label: String,
}

fn check_weights(weights: &Array2<f64>) -> Result<()> {
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::State("weights contain non-finite entries".into()));
    }
    Ok(())
}

fn check_dims(graph: &TextGraph, pooling: &PoolingMatrix, weights: &Array2<f64>) -> Result<()> {
    let n = graph.num_nodes();
    if pooling.vocab_digest() != graph.vocab().digest() {
        return Err(Error::Compatibility {
            model: graph.vocab().digest(),
            pooling: pooling.vocab_digest().to_string(),
        });
    }
    if pooling.matrix().n_cols() != n || weights.nrows() != n {
        return Err(Error::Consistency(format!(
            "dimension mismatch: {n} nodes, pooling has {} columns, weights have {} rows",
            pooling.matrix().n_cols(),
            weights.nrows()
        )));
    }
    Ok(())
}

/// Smoothed word scores `M = Ã W`.
pub fn smoothed_scores(graph: &TextGraph, weights: &Array2<f64>) -> Array2<f64> {
    graph.norm_adjacency().mul_dense(weights)
}

/// Document logits `Z = S Ã W`.
pub fn logits(
    graph: &TextGraph,
    pooling: &PoolingMatrix,
    weights: &Array2<f64>,
) -> Result<Array2<f64>> {
    check_weights(weights)?;
    check_dims(graph, pooling, weights)?;
    Ok(pooling.matrix().mul_dense(&smoothed_scores(graph, weights)))
}

/// Row-wise softmax with the row maximum subtracted first.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut probs = logits.clone();
    for mut row in probs.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    probs
}

pub fn forward(
    graph: &TextGraph,
    pooling: &PoolingMatrix,
    weights: &Array2<f64>,
) -> Result<Array2<f64>> {
    Ok(softmax_rows(&logits(graph, pooling, weights)?))
}

/// Mean negative log-likelihood of the gold class over labeled rows plus
/// `l2_weight * ||W||² / 2`. Rows with `gold = None` are ignored.
pub fn loss(
    probs: &Array2<f64>,
    gold: &[Option<usize>],
    l2_weight: f64,
    weights: &Array2<f64>,
) -> f64 {
    let mut total = 0.0;
    let mut m = 0usize;
    let mut clamped = 0usize;
    for (row, g) in probs.axis_iter(Axis(0)).zip(gold) {
        if let Some(c) = *g {
            let p = row[c];
            if p < PROB_FLOOR {
                clamped += 1;
            }
            total -= p.max(PROB_FLOOR).ln();
            m += 1;
        }
    }
    if clamped > 0 {
        warn!("loss: {clamped} gold probabilities clamped at {PROB_FLOOR:e}");
    }
    let data = if m == 0 { 0.0 } else { total / m as f64 };
    data + l2_penalty(l2_weight, weights)
}

fn l2_penalty(l2_weight: f64, weights: &Array2<f64>) -> f64 {
    if l2_weight == 0.0 {
        0.0
    } else {
        0.5 * l2_weight * weights.iter().map(|w| w * w).sum::<f64>()
    }
}

/// Loss computed from logits through log-sum-exp, accurate when probabilities
/// saturate. Agrees with [`loss`] whenever no probability is clamped.
fn loss_from_logits(
    logits: &Array2<f64>,
    gold: &[Option<usize>],
    l2_weight: f64,
    weights: &Array2<f64>,
) -> f64 {
    let mut total = 0.0;
    let mut m = 0usize;
    for (row, g) in logits.axis_iter(Axis(0)).zip(gold) {
        if let Some(c) = *g {
            let max = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[c];
            m += 1;
        }
    }
    let data = if m == 0 { 0.0 } else { total / m as f64 };
    data + l2_penalty(l2_weight, weights)
}

fn check_gold(gold: &[Option<usize>], rows: usize, classes: usize) -> Result<usize> {
    if gold.len() != rows {
        return Err(Error::Consistency(format!(
            "{} gold entries for {rows} rows",
            gold.len()
        )));
    }
    let mut m = 0;
    for c in gold.iter().flatten() {
        if *c >= classes {
            return Err(Error::Consistency(format!(
                "gold class {c} outside {classes} classes"
            )));
        }
        m += 1;
    }
    Ok(m)
}

/// `∂loss/∂W = Ã Sᵀ (P − Y) / m + l2_weight · W` over the `m` labeled rows.
pub fn gradient(
    graph: &TextGraph,
    pooling: &PoolingMatrix,
    weights: &Array2<f64>,
    gold: &[Option<usize>],
    l2_weight: f64,
) -> Result<Array2<f64>> {
    let probs = forward(graph, pooling, weights)?;
    gradient_from_probs(graph, pooling, &probs, weights, gold, l2_weight)
}

fn gradient_from_probs(
    graph: &TextGraph,
    pooling: &PoolingMatrix,
    probs: &Array2<f64>,
    weights: &Array2<f64>,
    gold: &[Option<usize>],
    l2_weight: f64,
) -> Result<Array2<f64>> {
    let m = check_gold(gold, probs.nrows(), probs.ncols())?;
    let mut residual = Array2::zeros(probs.raw_dim());
    if m > 0 {
        let inv_m = 1.0 / m as f64;
        for (j, g) in gold.iter().enumerate() {
            if let Some(c) = *g {
                let mut row = residual.row_mut(j);
                row.assign(&probs.row(j));
                row[c] -= 1.0;
                row.mapv_inplace(|v| v * inv_m);
            }
        }
    }
    let pooled = pooling.matrix().transpose_mul_dense(&residual);
    let mut grad = graph.norm_adjacency().mul_dense(&pooled);
    if l2_weight != 0.0 {
        grad.scaled_add(l2_weight, weights);
    }
    Ok(grad)
}

fn accuracy(probs: &Array2<f64>, gold: &[Option<usize>]) -> f64 {
    let mut correct = 0;
    let mut total = 0;
    for (row, g) in probs.axis_iter(Axis(0)).zip(gold) {
        if let Some(c) = *g {
            total += 1;
            if argmax(row.as_slice().expect("contiguous row")) == c {
                correct += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Full-batch gradient descent from `W = 0` on the training documents.
///
/// `loss_trace[e]` is the training loss after `e` updates. Training stops at
/// `max_epochs` updates, when the loss decreases by less than `tolerance`, or
/// when validation accuracy has not improved for `patience` epochs (the best
/// validation weights are then returned).
pub fn train(
    graph: &TextGraph,
    pooling: &PoolingMatrix,
    corpus: &Corpus,
    config: &TrainConfig,
) -> Result<ClassifierModel> {
    config.validate()?;
    let labels = corpus.labels().clone();
    let n_classes = labels.len();

    let (fit_ids, val_ids) = if config.validation_fraction > 0.0 {
        validation_split(corpus, config.validation_fraction, config.validation_seed)?
    } else {
        (corpus.train().map(|d| d.id.clone()).collect(), Vec::new())
    };
    if fit_ids.is_empty() {
        return Err(Error::Argument("no training documents".into()));
    }
    let gold_of = |ids: &[String]| -> Vec<Option<usize>> {
        ids.iter()
            .map(|id| corpus.get(id).and_then(|d| corpus.class_of(d)))
            .collect()
    };
    let fit_pool = pooling.select(&fit_ids)?;
    let fit_gold = gold_of(&fit_ids);
    let val_pool = pooling.select(&val_ids)?;
    let val_gold = gold_of(&val_ids);

    let mut weights = Array2::<f64>::zeros((graph.num_nodes(), n_classes));
    check_dims(graph, &fit_pool, &weights)?;
    let mut velocity = Array2::<f64>::zeros(weights.raw_dim());
    let mut trace = Vec::new();
    let mut best: Option<(f64, Array2<f64>)> = None;
    let mut since_best = 0usize;

    for epoch in 0..=config.max_epochs {
        let z = logits(graph, &fit_pool, &weights)?;
        let current = loss_from_logits(&z, &fit_gold, config.l2_weight, &weights);
        if !current.is_finite() {
            return Err(Error::Training(format!(
                "loss became non-finite at epoch {epoch}; try a smaller learning rate than {}",
                config.learning_rate
            )));
        }
        let val_acc = if val_ids.is_empty() {
            None
        } else {
            Some(accuracy(&forward(graph, &val_pool, &weights)?, &val_gold))
        };
        let previous = trace.last().map(|r: &EpochRecord| r.loss);
        trace.push(EpochRecord {
            epoch,
            loss: current,
            val_acc,
        });

        if let Some(acc) = val_acc {
            if best.as_ref().is_none_or(|(b, _)| acc > *b) {
                best = Some((acc, weights.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= config.patience {
                    break;
                }
            }
        }
        if previous.is_some_and(|p| p - current < config.tolerance) || epoch == config.max_epochs {
            break;
        }

        let probs = softmax_rows(&z);
        let grad = gradient_from_probs(
            graph,
            &fit_pool,
            &probs,
            &weights,
            &fit_gold,
            config.l2_weight,
        )?;
        velocity.mapv_inplace(|v| v * config.momentum);
        velocity.scaled_add(-config.learning_rate, &grad);
        weights += &velocity;
    }

    if let Some((_, best_weights)) = best {
        weights = best_weights;
    }
    Ok(ClassifierModel {
        weights,
        vocab: graph.vocab().clone(),
        labels,
        config: *config,
        config_digest: config.digest(),
        loss_trace: trace,
    })
}

impl ClassifierModel {
    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    fn check_compatible(&self, graph: &TextGraph, pooling: &PoolingMatrix) -> Result<()> {
        let mine = self.vocab.digest();
        for other in [graph.vocab().digest(), pooling.vocab_digest().to_string()] {
            if other != mine {
                return Err(Error::Compatibility {
                    model: mine,
                    pooling: other,
                });
            }
        }
        Ok(())
    }

    /// Predictions for every pooling row.
    pub fn predict(&self, graph: &TextGraph, pooling: &PoolingMatrix) -> Result<Vec<Prediction>> {
        self.check_compatible(graph, pooling)?;
        let probs = forward(graph, pooling, &self.weights)?;
        Ok(pooling
            .doc_ids()
            .iter()
            .zip(probs.axis_iter(Axis(0)))
            .map(|(id, row)| self.prediction(id, row.to_vec()))
            .collect())
    }

    pub(crate) fn prediction(&self, doc_id: &str, probs: Vec<f64>) -> Prediction {
        let class = argmax(&probs);
        Prediction {
            doc_id: doc_id.to_string(),
            label: self.labels.name(class).expect("class in range").to_string(),
            class,
            probs,
        }
    }

    pub fn loss_csv(&self) -> String {
        let with_val = self.loss_trace.iter().any(|r| r.val_acc.is_some());
        let mut out = String::from(if with_val {
            "epoch,loss,val_acc\n"
        } else {
            "epoch,loss\n"
        });
        for r in &self.loss_trace {
            match (with_val, r.val_acc) {
                (true, Some(acc)) => writeln!(out, "{},{},{acc}", r.epoch, r.loss),
                (true, None) => writeln!(out, "{},{},", r.epoch, r.loss),
                (false, _) => writeln!(out, "{},{}", r.epoch, r.loss),
            }
            .expect("write to string");
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let artifact = ModelArtifact {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            vocab_digest: self.vocab.digest(),
            vocab: self.vocab.clone(),
            labels: self.labels.clone(),
            weights: self.weights.outer_iter().map(|r| r.to_vec()).collect(),
            config: self.config,
            config_digest: self.config_digest.clone(),
            loss_trace: self.loss_trace.clone(),
        };
        write_file(
            path,
            &serde_json::to_vec(&artifact).expect("model serializes"),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let a: ModelArtifact = serde_json::from_str(&read_file(path)?)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if a.format != MODEL_FORMAT || a.version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "unsupported model artifact {} v{}",
                a.format, a.version
            )));
        }
        if a.vocab.digest() != a.vocab_digest {
            return Err(Error::Format(
                "model vocabulary digest does not match its tokens".into(),
            ));
        }
        let (rows, cols) = (a.vocab.len(), a.labels.len());
        if a.weights.len() != rows || a.weights.iter().any(|r| r.len() != cols) {
            return Err(Error::Format(format!(
                "model weights are not {rows}x{cols}"
            )));
        }
        let flat: Vec<f64> = a.weights.into_iter().flatten().collect();
        let weights = Array2::from_shape_vec((rows, cols), flat).expect("shape checked");
        check_weights(&weights)?;
        Ok(Self {
            weights,
            vocab: a.vocab,
            labels: a.labels,
            config: a.config,
            config_digest: a.config_digest,
            loss_trace: a.loss_trace,
        })
    }
}

const MODEL_FORMAT: &str = "graphtext-model";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelArtifact {
    format: String,
    version: u32,
    vocab: Vocabulary,
    vocab_digest: String,
    labels: LabelSet,
    weights: Vec<Vec<f64>>,
    config: TrainConfig,
    config_digest: String,
    loss_trace: Vec<EpochRecord>,
}

/// Fraction of labeled predictions whose label matches the corpus gold label.
pub fn accuracy_against(corpus: &Corpus, predictions: &[Prediction]) -> Option<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    let mut seen = HashSet::new();
    for p in predictions {
        if !seen.insert(p.doc_id.as_str()) {
            continue;
        }
        if let Some(gold) = corpus.get(&p.doc_id).and_then(|d| d.label.as_deref()) {
            total += 1;
            if gold == p.label {
                correct += 1;
            }
        }
    }
    (total > 0).then(|| correct as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{CsrMatrix, PoolingMode};
    use ndarray::array;

    fn one_word_setup() -> (TextGraph, PoolingMatrix) {
        let vocab = Vocabulary::from_tokens(vec!["w".into()]).unwrap();
        let graph = TextGraph::from_edges(vocab.clone(), [], true).unwrap();
        let s = CsrMatrix::from_rows(1, vec![vec![(0, 1.0)]]);
        let pool = PoolingMatrix::new(
            vec!["d".into()],
            s,
            PoolingMode::Binary,
            vocab.digest(),
            None,
        )
        .unwrap();
        (graph, pool)
    }

    #[test]
    fn zero_weights_give_uniform_probs() {
        let (g, s) = one_word_setup();
        let p = forward(&g, &s, &Array2::zeros((1, 4))).unwrap();
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn scalar_softmax_example() {
        let (g, s) = one_word_setup();
        let p = forward(&g, &s, &array![[1.0, 0.0]]).unwrap();
        let e = std::f64::consts::E;
        assert!((p[[0, 0]] - e / (e + 1.0)).abs() < 1e-15);
        assert!((p[[0, 0]] - 0.7311).abs() < 1e-4 && (p[[0, 1]] - 0.2689).abs() < 1e-4);
    }

    #[test]
    fn non_finite_weights_are_state_errors() {
        let (g, s) = one_word_setup();
        assert!(matches!(
            forward(&g, &s, &array![[f64::NAN, 0.0]]),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn softmax_handles_large_and_shifted_logits() {
        let z = array![[1000.0, 999.0], [0.0, 0.0], [3.0, 1.0]];
        let p = softmax_rows(&z);
        assert!(p.iter().all(|v| v.is_finite()));
        let shifted = softmax_rows(&array![[1003.0, 1001.0]]);
        assert!((p[[2, 0]] - shifted[[0, 0]]).abs() < 1e-15);
    }

    #[test]
    fn loss_examples() {
        let w = Array2::zeros((1, 4));
        let uniform = Array2::from_elem((3, 4), 0.25);
        assert!((loss(&uniform, &[Some(0), Some(3), Some(1)], 0.0, &w) - 4f64.ln()).abs() < 1e-15);
        let onehot = array![[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(loss(&onehot, &[Some(0), Some(1)], 0.0, &w), 0.0);
        let p = array![[0.5, 0.5], [0.25, 0.75]];
        let expected = (2f64.ln() + 4f64.ln()) / 2.0;
        assert!((loss(&p, &[Some(0), Some(0)], 0.0, &w) - expected).abs() < 1e-15);
        assert!((expected - 1.0397).abs() < 1e-4);
        // Unlabeled rows are ignored; zero gold probability is clamped.
        assert!((loss(&p, &[Some(0), None], 0.0, &w) - 2f64.ln()).abs() < 1e-15);
        let zero = array![[0.0, 1.0]];
        assert!((loss(&zero, &[Some(0)], 0.0, &w) + PROB_FLOOR.ln()).abs() < 1e-9);
        // L2 term.
        let w2 = array![[1.0, 2.0]];
        assert!((loss(&onehot, &[Some(0), Some(1)], 0.5, &w2) - 1.25).abs() < 1e-15);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.25, 0.25, 0.5, 0.5]), 2);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        }
        .validate()
        .is_ok());
        assert!(TrainConfig {
            learning_rate: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            max_epochs: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            validation_fraction: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert_ne!(
            TrainConfig::default().digest(),
            TrainConfig {
                l2_weight: 1e-3,
                ..Default::default()
            }
            .digest()
        );
    }
}
