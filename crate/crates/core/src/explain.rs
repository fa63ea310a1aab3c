//! Word-importance reports. Scores come from `M = Ã W`, the quantity pooled
//! into logits, so a document's contributions `S_ji · M_iĉ` sum exactly to its
//! predicted-class logit.

use std::collections::HashSet;
use std::fmt::Write as _;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::graph::{PoolingMatrix, TextGraph};
use crate::model::{argmax, smoothed_scores, softmax_rows, ClassifierModel};

/// Highlighted words per document: one primary and this many minus one secondary.
pub const HIGHLIGHTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ScoreSource {
    /// `Ã W`.
    #[default]
    Smoothed,
    /// `W` as learned, before graph smoothing.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum ReportFormat {
    #[default]
    Ansi,
    Md,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordImportance {
    pub token: String,
    pub class_label: String,
    pub score: f64,
}

fn scores(model: &ClassifierModel, graph: &TextGraph, source: ScoreSource) -> Result<Array2<f64>> {
    if model.vocab.digest() != graph.vocab().digest() {
        return Err(Error::Compatibility {
            model: model.vocab.digest(),
            pooling: graph.vocab().digest(),
        });
    }
    Ok(match source {
        ScoreSource::Smoothed => smoothed_scores(graph, &model.weights),
        ScoreSource::Raw => model.weights.clone(),
    })
}

/// The `k` highest-scoring tokens for each class, ties broken by token order.
pub fn class_top_words(
    model: &ClassifierModel,
    graph: &TextGraph,
    k: usize,
    source: ScoreSource,
) -> Result<Vec<Vec<WordImportance>>> {
    let n = graph.num_nodes();
    if k == 0 || k > n {
        return Err(Error::Argument(format!("k = {k} must lie in 1..={n}")));
    }
    let m = scores(model, graph, source)?;
    let vocab = graph.vocab();
    Ok((0..model.num_classes())
        .map(|c| {
            let mut ids: Vec<usize> = (0..n).collect();
            ids.sort_by(|&a, &b| {
                m[[b, c]]
                    .total_cmp(&m[[a, c]])
                    .then_with(|| vocab.token(a).cmp(vocab.token(b)))
            });
            ids.into_iter()
                .take(k)
                .map(|i| WordImportance {
                    token: vocab.token(i).to_string(),
                    class_label: model.labels.name(c).expect("class in range").to_string(),
                    score: m[[i, c]],
                })
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub token: String,
    /// Pooling weight `S_ji`.
    pub weight: f64,
    /// Smoothed score `M_iĉ` for the predicted class.
    pub score: f64,
    pub contribution: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HighlightStyle {
    /// Rank 1 (red in reports).
    Primary,
    /// Ranks 2 to 5 (blue in reports).
    Secondary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Highlight {
    pub token: String,
    pub rank: usize,
    pub style: HighlightStyle,
    /// Whether the token occurs in the displayed text; absent tokens are
    /// listed as footnotes.
    pub in_text: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocExplanation {
    pub doc_id: String,
    pub predicted: String,
    pub class: usize,
    pub logit: f64,
    pub probs: Vec<f64>,
    pub no_knowledge: bool,
    pub contributions: Vec<Contribution>,
    pub highlights: Vec<Highlight>,
    pub display_text: String,
}

/// Explains one document from its pooling row `(node, S_ji)`.
pub fn explain_document(
    model: &ClassifierModel,
    graph: &TextGraph,
    pooling_row: &[(usize, f64)],
    doc: &Document,
    source: ScoreSource,
) -> Result<DocExplanation> {
    let m = scores(model, graph, ScoreSource::Smoothed)?;
    let rank_scores = match source {
        ScoreSource::Smoothed => None,
        ScoreSource::Raw => Some(&model.weights),
    };
    let n_classes = model.num_classes();
    let vocab = graph.vocab();
    if let Some(&(bad, _)) = pooling_row.iter().find(|(i, _)| *i >= vocab.len()) {
        return Err(Error::Consistency(format!(
            "pooling column {bad} outside vocabulary"
        )));
    }

    let mut logits = vec![0.0; n_classes];
    for &(i, s) in pooling_row {
        for (c, z) in logits.iter_mut().enumerate() {
            *z += s * m[[i, c]];
        }
    }
    let probs = softmax_rows(&Array2::from_shape_vec((1, n_classes), logits.clone()).expect("row"))
        .into_raw_vec_and_offset()
        .0;
    let class = argmax(&probs);

    let mut contributions: Vec<(Contribution, f64)> = pooling_row
        .iter()
        .filter(|(_, s)| *s != 0.0)
        .map(|&(i, s)| {
            let rank_key = rank_scores.map_or(s * m[[i, class]], |w| s * w[[i, class]]);
            (
                Contribution {
                    token: vocab.token(i).to_string(),
                    weight: s,
                    score: m[[i, class]],
                    contribution: s * m[[i, class]],
                },
                rank_key,
            )
        })
        .collect();
    contributions.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.token.cmp(&b.0.token)));

    let display_text = doc.display_text().to_string();
    let present: HashSet<String> = crate::graph::tokenize(&display_text).into_iter().collect();
    let highlights = contributions
        .iter()
        .take(HIGHLIGHTS)
        .enumerate()
        .map(|(r, (c, _))| Highlight {
            token: c.token.clone(),
            rank: r + 1,
            style: if r == 0 {
                HighlightStyle::Primary
            } else {
                HighlightStyle::Secondary
            },
            in_text: present.contains(&c.token),
        })
        .collect();

    Ok(DocExplanation {
        doc_id: doc.id.clone(),
        predicted: model
            .labels
            .name(class)
            .expect("class in range")
            .to_string(),
        class,
        logit: logits[class],
        probs,
        no_knowledge: contributions.is_empty(),
        contributions: contributions.into_iter().map(|(c, _)| c).collect(),
        highlights,
        display_text,
    })
}

/// Explains the pooling row belonging to `doc`.
pub fn explain_from_pooling(
    model: &ClassifierModel,
    graph: &TextGraph,
    pooling: &PoolingMatrix,
    doc: &Document,
    source: ScoreSource,
) -> Result<DocExplanation> {
    if pooling.vocab_digest() != model.vocab.digest() {
        return Err(Error::Compatibility {
            model: model.vocab.digest(),
            pooling: pooling.vocab_digest().to_string(),
        });
    }
    let row = pooling
        .row_index(&doc.id)
        .ok_or_else(|| Error::Argument(format!("document {:?} has no pooling row", doc.id)))?;
    let row: Vec<(usize, f64)> = pooling.matrix().row(row).collect();
    explain_document(model, graph, &row, doc, source)
}

/// Splits `text` into `(piece, style)` spans, styling every whitespace-delimited
/// word whose token form is highlighted. Leading/trailing punctuation stays
/// outside the styled span.
pub fn styled_spans<'a>(
    text: &'a str,
    highlights: &[Highlight],
) -> Vec<(&'a str, Option<HighlightStyle>)> {
    let mut spans = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        let ws_len = rest.len() - rest.trim_start().len();
        if ws_len > 0 {
            spans.push((&rest[..ws_len], None));
            rest = &rest[ws_len..];
            continue;
        }
        let word_len = rest.find(char::is_whitespace).unwrap_or(rest.len());
        let word = &rest[..word_len];
        rest = &rest[word_len..];
        let core = word.trim_matches(|c: char| !c.is_alphanumeric());
        let style = (!core.is_empty())
            .then(|| core.to_lowercase())
            .and_then(|t| highlights.iter().find(|h| h.token == t))
            .map(|h| h.style);
        match style {
            Some(style) => {
                let start = word.find(core).expect("core is a substring");
                let end = start + core.len();
                if start > 0 {
                    spans.push((&word[..start], None));
                }
                spans.push((&word[start..end], Some(style)));
                if end < word.len() {
                    spans.push((&word[end..], None));
                }
            }
            None => spans.push((word, None)),
        }
    }
    spans
}

const ANSI_PRIMARY: &str = "\x1b[1;31m";
const ANSI_SECONDARY: &str = "\x1b[34m";
const ANSI_RESET: &str = "\x1b[0m";
const MD_PRIMARY: &str = "<span style=\"color:rgb(255,0,0)\">";
const MD_SECONDARY: &str = "<span style=\"color:rgb(0,0,255)\">";

fn render_text(e: &DocExplanation, format: ReportFormat) -> String {
    let mut out = String::new();
    for (piece, style) in styled_spans(&e.display_text, &e.highlights) {
        match (format, style) {
            (_, None) => out.push_str(piece),
            (ReportFormat::Md, Some(HighlightStyle::Primary)) => {
                write!(out, "{MD_PRIMARY}{piece}</span>").unwrap()
            }
            (ReportFormat::Md, Some(HighlightStyle::Secondary)) => {
                write!(out, "{MD_SECONDARY}{piece}</span>").unwrap()
            }
            (_, Some(HighlightStyle::Primary)) => {
                write!(out, "{ANSI_PRIMARY}{piece}{ANSI_RESET}").unwrap()
            }
            (_, Some(HighlightStyle::Secondary)) => {
                write!(out, "{ANSI_SECONDARY}{piece}{ANSI_RESET}").unwrap()
            }
        }
    }
    out
}

/// Renders one document explanation. `ansi` and `md` carry the same content.
pub fn render_document(e: &DocExplanation, format: ReportFormat) -> String {
    if format == ReportFormat::Json {
        return serde_json::to_string(e).expect("explanation serializes");
    }
    let md = format == ReportFormat::Md;
    let mut out = String::new();
    if md {
        writeln!(
            out,
            "### {}\n\npredicted: **{}** (logit {:.4})\n",
            e.doc_id, e.predicted, e.logit
        )
        .unwrap();
    } else {
        writeln!(
            out,
            "== {} ==\npredicted: {} (logit {:.4})",
            e.doc_id, e.predicted, e.logit
        )
        .unwrap();
    }
    if e.no_knowledge {
        writeln!(
            out,
            "no extracted knowledge: the prediction is the uniform default"
        )
        .unwrap();
        return out;
    }
    writeln!(out, "{}", render_text(e, format)).unwrap();
    let missing: Vec<&Highlight> = e.highlights.iter().filter(|h| !h.in_text).collect();
    if !missing.is_empty() {
        if md {
            out.push('\n');
        }
        writeln!(out, "not in displayed text:").unwrap();
        for h in missing {
            let marker = match h.style {
                HighlightStyle::Primary => "*",
                HighlightStyle::Secondary => "+",
            };
            writeln!(
                out,
                "{}{marker} {} (rank {})",
                if md { "- " } else { "  " },
                h.token,
                h.rank
            )
            .unwrap();
        }
    }
    if md {
        out.push('\n');
    }
    writeln!(out, "top contributions:").unwrap();
    for c in e.contributions.iter().take(HIGHLIGHTS) {
        writeln!(
            out,
            "{}{:<20} {:+.6}",
            if md { "- " } else { "  " },
            c.token,
            c.contribution
        )
        .unwrap();
    }
    out
}

/// Renders the per-class top-word table.
pub fn render_class_words(words: &[Vec<WordImportance>], format: ReportFormat) -> String {
    if format == ReportFormat::Json {
        return serde_json::to_string(words).expect("importances serialize");
    }
    let mut out = String::new();
    for class in words {
        let Some(first) = class.first() else { continue };
        let list: Vec<String> = class
            .iter()
            .map(|w| format!("{} ({:.4})", w.token, w.score))
            .collect();
        match format {
            ReportFormat::Md => writeln!(out, "- **{}**: {}", first.class_label, list.join(", ")),
            _ => writeln!(out, "{}: {}", first.class_label, list.join(", ")),
        }
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{LabelSet, Split};
    use crate::graph::Vocabulary;
    use crate::model::TrainConfig;
    use ndarray::array;

    fn model_and_graph(tokens: &[&str], weights: Array2<f64>) -> (ClassifierModel, TextGraph) {
        let vocab =
            Vocabulary::from_tokens(tokens.iter().map(|t| t.to_string()).collect()).unwrap();
        let graph = TextGraph::identity(vocab.clone());
        let labels =
            LabelSet::new((0..weights.ncols()).map(|c| format!("c{c}")).collect()).unwrap();
        let model = ClassifierModel {
            weights,
            vocab,
            labels,
            config: TrainConfig::default(),
            config_digest: String::new(),
            loss_trace: Vec::new(),
        };
        (model, graph)
    }

    fn doc(text: &str) -> Document {
        Document {
            id: "d".into(),
            raw_text: text.into(),
            refined_text: None,
            split: Split::Test,
            label: None,
        }
    }

    #[test]
    fn zero_weights_list_lexicographic_tokens() {
        let (m, g) = model_and_graph(&["b", "a", "c"], Array2::zeros((3, 2)));
        let top = class_top_words(&m, &g, 2, ScoreSource::Smoothed).unwrap();
        for class in &top {
            assert_eq!(
                class.iter().map(|w| w.token.as_str()).collect::<Vec<_>>(),
                ["a", "b"]
            );
        }
        assert!(class_top_words(&m, &g, 4, ScoreSource::Smoothed).is_err());
        let all = class_top_words(&m, &g, 3, ScoreSource::Smoothed).unwrap();
        assert!(all.iter().all(|c| c.len() == 3));
    }

    #[test]
    fn single_word_document() {
        let (m, g) = model_and_graph(&["rate", "bank"], array![[2.0, 0.5], [0.0, 1.0]]);
        let e = explain_document(
            &m,
            &g,
            &[(0, 1.0)],
            &doc("The rate rose."),
            ScoreSource::Smoothed,
        )
        .unwrap();
        assert_eq!(e.predicted, "c0");
        assert_eq!(e.highlights.len(), 1);
        let sum: f64 = e.contributions.iter().map(|c| c.contribution).sum();
        assert_eq!(sum, e.logit);
        let ansi = render_document(&e, ReportFormat::Ansi);
        assert!(
            ansi.contains(&format!("The {ANSI_PRIMARY}rate{ANSI_RESET} rose.")),
            "{ansi}"
        );
    }

    #[test]
    fn zero_row_states_no_knowledge() {
        let (m, g) = model_and_graph(&["rate"], array![[1.0, 0.0]]);
        let e = explain_document(&m, &g, &[], &doc("text"), ScoreSource::Smoothed).unwrap();
        assert!(e.no_knowledge && e.highlights.is_empty());
        assert_eq!(e.class, 0);
        assert!(render_document(&e, ReportFormat::Md).contains("no extracted knowledge"));
    }

    #[test]
    fn case_one_style_highlights() {
        let toks = [
            "bank",
            "france",
            "intervention",
            "maintain",
            "of",
            "official",
            "rate",
        ];
        let w = array![
            [0.8, 0.0],
            [0.7, 0.0],
            [0.1, 0.0],
            [0.6, 0.0],
            [0.05, 0.0],
            [0.5, 0.0],
            [1.5, 0.0]
        ];
        let (m, g) = model_and_graph(&toks, w);
        let row: Vec<(usize, f64)> = (0..toks.len()).map(|i| (i, 1.0)).collect();
        let text = "The Bank of France has decided to maintain its intervention rate at the current percentage, according to an official statement.";
        let e = explain_document(&m, &g, &row, &doc(text), ScoreSource::Smoothed).unwrap();
        let ranked: Vec<&str> = e.highlights.iter().map(|h| h.token.as_str()).collect();
        assert_eq!(ranked, ["rate", "bank", "france", "maintain", "official"]);
        let md = render_document(&e, ReportFormat::Md);
        assert!(md.contains(&format!("{MD_PRIMARY}rate</span>")));
        assert!(md.contains(&format!("{MD_SECONDARY}Bank</span>")));
        assert_eq!(md.matches(MD_SECONDARY).count(), 4);
        let spans = styled_spans(text, &e.highlights);
        assert_eq!(spans.iter().filter(|s| s.1.is_some()).count(), 5);
        let json: DocExplanation =
            serde_json::from_str(&render_document(&e, ReportFormat::Json)).unwrap();
        assert_eq!(json, e);
    }

    #[test]
    fn absent_tokens_become_footnotes() {
        let (m, g) = model_and_graph(&["kg", "only"], array![[1.0, 0.0], [0.5, 0.0]]);
        let e = explain_document(
            &m,
            &g,
            &[(0, 1.0), (1, 1.0)],
            &doc("only words here"),
            ScoreSource::Smoothed,
        )
        .unwrap();
        assert!(!e.highlights[0].in_text);
        let out = render_document(&e, ReportFormat::Ansi);
        assert!(
            out.contains("not in displayed text") && out.contains("* kg (rank 1)"),
            "{out}"
        );
    }
}
