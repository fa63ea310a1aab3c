//! The `graphtext` command line: one subcommand per pipeline stage, the
//! evaluation harness, baselines, and an end-to-end `pipeline`.

mod config;
mod stages;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::baselines::{llm_classify, summary_tsv, tfidf_logreg, write_outcomes, SummaryRow};
use crate::corpus::{load_corpus, read_refined, write_file, write_refined, Corpus};
use crate::error::{Error, Result};
use crate::explain::{
    class_top_words, explain_from_pooling, render_class_words, render_document, ReportFormat,
    ScoreSource,
};
use crate::graph::{
    build_text_graph, BuildOptions, GraphArtifact, Membership, PoolingMatrix, PoolingMode,
    TextGraph,
};
use crate::harness::{format_accuracy, limited_csv, limited_data, predictions_tsv, test_accuracy};
use crate::llm::{load_shot_bank, LlmClient, LlmConfig};
use crate::manifest::{ManifestBuilder, RunManifest};
use crate::model::{train, ClassifierModel, TrainConfig};
use crate::synth::{generate, separable_toy, SynthConfig};
use crate::tripleparse::{read_triples, write_triples, ExtractionResult};

pub use config::{AppConfig, EvalConfig, MockConfig};
pub use stages::{extract_corpus, make_client, refine_corpus, ProviderChoice, StageOutput};

#[derive(Debug, Parser)]
#[command(
    name = "graphtext",
    version,
    about = "Interpretable text classification over LLM-extracted word graphs"
)]
pub struct Cli {
    /// TOML configuration file; command-line flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rewrite each document with the refinement prompt.
    Refine {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        llm: LlmArgs,
        /// Refined-text JSONL output.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        manifest: ManifestArg,
    },
    /// Extract knowledge-graph triples per document.
    Extract {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        llm: LlmArgs,
        /// Refined-text JSONL from `refine`; raw text is used when omitted.
        #[arg(long)]
        refined: Option<PathBuf>,
        /// Triples JSONL output.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        manifest: ManifestArg,
    },
    /// Build the word graph and pooling matrix from triples.
    Build {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        triples: PathBuf,
        #[arg(long)]
        refined: Option<PathBuf>,
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        manifest: ManifestArg,
    },
    /// Train the classifier on the training split.
    Train {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        graph: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
        /// Model artifact output.
        #[arg(long)]
        out: PathBuf,
        /// Loss trace CSV; defaults to the model path with a `.loss.csv` extension.
        #[arg(long)]
        loss_csv: Option<PathBuf>,
        #[command(flatten)]
        manifest: ManifestArg,
    },
    /// Evaluate a trained model, or run the limited-training-data sweep.
    Eval {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, required_unless_present = "limited")]
        graph: Option<PathBuf>,
        #[arg(long, required_unless_present = "limited")]
        model: Option<PathBuf>,
        /// Predictions TSV output.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Comma-separated training sizes for the sweep.
        #[arg(long, value_delimiter = ',', requires = "triples")]
        limited: Option<Vec<usize>>,
        /// Comma-separated seeds for the sweep.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Triples JSONL; the sweep rebuilds the graph for every subsample.
        #[arg(long)]
        triples: Option<PathBuf>,
        #[arg(long)]
        refined: Option<PathBuf>,
        #[command(flatten)]
        graph_opts: GraphArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Sweep CSV output (`train_size,mean,std,n_seeds`).
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        manifest: ManifestArg,
    },
    /// Per-class top words and per-document highlighted explanations.
    Explain {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        refined: Option<PathBuf>,
        /// Documents to explain; all test documents when omitted.
        #[arg(long = "doc")]
        docs: Vec<String>,
        /// Words listed per class.
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        #[arg(long, value_enum, default_value_t = ReportFormat::Ansi)]
        format: ReportFormat,
        /// Rank by the learned weights before graph smoothing.
        #[arg(long)]
        raw_weights: bool,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Comparison methods: TF-IDF + logistic regression, or LLM few-shot classification.
    Baseline {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, value_enum)]
        method: BaselineMethod,
        /// Comma-separated shot counts (0, 1, 2 or 5) for the LLM method.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        shots: Vec<usize>,
        /// JSONL of `{text, good_label, bad_label}` in-prompt examples.
        #[arg(long)]
        shot_bank: Option<PathBuf>,
        #[command(flatten)]
        llm: LlmArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Directory for the summary TSV and per-method outputs.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// refine, extract, build, train, eval and explain in one run.
    Pipeline {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        llm: LlmArgs,
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Working directory for every artifact of the run.
        #[arg(long)]
        work_dir: PathBuf,
    },
    /// Write a synthetic corpus.
    Synth {
        #[arg(long, value_enum, default_value_t = SynthKind::Benchmark)]
        kind: SynthKind,
        #[arg(long)]
        seed: Option<u64>,
        /// Writes `corpus.txt` and `meta.tsv` here.
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineMethod {
    TfidfLr,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    Benchmark,
    Toy2,
    Toy4,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// One document per line.
    #[arg(long)]
    pub corpus: PathBuf,
    /// `<id>\t<split>\t<label>` per line, parallel to the corpus file.
    #[arg(long)]
    pub meta: PathBuf,
}

impl CorpusArgs {
    fn load(&self, refined: Option<&Path>, m: &mut ManifestBuilder) -> Result<Corpus> {
        m.input(&self.corpus)?;
        m.input(&self.meta)?;
        let mut corpus = load_corpus(&self.corpus, &self.meta)?;
        if let Some(path) = refined {
            m.input(path)?;
            corpus.attach_refined(&read_refined(path)?)?;
        }
        Ok(corpus)
    }
}

#[derive(Debug, Args)]
pub struct LlmArgs {
    /// Offline deterministic provider: refinement echoes the text, extraction
    /// emits token trigrams.
    #[arg(long)]
    pub mock: bool,
    /// JSONL of canned responses keyed by cache key or doc_id.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Response cache file.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub llm_model: Option<String>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Trigram stride for the mock extractor.
    #[arg(long)]
    pub stride: Option<usize>,
}

impl LlmArgs {
    fn resolve(&self, file: &AppConfig, default_cache: Option<&Path>) -> (LlmConfig, usize) {
        let mut llm = file.llm.clone();
        if let Some(m) = &self.llm_model {
            llm.model = m.clone();
        }
        if let Some(w) = self.workers {
            llm.workers = w;
        }
        if let Some(c) = &self.cache {
            llm.cache_path = Some(c.clone());
        } else if llm.cache_path.is_none() {
            llm.cache_path = default_cache.map(Path::to_path_buf);
        }
        (llm, self.stride.unwrap_or(file.mock.stride))
    }

    fn client(&self, llm: &LlmConfig, stride: usize) -> Result<LlmClient> {
        if stride == 0 {
            return Err(Error::Argument("stride must be positive".into()));
        }
        let choice = match (&self.fixtures, self.mock) {
            (Some(path), mock) => ProviderChoice::Fixtures {
                path,
                mock_fallback: mock.then_some(stride),
            },
            (None, true) => ProviderChoice::Mock { stride },
            (None, false) => ProviderChoice::Http,
        };
        make_client(llm, choice)
    }
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    #[arg(long, value_enum)]
    pub mode: Option<PoolingMode>,
    /// Document word membership: triple tokens or all refined-text tokens.
    #[arg(long, value_enum)]
    pub membership: Option<Membership>,
    /// Build the graph from train and test triples (never test labels).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub transductive: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub self_loops: Option<bool>,
}

impl GraphArgs {
    fn resolve(&self, file: &AppConfig) -> BuildOptions {
        let mut o = file.graph;
        if let Some(m) = self.mode {
            o.mode = m;
        }
        if let Some(m) = self.membership {
            o.membership = m;
        }
        if let Some(t) = self.transductive {
            o.transductive = t;
        }
        if let Some(s) = self.self_loops {
            o.self_loops = s;
        }
        o
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub l2_weight: Option<f64>,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub momentum: Option<f64>,
}

impl TrainArgs {
    fn resolve(&self, file: &AppConfig) -> Result<TrainConfig> {
        let mut c = file.train;
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        set!(
            learning_rate,
            max_epochs,
            tolerance,
            l2_weight,
            validation_fraction,
            patience,
            momentum
        );
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct ManifestArg {
    /// Run manifest path; defaults to the main output with `.manifest.json` appended.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

impl ManifestArg {
    fn path(&self, out: &Path) -> PathBuf {
        self.manifest.clone().unwrap_or_else(|| {
            let mut s = out.as_os_str().to_owned();
            s.push(".manifest.json");
            PathBuf::from(s)
        })
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Argument(e.to_string()))?;
    run(cli)
}

pub fn run(cli: Cli) -> Result<()> {
    let file = AppConfig::load_or_default(cli.config.as_deref())?;
    match cli.command {
        Command::Refine {
            corpus,
            llm,
            out,
            manifest,
        } => cmd_refine(&file, &corpus, &llm, &out, &manifest.path(&out)),
        Command::Extract {
            corpus,
            llm,
            refined,
            out,
            manifest,
        } => cmd_extract(
            &file,
            &corpus,
            &llm,
            refined.as_deref(),
            &out,
            &manifest.path(&out),
        ),
        Command::Build {
            corpus,
            triples,
            refined,
            graph,
            out,
            manifest,
        } => cmd_build(
            &file,
            &corpus,
            &triples,
            refined.as_deref(),
            &graph,
            &out,
            &manifest.path(&out),
        ),
        Command::Train {
            corpus,
            graph,
            train,
            out,
            loss_csv,
            manifest,
        } => {
            let loss_csv = loss_csv.unwrap_or_else(|| out.with_extension("loss.csv"));
            cmd_train(
                &file,
                &corpus,
                &graph,
                &train,
                &out,
                &loss_csv,
                &manifest.path(&out),
            )
        }
        Command::Eval {
            corpus,
            graph,
            model,
            predictions,
            limited,
            seeds,
            triples,
            refined,
            graph_opts,
            train,
            csv,
            manifest,
        } => match limited {
            Some(sizes) => {
                let triples = triples.expect("clap requires triples with limited");
                let seeds = seeds.unwrap_or_else(|| file.eval.seeds.clone());
                let sizes = if sizes.is_empty() {
                    file.eval.limited_sizes.clone()
                } else {
                    sizes
                };
                let out = csv
                    .clone()
                    .unwrap_or_else(|| triples.with_extension("limited.csv"));
                cmd_eval_limited(
                    &file,
                    &corpus,
                    &triples,
                    refined.as_deref(),
                    &graph_opts,
                    &train,
                    &sizes,
                    &seeds,
                    &out,
                    &manifest.path(&out),
                )
            }
            None => {
                let (graph, model) = (
                    graph.expect("clap requires graph"),
                    model.expect("clap requires model"),
                );
                let predictions =
                    predictions.unwrap_or_else(|| model.with_extension("predictions.tsv"));
                cmd_eval(
                    &corpus,
                    &graph,
                    &model,
                    &predictions,
                    &manifest.path(&predictions),
                )
            }
        },
        Command::Explain {
            corpus,
            graph,
            model,
            refined,
            docs,
            top_k,
            format,
            raw_weights,
            out,
        } => {
            let source = if raw_weights {
                ScoreSource::Raw
            } else {
                ScoreSource::Smoothed
            };
            let report = cmd_explain(
                &corpus,
                &graph,
                &model,
                refined.as_deref(),
                &docs,
                top_k,
                format,
                source,
            )?;
            match out {
                Some(path) => write_file(&path, report.as_bytes()),
                None => {
                    print!("{report}");
                    Ok(())
                }
            }
        }
        Command::Baseline {
            corpus,
            method,
            shots,
            shot_bank,
            llm,
            train,
            out_dir,
        } => cmd_baseline(
            &file,
            &corpus,
            method,
            &shots,
            shot_bank.as_deref(),
            &llm,
            &train,
            &out_dir,
        ),
        Command::Pipeline {
            corpus,
            llm,
            graph,
            train,
            work_dir,
        } => cmd_pipeline(&file, &corpus, &llm, &graph, &train, &work_dir).map(|_| ()),
        Command::Synth {
            kind,
            seed,
            out_dir,
        } => cmd_synth(kind, seed, &out_dir),
    }
}

fn finish_manifest(m: ManifestBuilder, path: &Path) -> Result<RunManifest> {
    let manifest = m.finish();
    manifest.save(path)?;
    Ok(manifest)
}

fn first_error_or(err: Option<Error>) -> Result<()> {
    err.map_or(Ok(()), Err)
}

pub fn cmd_refine(
    file: &AppConfig,
    corpus: &CorpusArgs,
    llm: &LlmArgs,
    out: &Path,
    manifest: &Path,
) -> Result<()> {
    let (llm_cfg, stride) = llm.resolve(file, None);
    let mut m = ManifestBuilder::start("refine", &llm_cfg);
    let corpus = corpus.load(None, &mut m)?;
    let client = llm.client(&llm_cfg, stride)?;
    let stage = refine_corpus(&corpus, &client, &llm_cfg)?;
    write_refined(&stage.records, out)?;
    m.output("refined", out);
    m.counters().add(&stage.counters);
    m.stat("documents", stage.records.len());
    finish_manifest(m, manifest)?;
    println!(
        "refined {} of {} documents -> {}",
        stage.records.len(),
        corpus.len(),
        out.display()
    );
    first_error_or(stage.first_error)
}

pub fn cmd_extract(
    file: &AppConfig,
    corpus: &CorpusArgs,
    llm: &LlmArgs,
    refined: Option<&Path>,
    out: &Path,
    manifest: &Path,
) -> Result<()> {
    let (llm_cfg, stride) = llm.resolve(file, None);
    let mut m = ManifestBuilder::start(
        "extract",
        &serde_json::json!({"llm": llm_cfg, "stride": stride}),
    );
    let corpus = corpus.load(refined, &mut m)?;
    let client = llm.client(&llm_cfg, stride)?;
    let stage = extract_corpus(&corpus, &client, &llm_cfg)?;
    write_triples(&stage.records, out)?;
    m.output("triples", out);
    m.counters().add(&stage.counters);
    m.stat(
        "triples",
        stage.records.iter().map(|r| r.triples.len()).sum::<usize>(),
    );
    finish_manifest(m, manifest)?;
    println!(
        "extracted {} triples from {} documents ({} none, {} malformed lines) -> {}",
        stage.records.iter().map(|r| r.triples.len()).sum::<usize>(),
        stage.records.len(),
        stage.counters.none_docs,
        stage.counters.malformed_lines,
        out.display()
    );
    first_error_or(stage.first_error)
}

fn build_stats(m: &mut ManifestBuilder, graph: &TextGraph, pooling: &PoolingMatrix) {
    let stats = pooling.stats();
    m.counters().oov_dropped = stats.oov_dropped;
    m.counters().none_docs = stats.none_docs;
    m.stat("vocab_size", graph.num_nodes());
    m.stat("edge_count", graph.edge_count());
    m.stat("idf_floored", stats.idf_floored);
}

pub fn cmd_build(
    file: &AppConfig,
    corpus: &CorpusArgs,
    triples: &Path,
    refined: Option<&Path>,
    graph: &GraphArgs,
    out: &Path,
    manifest: &Path,
) -> Result<()> {
    let options = graph.resolve(file);
    let mut m = ManifestBuilder::start("build", &options);
    let corpus = corpus.load(refined, &mut m)?;
    m.input(triples)?;
    let results = read_triples(triples)?;
    let (graph, pooling) = build_text_graph(&results, &corpus, options)?;
    GraphArtifact::new(&graph, &pooling, options).save(out)?;
    m.output("graph", out);
    build_stats(&mut m, &graph, &pooling);
    finish_manifest(m, manifest)?;
    println!(
        "graph: {} words, {} edges, {} none documents -> {}",
        graph.num_nodes(),
        graph.edge_count(),
        pooling.stats().none_docs,
        out.display()
    );
    Ok(())
}

fn load_graph(path: &Path, m: &mut ManifestBuilder) -> Result<(TextGraph, PoolingMatrix)> {
    m.input(path)?;
    GraphArtifact::load(path)?.into_parts()
}

pub fn cmd_train(
    file: &AppConfig,
    corpus: &CorpusArgs,
    graph: &Path,
    train_args: &TrainArgs,
    out: &Path,
    loss_csv: &Path,
    manifest: &Path,
) -> Result<()> {
    let config = train_args.resolve(file)?;
    let mut m = ManifestBuilder::start("train", &config);
    let corpus = corpus.load(None, &mut m)?;
    let (graph, pooling) = load_graph(graph, &mut m)?;
    let model = train(&graph, &pooling, &corpus, &config)?;
    model.save(out)?;
    write_file(loss_csv, model.loss_csv().as_bytes())?;
    m.output("model", out);
    m.output("loss_csv", loss_csv);
    let last = model.loss_trace.last().expect("at least one epoch");
    m.stat("epochs", last.epoch);
    m.stat("final_loss", last.loss);
    finish_manifest(m, manifest)?;
    println!(
        "trained {} updates, final loss {:.6} -> {}",
        last.epoch,
        last.loss,
        out.display()
    );
    Ok(())
}

pub fn cmd_eval(
    corpus: &CorpusArgs,
    graph: &Path,
    model: &Path,
    predictions: &Path,
    manifest: &Path,
) -> Result<()> {
    let mut m = ManifestBuilder::start("eval", &());
    let corpus = corpus.load(None, &mut m)?;
    let (graph, pooling) = load_graph(graph, &mut m)?;
    m.input(model)?;
    let model = ClassifierModel::load(model)?;
    let test_ids: Vec<String> = corpus.test().map(|d| d.id.clone()).collect();
    let preds = model.predict(&graph, &pooling.select(&test_ids)?)?;
    write_file(predictions, predictions_tsv(&corpus, &preds).as_bytes())?;
    m.output("predictions", predictions);
    let acc = test_accuracy(&corpus, &preds);
    m.stat("accuracy", acc);
    m.stat("test_documents", preds.len());
    finish_manifest(m, manifest)?;
    match acc {
        Some(a) => println!("accuracy {}", format_accuracy(&[a])),
        None => println!("accuracy NA (no labeled test documents)"),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_eval_limited(
    file: &AppConfig,
    corpus: &CorpusArgs,
    triples: &Path,
    refined: Option<&Path>,
    graph: &GraphArgs,
    train_args: &TrainArgs,
    sizes: &[usize],
    seeds: &[u64],
    out: &Path,
    manifest: &Path,
) -> Result<()> {
    let options = graph.resolve(file);
    let config = train_args.resolve(file)?;
    let mut m = ManifestBuilder::start(
        "eval-limited",
        &serde_json::json!({"graph": options, "train": config, "sizes": sizes, "seeds": seeds}),
    );
    let corpus = corpus.load(refined, &mut m)?;
    m.input(triples)?;
    let results = read_triples(triples)?;
    let rows = limited_data(&corpus, &results, sizes, seeds, options, &config)?;
    write_file(out, limited_csv(&rows).as_bytes())?;
    m.output("csv", out);
    m.stat("rows", &rows);
    finish_manifest(m, manifest)?;
    for r in &rows {
        println!(
            "train_size {:>6}  accuracy {}",
            r.train_size,
            format_accuracy(&r.accuracies)
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_explain(
    corpus: &CorpusArgs,
    graph: &Path,
    model: &Path,
    refined: Option<&Path>,
    docs: &[String],
    top_k: usize,
    format: ReportFormat,
    source: ScoreSource,
) -> Result<String> {
    let mut m = ManifestBuilder::start("explain", &());
    let corpus = corpus.load(refined, &mut m)?;
    let (graph, pooling) = load_graph(graph, &mut m)?;
    let model = ClassifierModel::load(model)?;
    explain_report(
        &corpus, &graph, &pooling, &model, docs, top_k, format, source,
    )
}

#[allow(clippy::too_many_arguments)]
fn explain_report(
    corpus: &Corpus,
    graph: &TextGraph,
    pooling: &PoolingMatrix,
    model: &ClassifierModel,
    docs: &[String],
    top_k: usize,
    format: ReportFormat,
    source: ScoreSource,
) -> Result<String> {
    let selected: Vec<&crate::corpus::Document> = if docs.is_empty() {
        corpus.test().collect()
    } else {
        docs.iter()
            .map(|id| {
                corpus
                    .get(id)
                    .ok_or_else(|| Error::Argument(format!("unknown document {id:?}")))
            })
            .collect::<Result<_>>()?
    };
    let top_k = top_k.min(graph.num_nodes());
    let words = class_top_words(model, graph, top_k, source)?;
    let explanations = selected
        .iter()
        .map(|d| explain_from_pooling(model, graph, pooling, d, source))
        .collect::<Result<Vec<_>>>()?;

    if format == ReportFormat::Json {
        let v = serde_json::json!({"class_words": words, "documents": explanations});
        return Ok(serde_json::to_string(&v).expect("report serializes") + "\n");
    }
    let mut out = String::new();
    if format == ReportFormat::Md {
        out.push_str("## Top words per class\n\n");
    } else {
        out.push_str("Top words per class\n");
    }
    out.push_str(&render_class_words(&words, format));
    out.push('\n');
    for e in &explanations {
        out.push_str(&render_document(e, format));
        out.push('\n');
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_baseline(
    file: &AppConfig,
    corpus: &CorpusArgs,
    method: BaselineMethod,
    shots: &[usize],
    shot_bank: Option<&Path>,
    llm: &LlmArgs,
    train_args: &TrainArgs,
    out_dir: &Path,
) -> Result<()> {
    let mut rows = Vec::new();
    let summary = out_dir.join("summary.tsv");
    let manifest = out_dir.join("manifest.json");
    match method {
        BaselineMethod::TfidfLr => {
            let config = train_args.resolve(file)?;
            let mut m = ManifestBuilder::start("baseline tfidf-lr", &config);
            let corpus = corpus.load(None, &mut m)?;
            let run = tfidf_logreg(&corpus, &config)?;
            let preds = out_dir.join("tfidf-lr.predictions.tsv");
            write_file(
                &preds,
                predictions_tsv(&corpus, &run.predictions).as_bytes(),
            )?;
            rows.push(SummaryRow {
                method: "tfidf-lr".into(),
                shots: None,
                accuracy: run.accuracy,
                n: run.predictions.len(),
            });
            write_file(&summary, summary_tsv(&rows).as_bytes())?;
            m.output("predictions", &preds);
            m.output("summary", &summary);
            m.stat("accuracy", run.accuracy);
            finish_manifest(m, &manifest)?;
        }
        BaselineMethod::Llm => {
            let (llm_cfg, stride) = llm.resolve(file, None);
            let mut m = ManifestBuilder::start("baseline llm", &llm_cfg);
            let corpus = corpus.load(None, &mut m)?;
            let bank = match shot_bank {
                Some(p) => {
                    m.input(p)?;
                    load_shot_bank(p)?
                }
                None => Vec::new(),
            };
            let client = llm.client(&llm_cfg, stride)?;
            for &k in shots {
                let report = llm_classify(&corpus, k, &bank, &client, &llm_cfg)?;
                let path = out_dir.join(format!("llm-{k}shot.outcomes.jsonl"));
                write_outcomes(&report.outcomes, &path)?;
                m.output(&format!("outcomes_{k}shot"), &path);
                m.counters().failed_docs +=
                    report.outcomes.iter().filter(|o| o.error.is_some()).count();
                rows.push(SummaryRow {
                    method: "llm".into(),
                    shots: Some(k),
                    accuracy: report.accuracy,
                    n: report.outcomes.len(),
                });
            }
            let stats = client.stats();
            m.counters().provider_calls = stats.provider_calls;
            m.counters().cache_hits = stats.cache_hits;
            write_file(&summary, summary_tsv(&rows).as_bytes())?;
            m.output("summary", &summary);
            finish_manifest(m, &manifest)?;
        }
    }
    print!("{}", summary_tsv(&rows));
    Ok(())
}

/// Artifact paths written by `pipeline` inside its working directory.
pub struct PipelinePaths {
    pub refined: PathBuf,
    pub triples: PathBuf,
    pub graph: PathBuf,
    pub model: PathBuf,
    pub loss_csv: PathBuf,
    pub predictions: PathBuf,
    pub explanations: PathBuf,
    pub cache: PathBuf,
    pub manifest: PathBuf,
}

impl PipelinePaths {
    pub fn new(dir: &Path) -> Self {
        Self {
            refined: dir.join("refined.jsonl"),
            triples: dir.join("triples.jsonl"),
            graph: dir.join("graph.json"),
            model: dir.join("model.json"),
            loss_csv: dir.join("loss.csv"),
            predictions: dir.join("predictions.tsv"),
            explanations: dir.join("explanations.md"),
            cache: dir.join("cache.jsonl"),
            manifest: dir.join("manifest.json"),
        }
    }
}

/// Runs every stage and writes one manifest for the whole run.
pub fn cmd_pipeline(
    file: &AppConfig,
    corpus_args: &CorpusArgs,
    llm: &LlmArgs,
    graph_args: &GraphArgs,
    train_args: &TrainArgs,
    work_dir: &Path,
) -> Result<RunManifest> {
    let paths = PipelinePaths::new(work_dir);
    let (llm_cfg, stride) = llm.resolve(file, Some(&paths.cache));
    let options = graph_args.resolve(file);
    let config = train_args.resolve(file)?;
    let mut m = ManifestBuilder::start(
        "pipeline",
        &serde_json::json!({"llm": llm_cfg, "stride": stride, "graph": options, "train": config}),
    );
    let mut corpus = corpus_args.load(None, &mut m)?;
    corpus.require_end_to_end()?;
    let client = llm.client(&llm_cfg, stride)?;

    let refined = refine_corpus(&corpus, &client, &llm_cfg)?;
    m.counters().add(&refined.counters);
    if let Some(e) = refined.first_error {
        finish_manifest(m, &paths.manifest)?;
        return Err(e);
    }
    write_refined(&refined.records, &paths.refined)?;
    m.output("refined", &paths.refined);
    let map: HashMap<String, String> = refined.records.into_iter().collect();
    corpus.attach_refined(&map)?;

    let extracted = extract_corpus(&corpus, &client, &llm_cfg)?;
    m.counters().add(&extracted.counters);
    if let Some(e) = extracted.first_error {
        finish_manifest(m, &paths.manifest)?;
        return Err(e);
    }
    let results: Vec<ExtractionResult> = extracted.records;
    write_triples(&results, &paths.triples)?;
    m.output("triples", &paths.triples);

    let (graph, pooling) = build_text_graph(&results, &corpus, options)?;
    GraphArtifact::new(&graph, &pooling, options).save(&paths.graph)?;
    m.output("graph", &paths.graph);
    let stats = pooling.stats();
    m.counters().oov_dropped = stats.oov_dropped;
    m.stat("vocab_size", graph.num_nodes());
    m.stat("edge_count", graph.edge_count());

    let model = train(&graph, &pooling, &corpus, &config)?;
    model.save(&paths.model)?;
    write_file(&paths.loss_csv, model.loss_csv().as_bytes())?;
    m.output("model", &paths.model);
    m.output("loss_csv", &paths.loss_csv);
    m.stat("epochs", model.loss_trace.last().map(|r| r.epoch));

    let test_ids: Vec<String> = corpus.test().map(|d| d.id.clone()).collect();
    let preds = model.predict(&graph, &pooling.select(&test_ids)?)?;
    write_file(
        &paths.predictions,
        predictions_tsv(&corpus, &preds).as_bytes(),
    )?;
    m.output("predictions", &paths.predictions);
    let acc = test_accuracy(&corpus, &preds);
    m.stat("accuracy", acc);

    let report = explain_report(
        &corpus,
        &graph,
        &pooling,
        &model,
        &[],
        10,
        ReportFormat::Md,
        ScoreSource::Smoothed,
    )?;
    write_file(&paths.explanations, report.as_bytes())?;
    m.output("explanations", &paths.explanations);

    let manifest = finish_manifest(m, &paths.manifest)?;
    let mut line = String::new();
    let _ = write!(
        line,
        "pipeline: {} documents, {} words",
        corpus.len(),
        graph.num_nodes()
    );
    if let Some(a) = acc {
        let _ = write!(line, ", accuracy {}", format_accuracy(&[a]));
    }
    let _ = write!(
        line,
        ", provider calls {}",
        manifest.counters.provider_calls
    );
    println!("{line}");
    Ok(manifest)
}

pub fn cmd_synth(kind: SynthKind, seed: Option<u64>, out_dir: &Path) -> Result<()> {
    let corpus = match kind {
        SynthKind::Benchmark => {
            let mut config = SynthConfig::default();
            if let Some(s) = seed {
                config.seed = s;
            }
            generate(&config)?
        }
        SynthKind::Toy2 => separable_toy(2)?,
        SynthKind::Toy4 => separable_toy(4)?,
    };
    corpus.write(&out_dir.join("corpus.txt"), &out_dir.join("meta.tsv"))?;
    println!("wrote {} documents to {}", corpus.len(), out_dir.display());
    Ok(())
}
