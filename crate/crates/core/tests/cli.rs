mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use graphtext::manifest::RunManifest;

use common::*;

fn graphtext(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphtext"))
        .args(args)
        .env_remove("OPENAI_API_KEY")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = graphtext(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Toy {
    _dir: tempfile::TempDir,
    root: PathBuf,
    corpus: PathBuf,
    meta: PathBuf,
}

fn toy(name: &str) -> Toy {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let (corpus, meta) = corpus_paths(name);
    Toy {
        _dir: dir,
        root,
        corpus,
        meta,
    }
}

#[test]
fn pipeline_matches_the_individual_stages() {
    let t = toy("toy4");
    let (c, m) = (s(&t.corpus), s(&t.meta));
    let work = t.root.join("pipe");
    ok(&[
        "pipeline",
        "--corpus",
        c,
        "--meta",
        m,
        "--mock",
        "--work-dir",
        s(&work),
    ]);

    let p = |f: &str| t.root.join(f);
    ok(&[
        "refine",
        "--corpus",
        c,
        "--meta",
        m,
        "--mock",
        "--out",
        s(&p("refined.jsonl")),
    ]);
    ok(&[
        "extract",
        "--corpus",
        c,
        "--meta",
        m,
        "--mock",
        "--refined",
        s(&p("refined.jsonl")),
        "--out",
        s(&p("triples.jsonl")),
    ]);
    ok(&[
        "build",
        "--corpus",
        c,
        "--meta",
        m,
        "--triples",
        s(&p("triples.jsonl")),
        "--refined",
        s(&p("refined.jsonl")),
        "--out",
        s(&p("graph.json")),
    ]);
    ok(&[
        "train",
        "--corpus",
        c,
        "--meta",
        m,
        "--graph",
        s(&p("graph.json")),
        "--out",
        s(&p("model.json")),
    ]);
    let stdout = ok(&[
        "eval",
        "--corpus",
        c,
        "--meta",
        m,
        "--graph",
        s(&p("graph.json")),
        "--model",
        s(&p("model.json")),
        "--predictions",
        s(&p("predictions.tsv")),
    ]);
    assert!(stdout.contains("accuracy 100.00"), "{stdout}");

    for f in [
        "refined.jsonl",
        "triples.jsonl",
        "graph.json",
        "model.json",
        "predictions.tsv",
    ] {
        assert_eq!(
            std::fs::read(work.join(f)).unwrap(),
            std::fs::read(p(f)).unwrap(),
            "{f} differs between pipeline and stages"
        );
    }
    let manifest = RunManifest::load(&work.join("manifest.json")).unwrap();
    assert_eq!(manifest.command, "pipeline");
    assert!(manifest.outputs.contains_key("explanations"));
    assert_eq!(manifest.counters.malformed_lines, 0);
}

#[test]
fn eval_is_deterministic() {
    let t = toy("toy2");
    let (c, m) = (s(&t.corpus), s(&t.meta));
    let work = t.root.join("w");
    ok(&[
        "pipeline",
        "--corpus",
        c,
        "--meta",
        m,
        "--mock",
        "--work-dir",
        s(&work),
    ]);
    let eval = |out: &str| {
        let path = t.root.join(out);
        ok(&[
            "eval",
            "--corpus",
            c,
            "--meta",
            m,
            "--graph",
            s(&work.join("graph.json")),
            "--model",
            s(&work.join("model.json")),
            "--predictions",
            s(&path),
        ]);
        std::fs::read(path).unwrap()
    };
    assert_eq!(eval("a.tsv"), eval("b.tsv"));
}

#[test]
fn exit_codes_follow_the_error_class() {
    let t = toy("toy2");
    let (c, m) = (s(&t.corpus), s(&t.meta));

    // Usage errors.
    assert_eq!(graphtext(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        graphtext(&["eval", "--corpus", c, "--meta", m])
            .status
            .code(),
        Some(2)
    );
    let out = t.root.join("x.jsonl");
    let bad_stride = graphtext(&[
        "extract",
        "--corpus",
        c,
        "--meta",
        m,
        "--mock",
        "--stride",
        "0",
        "--out",
        s(&out),
    ]);
    assert_eq!(bad_stride.status.code(), Some(2));

    // Data errors.
    let broken = t.root.join("meta.tsv");
    std::fs::write(&broken, "only-one-column\n").unwrap();
    assert_eq!(
        graphtext(&[
            "refine",
            "--corpus",
            c,
            "--meta",
            s(&broken),
            "--mock",
            "--out",
            s(&out)
        ])
        .status
        .code(),
        Some(3)
    );
    let missing = t.root.join("missing.txt");
    assert_eq!(
        graphtext(&[
            "refine",
            "--corpus",
            s(&missing),
            "--meta",
            m,
            "--mock",
            "--out",
            s(&out)
        ])
        .status
        .code(),
        Some(3)
    );

    // Provider errors: no credential for the HTTP provider.
    let no_key = graphtext(&["refine", "--corpus", c, "--meta", m, "--out", s(&out)]);
    assert_eq!(no_key.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&no_key.stderr).contains("OPENAI_API_KEY"));

    // Numerical errors: a penalty that overflows the loss.
    let work = t.root.join("w");
    ok(&[
        "pipeline",
        "--corpus",
        c,
        "--meta",
        m,
        "--mock",
        "--work-dir",
        s(&work),
    ]);
    let diverge = graphtext(&[
        "train",
        "--corpus",
        c,
        "--meta",
        m,
        "--graph",
        s(&work.join("graph.json")),
        "--learning-rate",
        "1e300",
        "--l2-weight",
        "1e300",
        "--out",
        s(&t.root.join("m.json")),
    ]);
    assert_eq!(
        diverge.status.code(),
        Some(5),
        "{}",
        String::from_utf8_lossy(&diverge.stderr)
    );
}

#[test]
fn malformed_fixture_line_is_counted_in_the_manifest() {
    let t = toy("toy2");
    let (c, m) = (t.root.join("c.txt"), t.root.join("m.tsv"));
    std::fs::write(
        &c,
        "alpha beta gamma delta\nbeta gamma delta alpha\ngamma delta alpha beta\n",
    )
    .unwrap();
    std::fs::write(&m, "d1\ttrain\talpha\nd2\ttrain\tbeta\nd3\ttest\talpha\n").unwrap();
    // Identical prompts share a cached response, so the texts above all differ.
    let fixtures = t.root.join("fixtures.jsonl");
    std::fs::write(
        &fixtures,
        serde_json::json!({"doc_id": "d1", "response": "('alpha', 'is', 'first')\n('alpha', 'broken'"}).to_string()
            + "\n",
    )
    .unwrap();
    let out = t.root.join("triples.jsonl");
    ok(&[
        "extract",
        "--corpus",
        s(&c),
        "--meta",
        s(&m),
        "--fixtures",
        s(&fixtures),
        "--mock",
        "--out",
        s(&out),
    ]);
    let manifest = RunManifest::load(&t.root.join("triples.jsonl.manifest.json")).unwrap();
    assert_eq!(manifest.counters.malformed_lines, 1);
    assert_eq!(manifest.counters.failed_docs, 0);
    let results = graphtext::tripleparse::read_triples(&out).unwrap();
    assert_eq!(results[0].triples.len(), 1);
    assert_eq!(results[0].malformed_lines, 1);
    assert_eq!(results[1].triples.len(), 2);
}

#[test]
fn three_document_mock_run_writes_three_records() {
    let t = toy("toy2");
    let text = "alpha alpha alpha alpha\nbeta beta beta beta\ngamma alpha beta alpha\n";
    let meta = "train-0\ttrain\talpha\ntrain-1\ttrain\tbeta\ntest-0\ttest\talpha\n";
    let (c, m) = (t.root.join("c.txt"), t.root.join("m.tsv"));
    std::fs::write(&c, text).unwrap();
    std::fs::write(&m, meta).unwrap();
    let out = t.root.join("triples.jsonl");
    ok(&[
        "extract",
        "--corpus",
        s(&c),
        "--meta",
        s(&m),
        "--mock",
        "--out",
        s(&out),
    ]);
    let lines = std::fs::read_to_string(&out).unwrap();
    assert_eq!(lines.lines().count(), 3);
    let manifest = RunManifest::load(&t.root.join("triples.jsonl.manifest.json")).unwrap();
    assert_eq!(manifest.counters.provider_calls, 3);
    assert!(manifest.inputs.len() >= 2);
}

#[test]
fn explain_reports_highlights() {
    let t = toy("toy4");
    let (c, m) = (s(&t.corpus), s(&t.meta));
    let work = t.root.join("w");
    ok(&[
        "pipeline",
        "--corpus",
        c,
        "--meta",
        m,
        "--mock",
        "--work-dir",
        s(&work),
    ]);
    let report = ok(&[
        "explain",
        "--corpus",
        c,
        "--meta",
        m,
        "--graph",
        s(&work.join("graph.json")),
        "--model",
        s(&work.join("model.json")),
        "--format",
        "md",
        "--top-k",
        "3",
    ]);
    assert!(report.contains("rgb(255,0,0)"), "{report}");
    let json = ok(&[
        "explain",
        "--corpus",
        c,
        "--meta",
        m,
        "--graph",
        s(&work.join("graph.json")),
        "--model",
        s(&work.join("model.json")),
        "--format",
        "json",
    ]);
    assert!(json
        .lines()
        .all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));
}

#[test]
fn baseline_and_synth_commands_run() {
    let t = toy("toy2");
    let synth = t.root.join("synth");
    ok(&["synth", "--kind", "toy2", "--out-dir", s(&synth)]);
    assert_eq!(
        std::fs::read(synth.join("corpus.txt")).unwrap(),
        std::fs::read(&t.corpus).unwrap()
    );
    let out = t.root.join("baselines");
    ok(&[
        "baseline",
        "--corpus",
        s(&t.corpus),
        "--meta",
        s(&t.meta),
        "--method",
        "tfidf-lr",
        "--out-dir",
        s(&out),
    ]);
    ok(&[
        "baseline",
        "--corpus",
        s(&t.corpus),
        "--meta",
        s(&t.meta),
        "--method",
        "llm",
        "--mock",
        "--out-dir",
        s(&out),
    ]);
    let summary = std::fs::read_to_string(out.join("summary.tsv")).unwrap();
    assert!(
        summary.starts_with("method\tshots\taccuracy\tn"),
        "{summary}"
    );
}
