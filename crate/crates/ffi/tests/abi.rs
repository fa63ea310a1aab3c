use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use graphtext::graph::{BuildOptions, GraphArtifact, PoolingMode};
use graphtext::harness::{fit_and_evaluate, mock_extract_corpus, EvalRun};
use graphtext::llm::mock_extract;
use graphtext::model::TrainConfig;
use graphtext::synth::separable_toy;
use graphtext_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take(p: *mut c_char) -> String {
    let s = CStr::from_ptr(p).to_str().unwrap().to_string();
    gt_string_free(p);
    s
}

fn last_error() -> String {
    let p = gt_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p).to_str().unwrap().to_string() }
}

struct Artifacts {
    _dir: tempfile::TempDir,
    model: PathBuf,
    graph: PathBuf,
    run: EvalRun,
    corpus: graphtext::corpus::Corpus,
}

fn artifacts(mode: PoolingMode) -> Artifacts {
    let corpus = separable_toy(4).unwrap();
    let results = mock_extract_corpus(&corpus, 1).unwrap();
    let options = BuildOptions {
        mode,
        ..BuildOptions::default()
    };
    let run = fit_and_evaluate(&corpus, &results, options, &TrainConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (model, graph) = (dir.path().join("model.json"), dir.path().join("graph.json"));
    run.model.save(&model).unwrap();
    GraphArtifact::new(&run.graph, &run.pooling, options)
        .save(&graph)
        .unwrap();
    Artifacts {
        _dir: dir,
        model,
        graph,
        run,
        corpus,
    }
}

unsafe fn open(a: &Artifacts) -> *mut GtClassifier {
    let mut h = ptr::null_mut();
    let status = gt_classifier_open(
        cstr(a.model.to_str().unwrap()).as_ptr(),
        cstr(a.graph.to_str().unwrap()).as_ptr(),
        &mut h,
    );
    assert_eq!(status, GtStatus::Ok);
    h
}

#[test]
fn tokenize_and_parse_return_json() {
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(
            gt_tokenize(cstr("Bank of FRANCE, rates.").as_ptr(), &mut out),
            GtStatus::Ok
        );
        assert_eq!(take(out), r#"["bank","of","france","rates"]"#);

        let response = cstr("1. ('Bank of France', 'maintain', 'intervention rate')\n('a', 'b'");
        assert_eq!(
            gt_parse_triples(response.as_ptr(), ptr::null(), &mut out),
            GtStatus::Ok
        );
        let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(v["triples"][0][0], "Bank of France");
        assert_eq!(v["malformed"], 1);
    }
}

#[test]
fn prompts_embed_the_text() {
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(
            gt_render_prompt(
                GtPromptKind::Extract,
                cstr("Rates rose.").as_ptr(),
                &mut out
            ),
            GtStatus::Ok
        );
        assert!(take(out).contains("Rates rose."));
        assert_eq!(
            gt_render_prompt(GtPromptKind::Refine, cstr("").as_ptr(), &mut out),
            GtStatus::Argument
        );
        assert!(last_error().contains("empty"));
    }
}

#[test]
fn null_arguments_are_rejected() {
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(gt_tokenize(ptr::null(), &mut out), GtStatus::Argument);
        assert!(last_error().contains("null"));
        assert_eq!(
            gt_tokenize(cstr("x").as_ptr(), ptr::null_mut()),
            GtStatus::Argument
        );
        assert_eq!(gt_classifier_num_classes(ptr::null()), 0);
        gt_classifier_free(ptr::null_mut());
        gt_string_free(ptr::null_mut());
        let bad = [0xffu8, 0];
        assert_eq!(
            gt_tokenize(bad.as_ptr().cast(), &mut out),
            GtStatus::Argument
        );
    }
}

#[test]
fn missing_artifacts_are_io_errors() {
    unsafe {
        let mut h = ptr::null_mut();
        let status = gt_classifier_open(
            cstr("/nonexistent/model.json").as_ptr(),
            cstr("/nonexistent/g.json").as_ptr(),
            &mut h,
        );
        assert_eq!(status, GtStatus::Io);
        assert!(h.is_null());
    }
}

#[test]
fn predictions_match_the_library() {
    for mode in [PoolingMode::Binary, PoolingMode::Tfidf] {
        let a = artifacts(mode);
        unsafe {
            let h = open(&a);
            let k = gt_classifier_num_classes(h);
            assert_eq!(k, 4);
            assert_eq!(gt_classifier_vocab_size(h), a.run.graph.num_nodes());
            let mut out = ptr::null_mut();
            assert_eq!(gt_classifier_label(h, 0, &mut out), GtStatus::Ok);
            assert_eq!(take(out), a.corpus.labels().names()[0]);
            assert_eq!(gt_classifier_label(h, 9, &mut out), GtStatus::Argument);

            for (doc, expected) in a.corpus.test().zip(&a.run.predictions) {
                let response = cstr(&mock_extract(doc.display_text(), 1).unwrap());
                let mut probs = vec![0.0; k];
                let mut class = usize::MAX;
                let status = gt_classifier_predict(
                    h,
                    response.as_ptr(),
                    ptr::null(),
                    probs.as_mut_ptr(),
                    k,
                    &mut class,
                );
                assert_eq!(status, GtStatus::Ok);
                assert_eq!(class, expected.class);
                for (p, q) in probs.iter().zip(&expected.probs) {
                    assert!((p - q).abs() < 1e-12);
                }
                assert_eq!(
                    gt_classifier_predict(
                        h,
                        response.as_ptr(),
                        ptr::null(),
                        probs.as_mut_ptr(),
                        k - 1,
                        &mut class
                    ),
                    GtStatus::Argument
                );

                assert_eq!(
                    gt_classifier_explain(h, response.as_ptr(), ptr::null(), &mut out),
                    GtStatus::Ok
                );
                let e: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
                assert_eq!(e["class"], expected.class);
            }
            gt_classifier_free(h);
        }
    }
}

#[test]
fn header_is_current_and_links_from_c() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(root.join("include/graphtext.h")).unwrap();
    for name in [
        "gt_classifier_open",
        "gt_classifier_predict",
        "gt_last_error_message",
        "GT_STATUS_PANIC",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
    let Some(cc) = ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
    else {
        eprintln!("no C compiler found; skipping C smoke test");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("smoke");
    let compile = Command::new(cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(root.join("include"))
        .arg(root.join("tests/smoke.c"))
        .arg("-fsyntax-only")
        .output()
        .unwrap();
    assert!(
        compile.status.success(),
        "{}",
        String::from_utf8_lossy(&compile.stderr)
    );

    // Linking needs the static library from this build; skip when it is not there.
    let target = std::env::var_os("CARGO_TARGET_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| root.join("../../target"));
    let profile = if cfg!(debug_assertions) {
        "debug"
    } else {
        "release"
    };
    let lib = target.join(profile).join("libgraphtext_ffi.a");
    if !lib.is_file() {
        eprintln!("{} not built; skipping link step", lib.display());
        return;
    }
    let link = Command::new(cc)
        .arg("-I")
        .arg(root.join("include"))
        .arg(root.join("tests/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        link.status.success(),
        "{}",
        String::from_utf8_lossy(&link.stderr)
    );
    let run = Command::new(&out).output().unwrap();
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert_eq!(
        String::from_utf8_lossy(&run.stdout).trim(),
        "[\"bank\",\"of\",\"france\"] 2"
    );
}
