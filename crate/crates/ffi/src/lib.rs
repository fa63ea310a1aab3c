//! C ABI over the `graphtext` classifier.
//!
//! Every fallible function returns a [`GtStatus`]; on failure the message is
//! available from [`gt_last_error_message`] on the same thread. Strings
//! returned through out-parameters are owned by the caller and must be
//! released with [`gt_string_free`]. Text arguments are NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use graphtext::corpus::{Document, Split};
use graphtext::explain::{explain_document, render_document, ReportFormat, ScoreSource};
use graphtext::graph::{
    document_stream, pooling_row, tokenize, CsrMatrix, GraphArtifact, Membership, PoolingMatrix,
    PoolingMode, TextGraph,
};
use graphtext::llm::{render_extract_prompt, render_refine_prompt};
use graphtext::model::ClassifierModel;
use graphtext::tripleparse::parse_triples;
use graphtext::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GtStatus {
    Ok = 0,
    /// Null pointer, invalid UTF-8, out-of-range index or bad parameter.
    Argument = 2,
    /// Malformed or incompatible input data or artifacts.
    Format = 3,
    Provider = 4,
    Numerical = 5,
    Io = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GtPromptKind {
    Refine = 0,
    Extract = 1,
}

/// A trained classifier together with its word graph.
pub struct GtClassifier {
    model: ClassifierModel,
    graph: TextGraph,
    mode: PoolingMode,
    membership: Membership,
    idf: Option<Vec<f64>>,
}

struct Failure(GtStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => GtStatus::Io,
            _ => match e.exit_code() {
                2 => GtStatus::Argument,
                4 => GtStatus::Provider,
                5 => GtStatus::Numerical,
                _ => GtStatus::Format,
            },
        };
        Failure(status, e.to_string())
    }
}

fn argument(msg: impl Into<String>) -> Failure {
    Failure(GtStatus::Argument, msg.into())
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            GtStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            GtStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(argument(format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| argument(format!("{what} is not valid UTF-8")))
}

unsafe fn optional_text<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, what).map(Some)
    }
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(argument("output pointer is null"));
    }
    let c = CString::new(s)
        .map_err(|_| Failure(GtStatus::Format, "output contains a NUL byte".into()))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn handle<'a>(h: *const GtClassifier) -> Result<&'a GtClassifier, Failure> {
    h.as_ref()
        .ok_or_else(|| argument("classifier handle is null"))
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn gt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn gt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn gt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Tokenizes `input`; `*out_json` receives a JSON array of tokens.
///
/// # Safety
/// `input` must be a valid C string and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gt_tokenize(input: *const c_char, out_json: *mut *mut c_char) -> GtStatus {
    guard(|| {
        let tokens = tokenize(text(input, "input")?);
        write_string(
            out_json,
            serde_json::to_string(&tokens).expect("tokens serialize"),
        )
    })
}

/// Parses an extraction response; `*out_json` receives
/// `{"doc_id", "none", "triples", "malformed"}`.
///
/// # Safety
/// `response` must be a valid C string, `doc_id` a valid C string or null,
/// and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gt_parse_triples(
    response: *const c_char,
    doc_id: *const c_char,
    out_json: *mut *mut c_char,
) -> GtStatus {
    guard(|| {
        let id = optional_text(doc_id, "doc_id")?.unwrap_or("");
        let result = parse_triples(text(response, "response")?, id);
        write_string(
            out_json,
            serde_json::to_string(&result).expect("result serializes"),
        )
    })
}

/// Fills the refinement or extraction prompt with `input`.
///
/// # Safety
/// `input` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gt_render_prompt(
    kind: GtPromptKind,
    input: *const c_char,
    out: *mut *mut c_char,
) -> GtStatus {
    guard(|| {
        let input = text(input, "input")?;
        let prompt = match kind {
            GtPromptKind::Refine => render_refine_prompt(&document("doc", input))?,
            GtPromptKind::Extract => render_extract_prompt(input)?,
        };
        write_string(out, prompt)
    })
}

fn document(id: &str, text: &str) -> Document {
    Document {
        id: id.into(),
        raw_text: text.into(),
        refined_text: None,
        split: Split::Test,
        label: None,
    }
}

/// Loads a model and the graph artifact it was trained on.
///
/// # Safety
/// Paths must be valid C strings and `out` a valid pointer. On success the
/// handle must be released with [`gt_classifier_free`].
#[no_mangle]
pub unsafe extern "C" fn gt_classifier_open(
    model_path: *const c_char,
    graph_path: *const c_char,
    out: *mut *mut GtClassifier,
) -> GtStatus {
    guard(|| {
        if out.is_null() {
            return Err(argument("output pointer is null"));
        }
        let model = ClassifierModel::load(Path::new(text(model_path, "model_path")?))?;
        let artifact = GraphArtifact::load(Path::new(text(graph_path, "graph_path")?))?;
        let (mode, membership, idf) = (
            artifact.options.mode,
            artifact.options.membership,
            artifact.pooling.idf.clone(),
        );
        let (graph, _) = artifact.into_parts()?;
        if graph.vocab().digest() != model.vocab.digest() {
            return Err(Error::Compatibility {
                model: model.vocab.digest(),
                pooling: graph.vocab().digest(),
            }
            .into());
        }
        *out = Box::into_raw(Box::new(GtClassifier {
            model,
            graph,
            mode,
            membership,
            idf,
        }));
        Ok(())
    })
}

/// Releases a classifier. Null is ignored.
///
/// # Safety
/// `h` must come from [`gt_classifier_open`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn gt_classifier_free(h: *mut GtClassifier) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Number of classes, or 0 for a null handle.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gt_classifier_num_classes(h: *const GtClassifier) -> usize {
    h.as_ref().map_or(0, |c| c.model.num_classes())
}

/// Number of graph nodes, or 0 for a null handle.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gt_classifier_vocab_size(h: *const GtClassifier) -> usize {
    h.as_ref().map_or(0, |c| c.graph.num_nodes())
}

/// Name of class `class`.
///
/// # Safety
/// `h` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gt_classifier_label(
    h: *const GtClassifier,
    class: usize,
    out: *mut *mut c_char,
) -> GtStatus {
    guard(|| {
        let c = handle(h)?;
        let name = c
            .model
            .labels
            .name(class)
            .ok_or_else(|| argument(format!("class {class} out of range")))?;
        write_string(out, name.to_string())
    })
}

impl GtClassifier {
    fn row(
        &self,
        response: &str,
        display: Option<&str>,
    ) -> Result<(Vec<(usize, f64)>, Document), Failure> {
        let result = parse_triples(response, "doc");
        let doc = document("doc", display.unwrap_or(response));
        let stream = document_stream(&result, &doc, self.membership);
        let (row, _) = pooling_row(&stream, self.graph.vocab(), self.mode, self.idf.as_deref())?;
        Ok((row, doc))
    }
}

/// Classifies one document from its extraction response. `display_text` is
/// the document text (required when the graph pools over refined text; may
/// be null otherwise). Writes `probs_len` class probabilities to `probs`
/// (which must equal the class count) and the predicted class to `class_out`.
///
/// # Safety
/// `h` must be a live handle, strings valid or null as documented, `probs`
/// valid for `probs_len` writes and `class_out` valid or null.
#[no_mangle]
pub unsafe extern "C" fn gt_classifier_predict(
    h: *const GtClassifier,
    response: *const c_char,
    display_text: *const c_char,
    probs: *mut f64,
    probs_len: usize,
    class_out: *mut usize,
) -> GtStatus {
    guard(|| {
        let c = handle(h)?;
        let k = c.model.num_classes();
        if probs.is_null() || probs_len != k {
            return Err(argument(format!("probs must hold exactly {k} values")));
        }
        let (row, _) = c.row(
            text(response, "response")?,
            optional_text(display_text, "display_text")?,
        )?;
        let n = c.graph.num_nodes();
        let pooling = PoolingMatrix::new(
            vec!["doc".into()],
            CsrMatrix::from_rows(n, vec![row]),
            c.mode,
            c.graph.vocab().digest(),
            None,
        )?;
        let prediction = c.model.predict(&c.graph, &pooling)?.remove(0);
        std::slice::from_raw_parts_mut(probs, k).copy_from_slice(&prediction.probs);
        if !class_out.is_null() {
            *class_out = prediction.class;
        }
        Ok(())
    })
}

/// Explains the prediction for one document; `*out_json` receives the
/// explanation (predicted class, logit, per-word contributions, highlights).
///
/// # Safety
/// As for [`gt_classifier_predict`]; `out_json` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gt_classifier_explain(
    h: *const GtClassifier,
    response: *const c_char,
    display_text: *const c_char,
    out_json: *mut *mut c_char,
) -> GtStatus {
    guard(|| {
        let c = handle(h)?;
        let (row, doc) = c.row(
            text(response, "response")?,
            optional_text(display_text, "display_text")?,
        )?;
        let e = explain_document(&c.model, &c.graph, &row, &doc, ScoreSource::Smoothed)?;
        write_string(out_json, render_document(&e, ReportFormat::Json))
    })
}
