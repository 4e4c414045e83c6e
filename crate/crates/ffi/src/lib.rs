//! C interface to the triplet extraction pipeline.
//!
//! Every fallible function returns an [`AsteStatus`]; on failure the message
//! is available from [`aste_last_error`] on the same thread. Handles are
//! opaque and released with their matching `_free` function. Strings handed
//! out by the library are released with [`aste_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use aste::corpus::{corpus_stats, read_corpus, AnnotatedSentence};
use aste::eval::{evaluate, read_records, write_records, EvalMode, SentenceRecord};
use aste::graph::{attach_heads, read_heads, DependencyGraph};
use aste::pipeline::Pipeline;
use aste::AsteError;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AsteStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Format = 4,
    EmptyAnnotation = 5,
    DanglingGroup = 6,
    Overlap = 7,
    Index = 8,
    Dimension = 9,
    Shape = 10,
    Config = 11,
    Alignment = 12,
    Compatibility = 13,
    Checkpoint = 14,
    Panic = 15,
}

impl From<&AsteError> for AsteStatus {
    fn from(e: &AsteError) -> Self {
        match e {
            AsteError::Io { .. } => AsteStatus::Io,
            AsteError::Format { .. } => AsteStatus::Format,
            AsteError::EmptyAnnotation { .. } => AsteStatus::EmptyAnnotation,
            AsteError::DanglingGroup { .. } => AsteStatus::DanglingGroup,
            AsteError::Overlap { .. } => AsteStatus::Overlap,
            AsteError::Index { .. } => AsteStatus::Index,
            AsteError::Dimension { .. } => AsteStatus::Dimension,
            AsteError::Shape(_) => AsteStatus::Shape,
            AsteError::Config(_) => AsteStatus::Config,
            AsteError::Alignment(_) => AsteStatus::Alignment,
            AsteError::Compatibility(_) => AsteStatus::Compatibility,
            AsteError::Checkpoint(_) => AsteStatus::Checkpoint,
        }
    }
}

/// Loaded pair of stage checkpoints.
pub struct AstePipeline(Pipeline);

/// Parsed annotated corpus.
pub struct AsteCorpus(Vec<AnnotatedSentence>);

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AsteReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub num_pred: usize,
    pub num_gold: usize,
    pub num_correct: usize,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AsteCorpusStats {
    pub sentences: usize,
    pub pairs: usize,
    pub aspects: usize,
    pub opinions: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

enum Failure {
    Null(&'static str),
    Utf8(&'static str),
    Core(AsteError),
}

impl From<AsteError> for Failure {
    fn from(e: AsteError) -> Self {
        Failure::Core(e)
    }
}

/// Runs `body`, records any error or panic, and converts it to a status.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> AsteStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => AsteStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("NullPointer: {what} is null"));
            AsteStatus::NullPointer
        }
        Ok(Err(Failure::Utf8(what))) => {
            set_last_error(format!("InvalidUtf8: {what} is not valid UTF-8"));
            AsteStatus::InvalidUtf8
        }
        Ok(Err(Failure::Core(e))) => {
            set_last_error(format!("{}: {e}", e.name()));
            AsteStatus::from(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("Panic: {msg}"));
            AsteStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Utf8(what))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("nul bytes removed").into_raw()
}

fn records_json(records: &[SentenceRecord]) -> Result<String, Failure> {
    let mut buf = Vec::new();
    write_records(records, &mut buf).map_err(|e| AsteError::Shape(e.to_string()))?;
    Ok(String::from_utf8(buf).expect("JSON is UTF-8"))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn aste_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn aste_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn aste_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads both stage checkpoints into a pipeline handle.
///
/// # Safety
/// Paths must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aste_pipeline_load(
    ckpt1: *const c_char,
    ckpt2: *const c_char,
    out: *mut *mut AstePipeline,
) -> AsteStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let p = Pipeline::load(str_arg(ckpt1, "ckpt1")?, str_arg(ckpt2, "ckpt2")?)?;
        *out = Box::into_raw(Box::new(AstePipeline(p)));
        Ok(())
    })
}

/// # Safety
/// `p` must come from [`aste_pipeline_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn aste_pipeline_free(p: *mut AstePipeline) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Predicts one whitespace-tokenized sentence. `heads` holds one 1-based head
/// index per token (0 for the root) or is null for no parse. On success `out`
/// receives a JSON object to release with [`aste_string_free`].
///
/// # Safety
/// `heads` must point to `n_heads` values when non-null.
#[no_mangle]
pub unsafe extern "C" fn aste_pipeline_predict(
    p: *const AstePipeline,
    sentence: *const c_char,
    heads: *const usize,
    n_heads: usize,
    out: *mut *mut c_char,
) -> AsteStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let p = ref_arg(p, "pipeline")?;
        let tokens: Vec<String> = str_arg(sentence, "sentence")?
            .split_whitespace()
            .map(String::from)
            .collect();
        let graph = if heads.is_null() {
            None
        } else {
            let heads = std::slice::from_raw_parts(heads, n_heads);
            if heads.len() != tokens.len() {
                return Err(AsteError::Shape(format!("{} tokens but {} heads", tokens.len(), heads.len())).into());
            }
            Some(DependencyGraph::from_heads(heads)?)
        };
        let prediction = p.0.predict(0, &tokens, graph.as_ref())?;
        let json = records_json(std::slice::from_ref(&prediction.record))?;
        *out = into_c_string(json.trim_end().to_string());
        Ok(())
    })
}

/// Predicts every sentence of a corpus. `out` receives JSON lines, one per
/// sentence, with ids equal to corpus positions.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aste_pipeline_predict_corpus(
    p: *const AstePipeline,
    corpus: *const AsteCorpus,
    out: *mut *mut c_char,
) -> AsteStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let p = ref_arg(p, "pipeline")?;
        let corpus = ref_arg(corpus, "corpus")?;
        let records: Vec<SentenceRecord> = p.0.predict_corpus(&corpus.0)?.into_iter().map(|x| x.record).collect();
        *out = into_c_string(records_json(&records)?);
        Ok(())
    })
}

/// Reads an annotated corpus, attaching head indices when `dep` is non-null.
///
/// # Safety
/// Paths must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aste_corpus_read(
    path: *const c_char,
    dep: *const c_char,
    out: *mut *mut AsteCorpus,
) -> AsteStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let mut sentences = read_corpus(str_arg(path, "path")?)?;
        if !dep.is_null() {
            attach_heads(&mut sentences, &read_heads(str_arg(dep, "dep")?)?)?;
        }
        *out = Box::into_raw(Box::new(AsteCorpus(sentences)));
        Ok(())
    })
}

/// # Safety
/// `c` must come from [`aste_corpus_read`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn aste_corpus_free(c: *mut AsteCorpus) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// # Safety
/// `c` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aste_corpus_stats(c: *const AsteCorpus, out: *mut AsteCorpusStats) -> AsteStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let s = corpus_stats(&ref_arg(c, "corpus")?.0);
        *out = AsteCorpusStats {
            sentences: s.sentences,
            pairs: s.pairs,
            aspects: s.aspects,
            opinions: s.opinions,
        };
        Ok(())
    })
}

/// Scores a prediction file against a gold file under one mode (`unified`,
/// `aspect_only`, `opinion`, `pair` or `triplet`). Either file may be an
/// annotated corpus or prediction JSON lines.
///
/// # Safety
/// Strings must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aste_evaluate_files(
    pred: *const c_char,
    gold: *const c_char,
    mode: *const c_char,
    out: *mut AsteReport,
) -> AsteStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let mode: EvalMode = str_arg(mode, "mode")?.parse()?;
        let pred = read_records(str_arg(pred, "pred")?)?;
        let gold = read_records(str_arg(gold, "gold")?)?;
        let r = evaluate(&pred, &gold, mode)?;
        *out = AsteReport {
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            num_pred: r.num_pred,
            num_gold: r.num_gold,
            num_correct: r.num_correct,
        };
        Ok(())
    })
}
