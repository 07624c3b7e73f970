//! C ABI over the refgame library.
//!
//! Every fallible function returns an [`RgStatus`]; on failure the message is
//! available from [`rg_last_error_message`] on the same thread. Handles are
//! opaque and must be released with their `_free` function. Strings returned
//! through out-parameters are owned by the caller and released with
//! [`rg_string_free`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::{c_char, c_int};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use refgame::corpus::{load_corpus, parse_corpus, write_corpus, zero_shot_split, RefExCorpus, WordId};
use refgame::experiment::{acquire_corpus, render_report, run_experiment, ExperimentConfig};
use refgame::pragmatics::{s1_decode, word_listener_score, CategoryBelief, DecodeParams};
use refgame::speakers::{decode_greedy, train_literal_speaker, NextWordModel};
use refgame::{Error, LiteralSpeaker, ReportFormat, WordCategoryTable};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Corpus = 5,
    World = 6,
    Speaker = 7,
    Pragmatics = 8,
    Eval = 9,
    Experiment = 10,
    Panic = 99,
}

/// A loaded or generated corpus.
pub struct RgCorpus {
    inner: RefExCorpus,
}

/// A literal speaker with its word/category table.
pub struct RgModel {
    speaker: LiteralSpeaker,
    table: WordCategoryTable,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct RgDecodeParams {
    pub alpha: f64,
    pub beta_repeat: f64,
    pub max_len: usize,
    pub listener_floor: f64,
}

impl From<RgDecodeParams> for DecodeParams {
    fn from(p: RgDecodeParams) -> Self {
        DecodeParams {
            alpha: p.alpha,
            beta_repeat: p.beta_repeat,
            max_len: p.max_len,
            listener_floor: p.listener_floor,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(RgStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Corpus(refgame::corpus::CorpusError::Io { .. }) => RgStatus::Io,
            Error::Corpus(_) => RgStatus::Corpus,
            Error::World(_) => RgStatus::World,
            Error::Speaker(_) => RgStatus::Speaker,
            Error::Pragmatics(_) => RgStatus::Pragmatics,
            Error::Eval(_) => RgStatus::Eval,
            Error::Experiment(_) => RgStatus::Experiment,
        };
        Failure(status, e.to_string())
    }
}

fn fail<E: Into<Error>>(e: E) -> Failure {
    Failure::from(e.into())
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(RgStatus::InvalidArgument, msg.into())
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> RgStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RgStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal panic: {msg}"));
            RgStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(RgStatus::NullPointer, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(RgStatus::InvalidUtf8, format!("`{name}` is not UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(RgStatus::NullPointer, format!("`{name}` is null")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(RgStatus::NullPointer, "output pointer is null".into()));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(RgStatus::NullPointer, "output pointer is null".into()));
    }
    *out = CString::new(s)
        .map_err(|_| invalid("string contains NUL"))?
        .into_raw();
    Ok(())
}

unsafe fn config_arg(p: *const c_char) -> Result<ExperimentConfig, Failure> {
    match opt_str_arg(p, "config_toml")? {
        Some(text) => ExperimentConfig::from_toml(text).map_err(fail),
        None => Ok(ExperimentConfig::demo()),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn rg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn rg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a JSONL corpus file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rg_corpus_load(path: *const c_char, out: *mut *mut RgCorpus) -> RgStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let inner = load_corpus(Path::new(path), None).map_err(fail)?;
        put(out, RgCorpus { inner })
    })
}

/// Parses a corpus from JSONL text.
///
/// # Safety
/// `jsonl` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rg_corpus_from_jsonl(jsonl: *const c_char, out: *mut *mut RgCorpus) -> RgStatus {
    guard(|| {
        let text = str_arg(jsonl, "jsonl")?;
        let inner = parse_corpus(text.as_bytes(), None).map_err(fail)?;
        put(out, RgCorpus { inner })
    })
}

/// Generates the synthetic world of an experiment config (TOML text, or NULL
/// for the bundled demo).
///
/// # Safety
/// `config_toml` must be NULL or a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rg_world_generate(config_toml: *const c_char, out: *mut *mut RgCorpus) -> RgStatus {
    guard(|| {
        let config = config_arg(config_toml)?;
        if config.world.is_none() {
            return Err(invalid("config has no [world] section"));
        }
        let inner = acquire_corpus(&config).map_err(fail)?;
        put(out, RgCorpus { inner })
    })
}

/// # Safety
/// `corpus` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn rg_corpus_free(corpus: *mut RgCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Number of records, 0 for NULL.
///
/// # Safety
/// `corpus` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn rg_corpus_len(corpus: *const RgCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.inner.len())
}

/// Serializes the corpus as JSONL.
///
/// # Safety
/// `corpus` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rg_corpus_to_jsonl(corpus: *const RgCorpus, out: *mut *mut c_char) -> RgStatus {
    guard(|| {
        let corpus = handle(corpus, "corpus")?;
        let mut buf = Vec::new();
        write_corpus(&corpus.inner, &mut buf).map_err(|e| Failure(RgStatus::Io, e.to_string()))?;
        put_string(out, String::from_utf8(buf).map_err(|_| invalid("non UTF-8 corpus"))?)
    })
}

/// Zero-shot split: every scene containing `category` goes to the test half.
///
/// # Safety
/// `corpus` must be a live handle, `category` a NUL-terminated string and
/// both outputs valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rg_corpus_split(
    corpus: *const RgCorpus,
    category: *const c_char,
    out_train: *mut *mut RgCorpus,
    out_test: *mut *mut RgCorpus,
) -> RgStatus {
    guard(|| {
        let corpus = handle(corpus, "corpus")?;
        let category = str_arg(category, "category")?;
        if out_train.is_null() || out_test.is_null() {
            return Err(Failure(RgStatus::NullPointer, "output pointer is null".into()));
        }
        let (train, test) = zero_shot_split(&corpus.inner, [category]).map_err(fail)?;
        put(out_train, RgCorpus { inner: train })?;
        put(out_test, RgCorpus { inner: test })
    })
}

/// Default decoding parameters.
#[no_mangle]
pub extern "C" fn rg_decode_params_default() -> RgDecodeParams {
    let d = DecodeParams::default();
    RgDecodeParams {
        alpha: d.alpha,
        beta_repeat: d.beta_repeat,
        max_len: d.max_len,
        listener_floor: d.listener_floor,
    }
}

/// Trains a literal speaker and word/category table on `train` with the
/// smoothing constants and feature rule of an experiment config (NULL for the
/// bundled demo).
///
/// # Safety
/// `train` must be a live handle, `config_toml` NULL or a NUL-terminated
/// string, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rg_model_train(
    train: *const RgCorpus,
    config_toml: *const c_char,
    out: *mut *mut RgModel,
) -> RgStatus {
    guard(|| {
        let train = handle(train, "train")?;
        let config = config_arg(config_toml)?;
        let speaker = train_literal_speaker(&train.inner, config.speaker_smoothing_k, &config.speaker_features)
            .map_err(fail)?;
        let table = refgame::corpus::estimate_word_category_table(&train.inner, config.smoothing_k).map_err(fail)?;
        put(out, RgModel { speaker, table })
    })
}

/// # Safety
/// `model` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn rg_model_free(model: *mut RgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

unsafe fn decode(
    model: *const RgModel,
    corpus: *const RgCorpus,
    record: usize,
    params: Option<RgDecodeParams>,
    out: *mut *mut c_char,
) -> RgStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let corpus = handle(corpus, "corpus")?;
        if model.speaker.vocabulary() != &corpus.inner.vocabulary {
            return Err(invalid("corpus and model vocabularies differ"));
        }
        let rec = corpus
            .inner
            .records
            .get(record)
            .ok_or_else(|| invalid(format!("record {record} out of range")))?;
        let target = rec.target();
        let utt = match params {
            None => decode_greedy(&model.speaker, target, DecodeParams::default().max_len),
            Some(p) => {
                let belief = CategoryBelief::uniform(model.table.n_categories());
                s1_decode(&model.speaker, &model.table, &belief, target, &p.into()).map_err(fail)?
            }
        };
        put_string(out, utt.render(&corpus.inner.vocabulary))
    })
}

/// Literal (S0) greedy expression for the target of record `record`.
///
/// # Safety
/// Handles must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rg_model_decode_literal(
    model: *const RgModel,
    corpus: *const RgCorpus,
    record: usize,
    out: *mut *mut c_char,
) -> RgStatus {
    decode(model, corpus, record, None, out)
}

/// Pragmatic (S1) expression under a uniform category belief.
///
/// # Safety
/// Handles must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rg_model_decode_pragmatic(
    model: *const RgModel,
    corpus: *const RgCorpus,
    record: usize,
    params: RgDecodeParams,
    out: *mut *mut c_char,
) -> RgStatus {
    decode(model, corpus, record, Some(params), out)
}

/// Category-marginal listener score of `word` under unnormalized category
/// weights (`n_weights` must equal the model's category count).
///
/// # Safety
/// `model` must be live, `word` NUL-terminated, `weights` point to
/// `n_weights` doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn rg_listener_score_raw(
    model: *const RgModel,
    word: *const c_char,
    weights: *const f64,
    n_weights: usize,
    out: *mut f64,
) -> RgStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let word = str_arg(word, "word")?;
        if weights.is_null() || out.is_null() {
            return Err(Failure(RgStatus::NullPointer, "null pointer argument".into()));
        }
        let weights = std::slice::from_raw_parts(weights, n_weights).to_vec();
        let belief = CategoryBelief::raw_weights(weights).map_err(fail)?;
        let id: WordId = model.speaker.vocabulary().lookup(word);
        *out = word_listener_score(&model.table, &belief, id).map_err(fail)?;
        Ok(())
    })
}

/// Runs the full experiment and returns the report as JSON (`format` 0),
/// CSV (1) or a markdown table (2).
///
/// # Safety
/// `config_toml` must be NULL or NUL-terminated; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rg_run_experiment(
    config_toml: *const c_char,
    format: c_int,
    out: *mut *mut c_char,
) -> RgStatus {
    guard(|| {
        let config = config_arg(config_toml)?;
        let format = match format {
            0 => ReportFormat::Json,
            1 => ReportFormat::Csv,
            2 => ReportFormat::Markdown,
            f => return Err(invalid(format!("unknown report format {f}"))),
        };
        let report = run_experiment(&config).map_err(fail)?;
        put_string(out, render_report(&report, format))
    })
}
