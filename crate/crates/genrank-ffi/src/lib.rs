//! C ABI for scoring and query generation.
//!
//! A `GrRanker` is an opaque handle pairing a trained checkpoint with its
//! vocabulary. All functions return a [`GrStatus`]; on failure the message
//! is retrievable with [`gr_last_error`]. Strings cross the boundary as
//! NUL-terminated UTF-8. The generated header lives at
//! `include/genrank.h`.
//!
//! Handles are not synchronized: use one handle per thread, or guard it.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;

use genrank::model::{load_checkpoint, GenerativeModel};
use genrank::score::score_query_doc;
use genrank::text::{encode_with_extension, tokenize, truncate_doc, Vocabulary};
use genrank::uncertainty::query_aggregates;

/// Status codes mirroring the CLI exit codes, plus FFI-specific failures.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GrStatus {
    GrOk = 0,
    GrUsageError = 1,
    GrDataError = 2,
    GrNumericError = 3,
    GrNullPointer = 4,
    GrInvalidUtf8 = 5,
    GrBufferTooSmall = 6,
}

/// Opaque ranker handle: a trained model plus its vocabulary.
pub struct GrRanker {
    model: GenerativeModel,
    vocab: Vocabulary,
}

/// One scored (query, document) pair: the relevance score and the four
/// query-level uncertainty aggregates.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct GrScore {
    /// Sum of per-position log-probabilities (higher is more relevant).
    pub score: f64,
    pub unc_mean: f64,
    pub unc_variance: f64,
    pub unc_max: f64,
    pub unc_entropy: f64,
    /// 1 when any generation step hit the probability floor.
    pub floored: u8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &genrank::Error) -> GrStatus {
    match err.exit_code() {
        1 => GrStatus::GrUsageError,
        2 => GrStatus::GrDataError,
        _ => GrStatus::GrNumericError,
    }
}

/// # Safety
/// `ptr` must be NUL-terminated and valid for reads.
unsafe fn str_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, GrStatus> {
    if ptr.is_null() {
        set_error(&format!("{name} is a null pointer"));
        return Err(GrStatus::GrNullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(&format!("{name} is not valid UTF-8"));
        GrStatus::GrInvalidUtf8
    })
}

/// Copy the last error message of this thread into `buf` (truncated if
/// needed, always NUL-terminated when `buf_len > 0`). Returns the full
/// message length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must point to `buf_len` writable bytes, or be null.
#[no_mangle]
pub unsafe extern "C" fn gr_last_error(buf: *mut c_char, buf_len: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && buf_len > 0 {
            let n = bytes.len().min(buf_len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gr_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Open a ranker from a checkpoint file and a vocabulary file. On success
/// writes the handle through `out`; free it with [`gr_ranker_free`].
///
/// # Safety
/// `checkpoint_path` and `vocab_path` must be valid NUL-terminated strings
/// and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gr_ranker_open(
    checkpoint_path: *const c_char,
    vocab_path: *const c_char,
    out: *mut *mut GrRanker,
) -> GrStatus {
    if out.is_null() {
        set_error("out is a null pointer");
        return GrStatus::GrNullPointer;
    }
    let ckpt = match str_arg(checkpoint_path, "checkpoint_path") {
        Ok(s) => s,
        Err(st) => return st,
    };
    let vocab_file = match str_arg(vocab_path, "vocab_path") {
        Ok(s) => s,
        Err(st) => return st,
    };
    let model = match load_checkpoint(Path::new(ckpt)) {
        Ok((model, _meta)) => model,
        Err(e) => {
            set_error(&e.to_string());
            return status_of(&e);
        }
    };
    let vocab = match Vocabulary::load(Path::new(vocab_file)) {
        Ok(v) => v,
        Err(e) => {
            set_error(&e.to_string());
            return status_of(&e);
        }
    };
    if vocab.len() != model.config.vocab_size {
        set_error(&format!(
            "vocabulary has {} terms but the checkpoint expects {}",
            vocab.len(),
            model.config.vocab_size
        ));
        return GrStatus::GrUsageError;
    }
    *out = Box::into_raw(Box::new(GrRanker { model, vocab }));
    GrStatus::GrOk
}

/// Release a handle returned by [`gr_ranker_open`]. Null is a no-op.
///
/// # Safety
/// `ranker` must have come from [`gr_ranker_open`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn gr_ranker_free(ranker: *mut GrRanker) {
    if !ranker.is_null() {
        drop(Box::from_raw(ranker));
    }
}

/// Base vocabulary size of the loaded model (including specials); 0 for a
/// null handle.
///
/// # Safety
/// `ranker` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn gr_ranker_vocab_size(ranker: *const GrRanker) -> u64 {
    if ranker.is_null() {
        return 0;
    }
    (*ranker).vocab.len() as u64
}

/// Score a (query, document) pair by teacher-forced generation
/// log-probability, with nucleus-entropy uncertainty at threshold
/// `nucleus_p` (0.95 is the standard setting).
///
/// # Safety
/// `ranker` must be live; `query`/`doc` valid NUL-terminated strings;
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gr_ranker_score(
    ranker: *const GrRanker,
    query: *const c_char,
    doc: *const c_char,
    nucleus_p: f64,
    out: *mut GrScore,
) -> GrStatus {
    if ranker.is_null() || out.is_null() {
        set_error("ranker or out is a null pointer");
        return GrStatus::GrNullPointer;
    }
    let query = match str_arg(query, "query") {
        Ok(s) => s,
        Err(st) => return st,
    };
    let doc = match str_arg(doc, "doc") {
        Ok(s) => s,
        Err(st) => return st,
    };
    let r = &*ranker;
    let profile =
        match score_query_doc(&r.model, "q", query, "d", doc, &r.vocab, Some(nucleus_p)) {
            Ok(p) => p,
            Err(e) => {
                set_error(&e.to_string());
                return status_of(&e);
            }
        };
    let us = profile
        .term_uncertainties()
        .expect("uncertainty was requested");
    let agg = match query_aggregates(&us) {
        Ok(a) => a,
        Err(e) => {
            set_error(&e.to_string());
            return status_of(&e);
        }
    };
    *out = GrScore {
        score: profile.score,
        unc_mean: agg.mean,
        unc_variance: agg.variance,
        unc_max: agg.max,
        unc_entropy: agg.entropy,
        floored: u8::from(profile.floored),
    };
    GrStatus::GrOk
}

/// Greedily generate a query for `doc` (at most `max_len` tokens) into
/// `buf` as a space-joined NUL-terminated UTF-8 string. `written` (when
/// non-null) receives the byte length excluding the terminator.
///
/// # Safety
/// `ranker` must be live; `doc` a valid NUL-terminated string; `buf` must
/// point to `buf_len` writable bytes; `written` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn gr_ranker_generate(
    ranker: *const GrRanker,
    doc: *const c_char,
    max_len: u64,
    buf: *mut c_char,
    buf_len: usize,
    written: *mut usize,
) -> GrStatus {
    if ranker.is_null() || buf.is_null() {
        set_error("ranker or buf is a null pointer");
        return GrStatus::GrNullPointer;
    }
    let doc = match str_arg(doc, "doc") {
        Ok(s) => s,
        Err(st) => return st,
    };
    let r = &*ranker;
    let doc_tokens = truncate_doc(tokenize(doc));
    let ids = match r.model.greedy_generate(&doc_tokens, &r.vocab, max_len as usize) {
        Ok(ids) => ids,
        Err(e) => {
            set_error(&e.to_string());
            return status_of(&e);
        }
    };
    let (_, _, ext) = encode_with_extension(&doc_tokens, &r.vocab);
    let words: Vec<&str> = ids
        .iter()
        .map(|&id| ext.term(&r.vocab, id).unwrap_or("<unk>"))
        .collect();
    let text = words.join(" ");
    let bytes = text.as_bytes();
    if buf_len < bytes.len() + 1 {
        set_error(&format!(
            "buffer of {buf_len} bytes too small for {} bytes plus terminator",
            bytes.len()
        ));
        return GrStatus::GrBufferTooSmall;
    }
    std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, bytes.len());
    *buf.add(bytes.len()) = 0;
    if !written.is_null() {
        *written = bytes.len();
    }
    GrStatus::GrOk
}
