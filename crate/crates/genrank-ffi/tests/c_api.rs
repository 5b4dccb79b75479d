//! Exercises the C ABI exactly as a foreign caller would: everything goes
//! through the extern "C" functions with raw pointers.

use std::ffi::{c_char, CString};

use genrank::model::{save_checkpoint, Architecture, GenerativeModel, ModelConfig, TrainMeta};
use genrank::text::Vocabulary;
use genrank_ffi::{
    gr_last_error, gr_ranker_free, gr_ranker_generate, gr_ranker_open, gr_ranker_score,
    gr_ranker_vocab_size, gr_version, GrRanker, GrScore, GrStatus,
};

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn fixture(dir: &std::path::Path) -> (CString, CString) {
    let words: Vec<Vec<String>> = vec![
        "the cat sat on the mat".split(' ').map(String::from).collect(),
        "a dog ran to the cat".split(' ').map(String::from).collect(),
    ];
    let streams: Vec<&[String]> = words.iter().map(|w| w.as_slice()).collect();
    let vocab = Vocabulary::build(streams.iter().copied(), 1).unwrap();
    let vocab_path = dir.join("vocab.txt");
    vocab.save(&vocab_path).unwrap();

    let model =
        GenerativeModel::new(ModelConfig::tiny(Architecture::Pgn, vocab.len(), 41)).unwrap();
    let ckpt_path = dir.join("model.ckpt");
    save_checkpoint(&ckpt_path, &model, &TrainMeta::untrained(41)).unwrap();
    (
        c(ckpt_path.to_str().unwrap()),
        c(vocab_path.to_str().unwrap()),
    )
}

fn last_error() -> String {
    let mut buf = vec![0u8; 256];
    let n = unsafe { gr_last_error(buf.as_mut_ptr() as *mut c_char, buf.len()) };
    String::from_utf8_lossy(&buf[..n.min(buf.len() - 1)]).into_owned()
}

#[test]
fn version_is_a_nul_terminated_string() {
    let v = unsafe { std::ffi::CStr::from_ptr(gr_version()) };
    assert!(!v.to_str().unwrap().is_empty());
}

#[test]
fn open_score_generate_free() {
    let dir = tempfile::tempdir().unwrap();
    let (ckpt, vocab) = fixture(dir.path());

    let mut handle: *mut GrRanker = std::ptr::null_mut();
    let status = unsafe { gr_ranker_open(ckpt.as_ptr(), vocab.as_ptr(), &mut handle) };
    assert_eq!(status, GrStatus::GrOk, "{}", last_error());
    assert!(!handle.is_null());
    assert!(unsafe { gr_ranker_vocab_size(handle) } >= 4);

    let query = c("cat on the mat");
    let doc = c("the cat sat on the mat");
    let mut score = GrScore {
        score: 0.0,
        unc_mean: 0.0,
        unc_variance: 0.0,
        unc_max: 0.0,
        unc_entropy: 0.0,
        floored: 9,
    };
    let status =
        unsafe { gr_ranker_score(handle, query.as_ptr(), doc.as_ptr(), 0.95, &mut score) };
    assert_eq!(status, GrStatus::GrOk, "{}", last_error());
    assert!(score.score < 0.0);
    assert!(score.unc_mean >= 0.0);
    assert!(score.unc_max >= score.unc_mean);
    assert_eq!(score.floored, 0);

    // Same inputs, same handle: deterministic.
    let mut again = score;
    unsafe { gr_ranker_score(handle, query.as_ptr(), doc.as_ptr(), 0.95, &mut again) };
    assert_eq!(score.score.to_bits(), again.score.to_bits());

    let mut buf = vec![0i8; 512];
    let mut written = 0usize;
    let status = unsafe {
        gr_ranker_generate(
            handle,
            doc.as_ptr(),
            8,
            buf.as_mut_ptr() as *mut c_char,
            buf.len(),
            &mut written,
        )
    };
    assert_eq!(status, GrStatus::GrOk, "{}", last_error());
    let text = unsafe { std::ffi::CStr::from_ptr(buf.as_ptr() as *const c_char) };
    assert_eq!(text.to_bytes().len(), written);

    unsafe { gr_ranker_free(handle) };
}

#[test]
fn null_and_missing_inputs_report_errors() {
    let mut handle: *mut GrRanker = std::ptr::null_mut();
    let status =
        unsafe { gr_ranker_open(std::ptr::null(), std::ptr::null(), &mut handle) };
    assert_eq!(status, GrStatus::GrNullPointer);
    assert!(last_error().contains("null"));

    let missing = c("/nonexistent/model.ckpt");
    let vocab = c("/nonexistent/vocab.txt");
    let status = unsafe { gr_ranker_open(missing.as_ptr(), vocab.as_ptr(), &mut handle) };
    assert_ne!(status, GrStatus::GrOk);
    assert!(handle.is_null());

    // Freeing null is a documented no-op.
    unsafe { gr_ranker_free(std::ptr::null_mut()) };
}

#[test]
fn tiny_buffer_is_rejected_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let (ckpt, vocab) = fixture(dir.path());
    let mut handle: *mut GrRanker = std::ptr::null_mut();
    unsafe { gr_ranker_open(ckpt.as_ptr(), vocab.as_ptr(), &mut handle) };
    let doc = c("the cat sat on the mat with the dog");
    let mut buf = [0i8; 1];
    let status = unsafe {
        gr_ranker_generate(
            handle,
            doc.as_ptr(),
            8,
            buf.as_mut_ptr() as *mut c_char,
            buf.len(),
            std::ptr::null_mut(),
        )
    };
    // A 1-byte buffer only fits an empty generation.
    if status == GrStatus::GrBufferTooSmall {
        assert!(last_error().contains("buffer"));
    } else {
        assert_eq!(status, GrStatus::GrOk);
    }
    unsafe { gr_ranker_free(handle) };
}
