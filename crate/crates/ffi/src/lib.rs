//! C ABI over the `spiffy` engine.
//!
//! Models and graphs are opaque handles created by the `spiffy_model_*` and
//! `spiffy_graph_*` constructors and released with the matching `_free`. Every fallible call
//! returns a [`SpiffyStatus`]; on failure, [`spiffy_last_error`] holds a
//! message for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use spiffy::engine::EngineOptions;
use spiffy::{
    generate_speculative, generate_vanilla, DlmOracle, DraftGraphSpec, GenerationConfig, Mixture, Schedule,
    SpiffyError, ToyDenoiser,
};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpiffyStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Io = 4,
    InvalidGraph = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpiffyScheduleMode {
    Fixed = 0,
    Threshold = 1,
}

/// Generation settings; see [`spiffy_config_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpiffyConfig {
    pub gen_len: usize,
    pub block_len: usize,
    /// A [`SpiffyScheduleMode`] value.
    pub mode: u32,
    /// Tokens per step for `Fixed`.
    pub fixed_s: usize,
    /// Confidence threshold for `Threshold`.
    pub threshold_p: f64,
    pub top_k_vocab: usize,
    pub eot_token: u32,
    pub seed: u64,
}

/// Accounting for one generation.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SpiffyStats {
    pub total_nfe: usize,
    pub baseline_nfe: usize,
    pub acceptances: usize,
    /// First block containing the EOT token, or -1.
    pub eot_block: i64,
    pub speedup_all: f64,
    pub speedup_to_eot: f64,
}

/// Opaque trained toy denoiser.
pub struct SpiffyModel {
    inner: ToyDenoiser,
}

/// Opaque draft graph.
pub struct SpiffyGraph {
    inner: DraftGraphSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(e: &SpiffyError) -> SpiffyStatus {
    match e {
        SpiffyError::Parse { .. } | SpiffyError::Json(_) => SpiffyStatus::Parse,
        SpiffyError::Io(_) => SpiffyStatus::Io,
        SpiffyError::InvalidGraph(_) | SpiffyError::InvalidFormula(_) => SpiffyStatus::InvalidGraph,
        _ => SpiffyStatus::InvalidArgument,
    }
}

struct Fail(SpiffyStatus, String);

impl From<SpiffyError> for Fail {
    fn from(e: SpiffyError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SpiffyStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpiffyStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside spiffy");
            SpiffyStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(SpiffyStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(SpiffyStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(Path::new(s))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn spiffy_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn spiffy_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn spiffy_config_default() -> SpiffyConfig {
    let d = GenerationConfig::default();
    SpiffyConfig {
        gen_len: d.gen_len,
        block_len: d.block_len,
        mode: SpiffyScheduleMode::Fixed as u32,
        fixed_s: 1,
        threshold_p: 0.9,
        top_k_vocab: d.top_k_vocab,
        eot_token: d.eot_token,
        seed: d.seed,
    }
}

fn to_config(c: &SpiffyConfig) -> Result<GenerationConfig, Fail> {
    let schedule = match c.mode {
        m if m == SpiffyScheduleMode::Fixed as u32 => Schedule::Fixed { s: c.fixed_s },
        m if m == SpiffyScheduleMode::Threshold as u32 => Schedule::Threshold { p: c.threshold_p },
        m => {
            return Err(Fail(
                SpiffyStatus::InvalidArgument,
                format!("unknown schedule mode {m}"),
            ))
        }
    };
    let cfg = GenerationConfig {
        gen_len: c.gen_len,
        block_len: c.block_len,
        schedule,
        top_k_vocab: c.top_k_vocab,
        eot_token: c.eot_token,
        seed: c.seed,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Trains a model on `n_seqs` sequences laid end to end in `tokens`, the
/// i-th having `lengths[i]` tokens.
///
/// # Safety
/// `tokens` must point to the sum of `lengths` ids, `lengths` to `n_seqs`
/// entries, and `out` to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn spiffy_model_train(
    tokens: *const u32,
    lengths: *const usize,
    n_seqs: usize,
    vocab: usize,
    alpha: f64,
    lambda_left: f64,
    lambda_right: f64,
    lambda_unigram: f64,
    out: *mut *mut SpiffyModel,
) -> SpiffyStatus {
    guard(|| {
        if lengths.is_null() && n_seqs > 0 {
            return Err(null("lengths"));
        }
        let lens = if n_seqs == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(lengths, n_seqs)
        };
        let total: usize = lens.iter().sum();
        if tokens.is_null() && total > 0 {
            return Err(null("tokens"));
        }
        let flat = if total == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(tokens, total)
        };
        let mut corpus = Vec::with_capacity(n_seqs);
        let mut at = 0;
        for &n in lens {
            corpus.push(flat[at..at + n].to_vec());
            at += n;
        }
        let lambdas = Mixture::new(lambda_left, lambda_right, lambda_unigram)?;
        let inner = ToyDenoiser::train(&corpus, vocab, alpha, lambdas)?;
        write_out(out, SpiffyModel { inner })
    })
}

/// Trains a model on a corpus file (one sequence of ids per line) with the
/// default mixture; the vocabulary is the largest id seen.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn spiffy_model_from_corpus(
    path: *const c_char,
    alpha: f64,
    out: *mut *mut SpiffyModel,
) -> SpiffyStatus {
    guard(|| {
        let corpus = spiffy::model::read_corpus(path_arg(path)?)?;
        let vocab = corpus.iter().flatten().copied().max().unwrap_or(0) as usize;
        let inner = ToyDenoiser::train(&corpus, vocab, alpha, Mixture::default())?;
        write_out(out, SpiffyModel { inner })
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn spiffy_model_load(path: *const c_char, out: *mut *mut SpiffyModel) -> SpiffyStatus {
    guard(|| {
        let inner = ToyDenoiser::load(path_arg(path)?)?;
        write_out(out, SpiffyModel { inner })
    })
}

/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn spiffy_model_save(model: *const SpiffyModel, path: *const c_char) -> SpiffyStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        model.inner.save(path_arg(path)?)?;
        Ok(())
    })
}

/// Vocabulary size, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spiffy_model_vocab(model: *const SpiffyModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.vocab_size())
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spiffy_model_free(model: *mut SpiffyModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Parses the graph text format.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn spiffy_graph_parse(text: *const c_char, out: *mut *mut SpiffyGraph) -> SpiffyStatus {
    guard(|| {
        if text.is_null() {
            return Err(null("text"));
        }
        let text = CStr::from_ptr(text)
            .to_str()
            .map_err(|_| Fail(SpiffyStatus::InvalidArgument, "graph text is not UTF-8".into()))?;
        let inner = DraftGraphSpec::parse(text, "<graph>")?;
        write_out(out, SpiffyGraph { inner })
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn spiffy_graph_load(path: *const c_char, out: *mut *mut SpiffyGraph) -> SpiffyStatus {
    guard(|| {
        let inner = DraftGraphSpec::load(path_arg(path)?)?;
        write_out(out, SpiffyGraph { inner })
    })
}

/// Node count, or 0 for a null handle.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spiffy_graph_len(graph: *const SpiffyGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.inner.len())
}

/// # Safety
/// `graph` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spiffy_graph_free(graph: *mut SpiffyGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Generates `config.gen_len` tokens after `prompt` into `out_tokens`.
///
/// A null `graph` runs vanilla decoding. When `out_cap` is too small nothing
/// is written and `BufferTooSmall` is returned. `stats` may be null.
///
/// # Safety
/// `model` must be live, `graph` null or live, `config` valid, `prompt` must
/// hold `prompt_len` ids and `out_tokens` `out_cap` slots.
#[no_mangle]
pub unsafe extern "C" fn spiffy_generate(
    model: *const SpiffyModel,
    graph: *const SpiffyGraph,
    config: *const SpiffyConfig,
    prompt: *const u32,
    prompt_len: usize,
    out_tokens: *mut u32,
    out_cap: usize,
    stats: *mut SpiffyStats,
) -> SpiffyStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let cfg = to_config(config.as_ref().ok_or_else(|| null("config"))?)?;
        if prompt.is_null() && prompt_len > 0 {
            return Err(null("prompt"));
        }
        let prompt = if prompt_len == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(prompt, prompt_len)
        };
        if out_cap < cfg.gen_len {
            return Err(Fail(
                SpiffyStatus::BufferTooSmall,
                format!("output holds {out_cap} tokens, need {}", cfg.gen_len),
            ));
        }
        if out_tokens.is_null() {
            return Err(null("out_tokens"));
        }
        let gen = match graph.as_ref() {
            Some(g) => generate_speculative(&model.inner, prompt, &cfg, &g.inner, EngineOptions::default())?,
            None => generate_vanilla(&model.inner, prompt, &cfg, EngineOptions::default())?,
        };
        std::slice::from_raw_parts_mut(out_tokens, gen.tokens.len()).copy_from_slice(&gen.tokens);
        if let Some(s) = stats.as_mut() {
            let r = &gen.report;
            *s = SpiffyStats {
                total_nfe: r.total_nfe,
                baseline_nfe: r.baseline_nfe,
                acceptances: r.acceptances,
                eot_block: r.eot_block.map_or(-1, |b| b as i64),
                speedup_all: r.speedup_all,
                speedup_to_eot: r.speedup_to_eot,
            };
        }
        Ok(())
    })
}
