//! C ABI over the class table and the compressed decoding loop.
//!
//! Handles are opaque heap pointers released with the matching `*_free`.
//! Every fallible call returns a [`CfgzStatus`]; on failure the message is
//! kept per thread and read with [`cfgz_last_error`]. Masks cross the
//! boundary as one byte per entry (0 blocked, 1 allowed).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use cfgzip::classes::grammar_digest;
use cfgzip::error::{EngineError, Error, TableError};
use cfgzip::{
    compile, parse_grammar, Cfg, ClassTable, CompileOptions, Engine, EngineState, GrammarSource,
    Mask, MaskDomain, Vocabulary,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfgzStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Grammar = 4,
    Vocabulary = 5,
    /// Corrupt, stale or unreadable cache.
    Cache = 6,
    TokenOutOfRange = 7,
    LengthMismatch = 8,
    /// The token is blocked in the current state.
    MaskedToken = 9,
    Internal = 10,
}

/// Loaded class table.
pub struct CfgzTable {
    table: ClassTable,
}

/// Compressed decoding stream: the engine follows class representatives.
pub struct CfgzDecoder {
    engine: Engine,
    table: ClassTable,
    vocab: Vocabulary,
    state: EngineState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(CfgzStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Grammar(_) | Error::Gnf(_) => CfgzStatus::Grammar,
            Error::Vocab(_) => CfgzStatus::Vocabulary,
            Error::Cache(_) => CfgzStatus::Cache,
            Error::Table(t) | Error::Engine(EngineError::Table(t)) => table_status(t),
            Error::Engine(EngineError::MaskedToken { .. }) => CfgzStatus::MaskedToken,
            Error::Engine(EngineError::Grammar(_)) => CfgzStatus::Grammar,
            Error::Io(_) => CfgzStatus::Io,
            _ => CfgzStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn table_status(e: &TableError) -> CfgzStatus {
    match e {
        TableError::TokenOutOfRange { .. } => CfgzStatus::TokenOutOfRange,
        TableError::LengthMismatch { .. } => CfgzStatus::LengthMismatch,
        _ => CfgzStatus::Internal,
    }
}

macro_rules! impl_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Error::from(e).into()
            }
        }
    )*};
}
impl_from!(
    cfgzip::error::GrammarError,
    cfgzip::error::VocabError,
    cfgzip::error::CacheError,
    TableError,
    EngineError
);

fn null(what: &str) -> Failure {
    Failure(CfgzStatus::NullArgument, format!("`{what}` is null"))
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CfgzStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| p.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "panic".into());
        Err(Failure(CfgzStatus::Internal, format!("internal panic: {msg}")))
    });
    match outcome {
        Ok(()) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CfgzStatus::Ok
        }
        Err(Failure(status, msg)) => {
            let msg = CString::new(msg.replace('\0', " ")).expect("no interior nul");
            LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
            status
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(CfgzStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn load_grammar(p: *const c_char) -> Result<Cfg, Failure> {
    let path = path_arg(p, "grammar_path")?;
    Ok(parse_grammar(&GrammarSource::from_file(path)?)?.validate()?)
}

unsafe fn load_vocab(p: *const c_char) -> Result<Vocabulary, Failure> {
    Ok(Vocabulary::load(path_arg(p, "vocab_path")?)?)
}

unsafe fn load_checked(cache: *const c_char, g: &Cfg, v: &Vocabulary) -> Result<ClassTable, Failure> {
    let path = path_arg(cache, "cache_path")?;
    Ok(ClassTable::load(path, &grammar_digest(g), &v.digest())?)
}

unsafe fn write_mask(mask: &Mask, out: *mut u8, len: usize) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    if len != mask.len() {
        return Err(Failure(
            CfgzStatus::LengthMismatch,
            format!("buffer holds {len} entries, mask has {}", mask.len()),
        ));
    }
    let out = std::slice::from_raw_parts_mut(out, len);
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = mask.get(i) as u8;
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call on this thread.
#[no_mangle]
pub extern "C" fn cfgz_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Builds the class table for a grammar file and a vocabulary file and
/// writes it to `cache_path`. `threads` of 0 means 1.
///
/// # Safety
/// Path arguments must be null or NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn cfgz_compile(
    grammar_path: *const c_char,
    vocab_path: *const c_char,
    cache_path: *const c_char,
    threads: usize,
) -> CfgzStatus {
    guard(|| {
        let g = load_grammar(grammar_path)?;
        let v = load_vocab(vocab_path)?;
        let cache = path_arg(cache_path, "cache_path")?;
        let opts = CompileOptions {
            threads: threads.max(1),
            ..Default::default()
        };
        let out = compile(&g, &v, &opts)?;
        out.table.save(cache)?;
        Ok(())
    })
}

/// Reads a cache file, checking its checksum and structure only.
///
/// # Safety
/// `cache_path` must be null or a NUL-terminated string; `out` must be null
/// or writable.
#[no_mangle]
pub unsafe extern "C" fn cfgz_table_load(cache_path: *const c_char, out: *mut *mut CfgzTable) -> CfgzStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let table = ClassTable::read(path_arg(cache_path, "cache_path")?)?;
        *out = Box::into_raw(Box::new(CfgzTable { table }));
        Ok(())
    })
}

/// # Safety
/// `table` must be null or a handle from [`cfgz_table_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cfgz_table_free(table: *mut CfgzTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Number of tokens, or 0 for a null handle.
///
/// # Safety
/// `table` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cfgz_table_token_count(table: *const CfgzTable) -> usize {
    table.as_ref().map_or(0, |t| t.table.token_count())
}

/// Number of classes, or 0 for a null handle.
///
/// # Safety
/// `table` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cfgz_table_class_count(table: *const CfgzTable) -> usize {
    table.as_ref().map_or(0, |t| t.table.class_count())
}

/// Class id and representative token of `token`.
///
/// # Safety
/// `table` must be null or a live handle; each output must be null or
/// writable. Null outputs are skipped.
#[no_mangle]
pub unsafe extern "C" fn cfgz_table_lookup(
    table: *const CfgzTable,
    token: u32,
    out_class: *mut u32,
    out_representative: *mut u32,
) -> CfgzStatus {
    guard(|| {
        let t = &table.as_ref().ok_or_else(|| null("table"))?.table;
        let rep = t.map_token(token)?;
        if let Some(c) = out_class.as_mut() {
            *c = t.class_of(token);
        }
        if let Some(r) = out_representative.as_mut() {
            *r = rep;
        }
        Ok(())
    })
}

/// Sets `logits[i]` to negative infinity for every token whose class is
/// blocked in `class_mask`.
///
/// # Safety
/// `logits` must hold `n_tokens` floats and `class_mask` `n_classes` bytes.
#[no_mangle]
pub unsafe extern "C" fn cfgz_table_apply_mask(
    table: *const CfgzTable,
    logits: *mut f32,
    n_tokens: usize,
    class_mask: *const u8,
    n_classes: usize,
) -> CfgzStatus {
    guard(|| {
        let t = &table.as_ref().ok_or_else(|| null("table"))?.table;
        if logits.is_null() {
            return Err(null("logits"));
        }
        if class_mask.is_null() {
            return Err(null("class_mask"));
        }
        let bits = std::slice::from_raw_parts(class_mask, n_classes);
        let mask = Mask::from_fn(MaskDomain::Classes, n_classes, |k| bits[k] != 0);
        let logits = std::slice::from_raw_parts_mut(logits, n_tokens);
        t.apply_mask_in_place(logits, &mask)?;
        Ok(())
    })
}

/// Opens a decoding stream. The cache must match both inputs.
///
/// # Safety
/// Path arguments must be null or NUL-terminated strings; `out` must be null
/// or writable.
#[no_mangle]
pub unsafe extern "C" fn cfgz_decoder_new(
    grammar_path: *const c_char,
    vocab_path: *const c_char,
    cache_path: *const c_char,
    out: *mut *mut CfgzDecoder,
) -> CfgzStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let g = load_grammar(grammar_path)?;
        let vocab = load_vocab(vocab_path)?;
        let table = load_checked(cache_path, &g, &vocab)?;
        let engine = Engine::new(&g)?;
        let state = engine.new_state();
        *out = Box::into_raw(Box::new(CfgzDecoder {
            engine,
            table,
            vocab,
            state,
        }));
        Ok(())
    })
}

/// # Safety
/// `decoder` must be null or a handle from [`cfgz_decoder_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cfgz_decoder_free(decoder: *mut CfgzDecoder) {
    if !decoder.is_null() {
        drop(Box::from_raw(decoder));
    }
}

/// Number of tokens in the decoder's vocabulary, or 0 for a null handle.
///
/// # Safety
/// `decoder` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cfgz_decoder_token_count(decoder: *const CfgzDecoder) -> usize {
    decoder.as_ref().map_or(0, |d| d.vocab.len())
}

/// Number of classes in the decoder's table, or 0 for a null handle.
///
/// # Safety
/// `decoder` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cfgz_decoder_class_count(decoder: *const CfgzDecoder) -> usize {
    decoder.as_ref().map_or(0, |d| d.table.class_count())
}

/// Writes the class mask for the current state into `out[0..n_classes]`.
///
/// # Safety
/// `decoder` must be a live handle and `out` must hold `n_classes` bytes.
#[no_mangle]
pub unsafe extern "C" fn cfgz_decoder_class_mask(decoder: *const CfgzDecoder, out: *mut u8, n_classes: usize) -> CfgzStatus {
    guard(|| {
        let d = decoder.as_ref().ok_or_else(|| null("decoder"))?;
        let m = d.engine.compute_mask_compressed(&d.state, &d.table, &d.vocab);
        write_mask(&m, out, n_classes)
    })
}

/// Writes the full-vocabulary mask for the current state into
/// `out[0..n_tokens]`.
///
/// # Safety
/// `decoder` must be a live handle and `out` must hold `n_tokens` bytes.
#[no_mangle]
pub unsafe extern "C" fn cfgz_decoder_token_mask(decoder: *const CfgzDecoder, out: *mut u8, n_tokens: usize) -> CfgzStatus {
    guard(|| {
        let d = decoder.as_ref().ok_or_else(|| null("decoder"))?;
        let m = d.engine.compute_mask_compressed(&d.state, &d.table, &d.vocab);
        write_mask(&d.table.expand(&m)?, out, n_tokens)
    })
}

/// Advances by the representative of `token`'s class. The state is left
/// unchanged on failure.
///
/// # Safety
/// `decoder` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cfgz_decoder_commit(decoder: *mut CfgzDecoder, token: u32) -> CfgzStatus {
    guard(|| {
        let d = decoder.as_mut().ok_or_else(|| null("decoder"))?;
        d.state = d.engine.commit_token(&d.state, token, &d.table, &d.vocab)?;
        Ok(())
    })
}

/// Whether the committed text is a complete sentence. False for null.
///
/// # Safety
/// `decoder` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cfgz_decoder_is_complete(decoder: *const CfgzDecoder) -> bool {
    decoder.as_ref().is_some_and(|d| d.state.is_complete())
}

/// Returns to the empty prefix.
///
/// # Safety
/// `decoder` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cfgz_decoder_reset(decoder: *mut CfgzDecoder) -> CfgzStatus {
    guard(|| {
        let d = decoder.as_mut().ok_or_else(|| null("decoder"))?;
        d.state = d.engine.new_state();
        Ok(())
    })
}
