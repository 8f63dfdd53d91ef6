//! C ABI for the metaembed toolkit.
//!
//! Embeddings are exposed through the opaque [`MeEmbedding`] handle. Every
//! fallible function returns a [`MeStatus`]; on failure a human-readable
//! message is available from [`me_last_error_message`] on the same thread.
//! Strings returned to the caller must be released with [`me_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use metaembed::embio::{self, EmbeddingSet, Format};
use metaembed::evalsuite::cosine;
use metaembed::{pipeline, Error, PipelineConfig};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Parse = 5,
    OutOfVocabulary = 6,
    BufferTooSmall = 7,
    Numerical = 8,
    Pipeline = 9,
    Panic = 10,
}

/// Embedding file format selector.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeFormat {
    /// Detect from the file contents. Only valid when loading.
    Auto = 0,
    Word2vecText = 1,
    GloveText = 2,
    CacheBinary = 3,
}

/// Opaque handle to a loaded embedding set.
pub struct MeEmbedding {
    set: EmbeddingSet,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    status: MeStatus,
    message: String,
}

impl Failure {
    fn new(status: MeStatus, message: impl Into<String>) -> Self {
        Failure {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Stage { .. } => MeStatus::Pipeline,
            Error::Io { .. } => MeStatus::Io,
            Error::Parse { .. } | Error::CacheVersion(_) => MeStatus::Parse,
            Error::OutOfVocabulary { .. } => MeStatus::OutOfVocabulary,
            Error::NonFinite { .. }
            | Error::Singular { .. }
            | Error::NoConvergence { .. }
            | Error::ZeroNorm { .. }
            | Error::Undefined(_) => MeStatus::Numerical,
            _ => MeStatus::InvalidArgument,
        };
        Failure::new(status, e.to_string())
    }
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

/// Runs `f`, converting errors and panics into a status code.
fn guard<F>(f: F) -> MeStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MeStatus::Ok,
        Ok(Err(failure)) => {
            set_last_error(&failure.message);
            failure.status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {message}"));
            MeStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(MeStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(MeStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a>(p: *const MeEmbedding) -> Result<&'a MeEmbedding, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(MeStatus::NullArgument, "embedding handle is null"))
}

fn null_out(what: &str) -> Failure {
    Failure::new(MeStatus::NullArgument, format!("{what} is null"))
}

fn format_of(format: MeFormat) -> Option<Format> {
    match format {
        MeFormat::Auto => None,
        MeFormat::Word2vecText => Some(Format::Word2vecText),
        MeFormat::GloveText => Some(Format::GloveText),
        MeFormat::CacheBinary => Some(Format::CacheBinary),
    }
}

fn lookup<'a>(emb: &'a MeEmbedding, word: &str) -> Result<&'a [f32], Failure> {
    emb.set.get(word).ok_or_else(|| {
        Error::OutOfVocabulary {
            word: word.to_string(),
        }
        .into()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn me_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null if the last
/// call succeeded. The pointer stays valid until the next call into the
/// library on this thread.
#[no_mangle]
pub extern "C" fn me_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads an embedding file into a new handle.
///
/// # Safety
///
/// `path` must be a valid NUL-terminated string and `out` a valid pointer
/// to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn me_embedding_load(
    path: *const c_char,
    format: MeFormat,
    out: *mut *mut MeEmbedding,
) -> MeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_out("out"));
        }
        *out = ptr::null_mut();
        let path = PathBuf::from(str_arg(path, "path")?);
        let format = match format_of(format) {
            Some(f) => f,
            None => embio::detect_format(&path)?,
        };
        let set = embio::load_embeddings(&path, format)?;
        *out = Box::into_raw(Box::new(MeEmbedding { set }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
///
/// `emb` must be null or a handle returned by [`me_embedding_load`] that
/// has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn me_embedding_free(emb: *mut MeEmbedding) {
    if !emb.is_null() {
        drop(Box::from_raw(emb));
    }
}

/// Number of words in the embedding, or 0 for a null handle.
///
/// # Safety
///
/// `emb` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn me_embedding_len(emb: *const MeEmbedding) -> usize {
    emb.as_ref().map_or(0, |e| e.set.len())
}

/// Vector dimension, or 0 for a null handle.
///
/// # Safety
///
/// `emb` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn me_embedding_dim(emb: *const MeEmbedding) -> usize {
    emb.as_ref().map_or(0, |e| e.set.dim())
}

/// Copies the vector of `word` into `buf`, which must hold at least
/// [`me_embedding_dim`] floats.
///
/// # Safety
///
/// `emb` must be a live handle, `word` a valid NUL-terminated string and
/// `buf` valid for `buf_len` writes.
#[no_mangle]
pub unsafe extern "C" fn me_embedding_vector(
    emb: *const MeEmbedding,
    word: *const c_char,
    buf: *mut f32,
    buf_len: usize,
) -> MeStatus {
    guard(|| {
        let emb = handle(emb)?;
        let word = str_arg(word, "word")?;
        if buf.is_null() {
            return Err(null_out("buf"));
        }
        let row = lookup(emb, word)?;
        if buf_len < row.len() {
            return Err(Failure::new(
                MeStatus::BufferTooSmall,
                format!("buffer holds {buf_len} floats, vector has {}", row.len()),
            ));
        }
        ptr::copy_nonoverlapping(row.as_ptr(), buf, row.len());
        Ok(())
    })
}

/// Cosine similarity of two words. A zero vector has similarity 0.
///
/// # Safety
///
/// `emb` must be a live handle, `a` and `b` valid NUL-terminated strings
/// and `out` a valid pointer to one double.
#[no_mangle]
pub unsafe extern "C" fn me_embedding_cosine(
    emb: *const MeEmbedding,
    a: *const c_char,
    b: *const c_char,
    out: *mut f64,
) -> MeStatus {
    guard(|| {
        let emb = handle(emb)?;
        let a = str_arg(a, "a")?;
        let b = str_arg(b, "b")?;
        if out.is_null() {
            return Err(null_out("out"));
        }
        let widen = |v: &[f32]| v.iter().map(|&x| f64::from(x)).collect::<Vec<f64>>();
        let va = widen(lookup(emb, a)?);
        let vb = widen(lookup(emb, b)?);
        *out = cosine(&va, &vb);
        Ok(())
    })
}

/// Writes the embedding to `path`. `ME_FORMAT_AUTO` is rejected.
///
/// # Safety
///
/// `emb` must be a live handle and `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn me_embedding_save(emb: *const MeEmbedding, path: *const c_char, format: MeFormat) -> MeStatus {
    guard(|| {
        let emb = handle(emb)?;
        let path = str_arg(path, "path")?;
        let format = format_of(format)
            .ok_or_else(|| Failure::new(MeStatus::InvalidArgument, "an explicit format is required for saving"))?;
        embio::save_embeddings(&emb.set, path, format)?;
        Ok(())
    })
}

/// Runs the pipeline described by a TOML config file and returns the
/// evaluation report as a JSON string in `out_json`. Release it with
/// [`me_string_free`].
///
/// # Safety
///
/// `config_path` must be a valid NUL-terminated string and `out_json` a
/// valid pointer to writable storage for one string pointer.
#[no_mangle]
pub unsafe extern "C" fn me_pipeline_run(config_path: *const c_char, out_json: *mut *mut c_char) -> MeStatus {
    guard(|| {
        if out_json.is_null() {
            return Err(null_out("out_json"));
        }
        *out_json = ptr::null_mut();
        let path = str_arg(config_path, "config_path")?;
        let cfg = PipelineConfig::load(path)?;
        let output = pipeline::run(&cfg)?;
        let json = CString::new(output.report.to_json())
            .map_err(|_| Failure::new(MeStatus::Panic, "report contains a NUL byte"))?;
        *out_json = json.into_raw();
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
///
/// `s` must be null or a pointer returned by this library that has not
/// been freed yet.
#[no_mangle]
pub unsafe extern "C" fn me_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_is_nul_terminated() {
        let v = unsafe { CStr::from_ptr(me_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn errors_map_to_status_codes() {
        let f: Failure = Error::OutOfVocabulary { word: "x".into() }.into();
        assert_eq!(f.status, MeStatus::OutOfVocabulary);
        let f: Failure = Error::InvalidArgument("bad".into()).into();
        assert_eq!(f.status, MeStatus::InvalidArgument);
    }

    #[test]
    fn panics_are_contained() {
        let status = guard(|| panic!("boom"));
        assert_eq!(status, MeStatus::Panic);
        let msg = unsafe { CStr::from_ptr(me_last_error_message()) };
        assert_eq!(msg.to_str().unwrap(), "panic: boom");
        assert_eq!(guard(|| Ok(())), MeStatus::Ok);
        assert!(me_last_error_message().is_null());
    }
}
