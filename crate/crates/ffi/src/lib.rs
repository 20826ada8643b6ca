//! C ABI over the medaug core.
//!
//! Every fallible function returns a [`MedaugStatus`] and writes results
//! through out-pointers. On failure the message for the calling thread is
//! available from [`medaug_last_error`]. Handles are opaque and must be
//! released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use medaug::classifier::ClassifierModel;
use medaug::genlm::{sample, GeneratorModel, PromptSpec};
use medaug::metrics::{auprc, auroc, rp80, ScoredPredictions};
use medaug::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MedaugStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Checkpoint = 5,
    Parse = 6,
    GenerationStarved = 7,
    Panic = 8,
}

/// Label-conditioned generator loaded from a checkpoint.
pub struct MedaugGenerator(GeneratorModel);

/// Binary classifier loaded from a checkpoint.
pub struct MedaugClassifier(ClassifierModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MedaugStatus {
    match e {
        Error::Io(_) => MedaugStatus::Io,
        Error::Checkpoint(_) => MedaugStatus::Checkpoint,
        Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => MedaugStatus::Parse,
        Error::GenerationStarved { .. } => MedaugStatus::GenerationStarved,
        Error::Stage { source, .. } => status_of(source),
        _ => MedaugStatus::InvalidArgument,
    }
}

struct Fail(MedaugStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(MedaugStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording the error message and mapping panics.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MedaugStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MedaugStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            MedaugStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(MedaugStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn medaug_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static, NUL-terminated crate version.
#[no_mangle]
pub extern "C" fn medaug_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Frees a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn medaug_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn medaug_generator_load(path: *const c_char, out: *mut *mut MedaugGenerator) -> MedaugStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let model = GeneratorModel::load(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(MedaugGenerator(model)));
        Ok(())
    })
}

/// # Safety
/// `g` must come from [`medaug_generator_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn medaug_generator_free(g: *mut MedaugGenerator) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Samples one body for `label` (0 or 1) starting with the words of
/// `context` (may be null). The text is written to `out` and must be
/// released with [`medaug_string_free`].
///
/// # Safety
/// `g` must be a live generator, `context` null or NUL-terminated, `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn medaug_generator_sample(
    g: *const MedaugGenerator,
    label: u8,
    context: *const c_char,
    temperature: f64,
    top_k: usize,
    max_len: usize,
    seed: u64,
    out: *mut *mut c_char,
) -> MedaugStatus {
    guard(|| {
        let g = g.as_ref().ok_or_else(|| null("generator"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let context = if context.is_null() { "" } else { str_arg(context, "context")? };
        let prompt = PromptSpec {
            label,
            context: context.split_whitespace().map(String::from).collect(),
            temperature,
            top_k,
            max_len,
            seed,
        };
        let s = sample(&g.0, &prompt)?;
        *out = CString::new(s.text).map_err(|e| Fail(MedaugStatus::Panic, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn medaug_classifier_load(path: *const c_char, out: *mut *mut MedaugClassifier) -> MedaugStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let model = ClassifierModel::load(str_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(MedaugClassifier(model)));
        Ok(())
    })
}

/// # Safety
/// `c` must come from [`medaug_classifier_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn medaug_classifier_free(c: *mut MedaugClassifier) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Positive-class probability of `text`.
///
/// # Safety
/// `c` must be a live classifier, `text` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn medaug_classifier_predict(
    c: *const MedaugClassifier,
    text: *const c_char,
    out: *mut f64,
) -> MedaugStatus {
    guard(|| {
        let c = c.as_ref().ok_or_else(|| null("classifier"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let text = str_arg(text, "text")?;
        *out = c.0.predict_ids(&c.0.encode(text))[1];
        Ok(())
    })
}

unsafe fn metric(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
    f: fn(&ScoredPredictions) -> medaug::Result<f64>,
) -> MedaugStatus {
    guard(|| {
        if scores.is_null() || labels.is_null() {
            return Err(null("scores or labels"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let sp = ScoredPredictions::new(
            std::slice::from_raw_parts(scores, n).to_vec(),
            std::slice::from_raw_parts(labels, n).to_vec(),
        )?;
        *out = f(&sp)?;
        Ok(())
    })
}

/// Area under the ROC curve with tied scores counted half.
///
/// # Safety
/// `scores` and `labels` must point to `n` readable elements, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn medaug_auroc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> MedaugStatus {
    metric(scores, labels, n, out, auroc)
}

/// Average precision.
///
/// # Safety
/// As [`medaug_auroc`].
#[no_mangle]
pub unsafe extern "C" fn medaug_auprc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> MedaugStatus {
    metric(scores, labels, n, out, auprc)
}

/// Highest recall at precision of at least 0.8.
///
/// # Safety
/// As [`medaug_auroc`].
#[no_mangle]
pub unsafe extern "C" fn medaug_rp80(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> MedaugStatus {
    metric(scores, labels, n, out, rp80)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_errors_map_to_their_cause() {
        let e = Error::Checkpoint("x".into()).in_stage("finetune");
        assert_eq!(status_of(&e), MedaugStatus::Checkpoint);
        assert_eq!(status_of(&Error::Validation("x".into())), MedaugStatus::InvalidArgument);
    }

    #[test]
    fn panics_become_status() {
        assert_eq!(guard(|| panic!("boom")), MedaugStatus::Panic);
        let msg = unsafe { CStr::from_ptr(medaug_last_error()) };
        assert_eq!(msg.to_str().unwrap(), "panic: boom");
    }
}
