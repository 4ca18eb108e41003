//! C interface: load a checkpoint, compute logits, and score them.
//!
//! Every function returns a [`GtcnStatus`]; on failure the message is
//! available from [`gtcn_last_error_message`] on the same thread until the
//! next failing call. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use gtcn::metrics::{self, ScoreSet};
use gtcn::models::GtcnModel;
use gtcn::{Error, Tensor};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GtcnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Shape = 5,
    NonFinite = 6,
    Panic = 7,
    Other = 8,
}

/// Opaque model handle.
pub struct GtcnHandle {
    model: GtcnModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(GtcnStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidArgument(_) | Error::Dataset(_) => GtcnStatus::InvalidArgument,
            Error::Io { .. } | Error::Image { .. } => GtcnStatus::Io,
            Error::Format(_) => GtcnStatus::Format,
            Error::Shape(_) | Error::Node { .. } => GtcnStatus::Shape,
            Error::NonFinite { .. } | Error::NonFiniteLoss { .. } => GtcnStatus::NonFinite,
            _ => GtcnStatus::Other,
        };
        Fail(status, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(GtcnStatus::NullPointer, format!("`{what}` is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(GtcnStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GtcnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GtcnStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            GtcnStatus::Panic
        }
    }
}

unsafe fn slice_in<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, n))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a>(h: *const GtcnHandle) -> Result<&'a GtcnModel, Fail> {
    h.as_ref().map(|h| &h.model).ok_or_else(|| null("model"))
}

unsafe fn score_set(scores: *const f64, positive: *const u8, n: usize) -> Result<ScoreSet, Fail> {
    let s = slice_in(scores, n, "scores")?;
    let p = slice_in(positive, n, "positive")?;
    Ok(ScoreSet::new(s.to_vec(), p.iter().map(|&b| b != 0).collect())?)
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gtcn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a checkpoint. On success `*out` owns a handle to release with
/// [`gtcn_model_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gtcn_model_load(path: *const c_char, out_model: *mut *mut GtcnHandle) -> GtcnStatus {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        *slot = ptr::null_mut();
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| invalid("path is not valid UTF-8"))?;
        let model = GtcnModel::load(Path::new(path))?;
        *slot = Box::into_raw(Box::new(GtcnHandle { model }));
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `model` must come from [`gtcn_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gtcn_model_free(model: *mut GtcnHandle) {
    if !model.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(model))));
    }
}

/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gtcn_model_num_classes(model: *const GtcnHandle, out_k: *mut usize) -> GtcnStatus {
    guard(|| {
        *out(out_k, "out_k")? = handle(model)?.arch.classes;
        Ok(())
    })
}

/// Input side length expected by [`gtcn_model_logits`].
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gtcn_model_resolution(model: *const GtcnHandle, out_res: *mut usize) -> GtcnStatus {
    guard(|| {
        *out(out_res, "out_res")? = handle(model)?.arch.res;
        Ok(())
    })
}

/// Classifier logits for `n` images laid out as n×res×res×3 floats in
/// [-1,1], channels last. Writes n×k values to `logits`.
///
/// # Safety
/// `pixels` must hold `n·res·res·3` floats and `logits` room for
/// `logits_len` floats.
#[no_mangle]
pub unsafe extern "C" fn gtcn_model_logits(
    model: *const GtcnHandle,
    pixels: *const f32,
    n: usize,
    logits: *mut f32,
    logits_len: usize,
) -> GtcnStatus {
    guard(|| {
        let m = handle(model)?;
        let (res, k) = (m.arch.res, m.arch.classes);
        if n == 0 {
            return Err(invalid("no images given"));
        }
        let want = n * k;
        if logits_len < want {
            return Err(invalid(format!("logit buffer holds {logits_len} values, {want} needed")));
        }
        let px = slice_in(pixels, n * res * res * 3, "pixels")?;
        if logits.is_null() {
            return Err(null("logits"));
        }
        let x = Tensor::new(vec![n, res, res, 3], px.to_vec())?;
        let y = m.classifier.predict(&x, 32)?;
        slice::from_raw_parts_mut(logits, want).copy_from_slice(y.data());
        Ok(())
    })
}

/// Half the margin of logit 0 over logit 1; `k` must be 2.
///
/// # Safety
/// `logits` must hold `k` floats and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn gtcn_binary_score(logits: *const f32, k: usize, out_score: *mut f64) -> GtcnStatus {
    guard(|| {
        let l = slice_in(logits, k, "logits")?;
        *out(out_score, "out_score")? = metrics::binary_score(l)?;
        Ok(())
    })
}

/// Weighted sum `w1·a + w2·b` of two scores.
#[no_mangle]
pub extern "C" fn gtcn_fuse_scores(a: f64, b: f64, w1: f64, w2: f64) -> f64 {
    metrics::fuse_scores(a, b, w1, w2)
}

/// # Safety
/// `a` and `b` must hold `na` and `nb` values and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn gtcn_fisher_j(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    out_j: *mut f64,
) -> GtcnStatus {
    guard(|| {
        let j = metrics::fisher_j(slice_in(a, na, "a")?, slice_in(b, nb, "b")?)?;
        *out(out_j, "out_j")? = j;
        Ok(())
    })
}

/// Equal error rate of `n` scores; `positive[i] != 0` marks the accepted class.
///
/// # Safety
/// `scores` and `positive` must hold `n` entries and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn gtcn_eer(scores: *const f64, positive: *const u8, n: usize, out_eer: *mut f64) -> GtcnStatus {
    guard(|| {
        let curve = metrics::roc(&score_set(scores, positive, n)?)?;
        *out(out_eer, "out_eer")? = metrics::eer(&curve);
        Ok(())
    })
}

/// TAR at the largest achievable FAR not above `far`.
///
/// # Safety
/// `scores` and `positive` must hold `n` entries and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn gtcn_tar_at_far(
    scores: *const f64,
    positive: *const u8,
    n: usize,
    far: f64,
    out_tar: *mut f64,
) -> GtcnStatus {
    guard(|| {
        if !(0.0..=1.0).contains(&far) {
            return Err(invalid(format!("FAR must lie in [0,1], got {far}")));
        }
        let curve = metrics::roc(&score_set(scores, positive, n)?)?;
        *out(out_tar, "out_tar")? = metrics::tar_at_far(&curve, far);
        Ok(())
    })
}
