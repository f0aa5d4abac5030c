//! C ABI over `fmsurvival`.
//!
//! Every fallible call returns an [`FmsStatus`] and writes its result
//! through an out-pointer. On failure, [`fms_last_error`] describes what
//! went wrong on the calling thread. Models are opaque handles created by
//! [`fms_model_load`] and released with [`fms_model_free`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, UnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use libc::{c_char, size_t};

use fmsurvival::audit::macro_f1;
use fmsurvival::metrics::{entropy_of_counts, gini_coefficient};
use fmsurvival::ranker::{read_checkpoint, Checkpoint};
use fmsurvival::survival::percent_change;
use fmsurvival::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FmsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Undefined = 5,
    Panic = 6,
}

/// A loaded factorization-machine checkpoint.
pub struct FmsModel {
    checkpoint: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: FmsStatus, message: impl Into<String>) -> FmsStatus {
    set_error(message.into());
    status
}

fn status_of(err: &Error) -> FmsStatus {
    match err {
        Error::Io { .. } => FmsStatus::Io,
        Error::Parse { .. } => FmsStatus::Parse,
        Error::UndefinedChange => FmsStatus::Undefined,
        _ => FmsStatus::InvalidArgument,
    }
}

fn guarded(f: impl FnOnce() -> FmsStatus + UnwindSafe) -> FmsStatus {
    catch_unwind(f).unwrap_or_else(|_| fail(FmsStatus::Panic, "internal panic"))
}

unsafe fn slice_or_empty<'a, T>(data: *const T, len: size_t) -> Option<&'a [T]> {
    if len == 0 {
        Some(&[])
    } else if data.is_null() {
        None
    } else {
        Some(slice::from_raw_parts(data, len))
    }
}

/// Message of the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fms_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fms_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint file into a new handle stored in `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn fms_model_load(path: *const c_char, out: *mut *mut FmsModel) -> FmsStatus {
    guarded(|| {
        if path.is_null() || out.is_null() {
            return fail(FmsStatus::NullPointer, "path and out must not be NULL");
        }
        let path = match CStr::from_ptr(path).to_str() {
            Ok(p) => p,
            Err(_) => return fail(FmsStatus::InvalidArgument, "path is not valid UTF-8"),
        };
        match read_checkpoint(Path::new(path)) {
            Ok(checkpoint) => {
                *out = Box::into_raw(Box::new(FmsModel { checkpoint }));
                FmsStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// Releases a handle from [`fms_model_load`]. NULL is ignored.
///
/// # Safety
/// `model` must come from [`fms_model_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fms_model_free(model: *mut FmsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of features (users, items and attribute values) the model covers.
///
/// # Safety
/// `model` must be a live handle or NULL (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn fms_model_dimension(model: *const FmsModel) -> size_t {
    model.as_ref().map_or(0, |m| m.checkpoint.params.dimension())
}

/// Latent factors per feature.
///
/// # Safety
/// `model` must be a live handle or NULL (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn fms_model_factors(model: *const FmsModel) -> size_t {
    model.as_ref().map_or(0, |m| m.checkpoint.params.factors)
}

/// Seed the checkpoint was trained with.
///
/// # Safety
/// `model` must be a live handle or NULL (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn fms_model_seed(model: *const FmsModel) -> u64 {
    model.as_ref().map_or(0, |m| m.checkpoint.seed)
}

/// FM score of the binary feature set `active[0..len]`.
///
/// # Safety
/// `model` must be a live handle, `active` must hold `len` indices and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fms_model_score(
    model: *const FmsModel,
    active: *const size_t,
    len: size_t,
    out: *mut f64,
) -> FmsStatus {
    guarded(|| {
        let (Some(m), Some(active), false) = (model.as_ref(), slice_or_empty(active, len), out.is_null()) else {
            return fail(FmsStatus::NullPointer, "model, active and out must not be NULL");
        };
        match m.checkpoint.params.score(active) {
            Ok(s) => {
                *out = s;
                FmsStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// Scores each of `items[0..num_items]` for one user described by
/// `user_features[0..num_user_features]`, writing `scores[0..num_items]`.
///
/// # Safety
/// Every array must hold the stated number of elements; `scores` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn fms_model_score_items(
    model: *const FmsModel,
    user_features: *const size_t,
    num_user_features: size_t,
    items: *const size_t,
    num_items: size_t,
    scores: *mut f64,
) -> FmsStatus {
    guarded(|| {
        let (Some(m), Some(user), Some(items)) = (
            model.as_ref(),
            slice_or_empty(user_features, num_user_features),
            slice_or_empty(items, num_items),
        ) else {
            return fail(FmsStatus::NullPointer, "model and non-empty arrays must not be NULL");
        };
        if scores.is_null() && num_items > 0 {
            return fail(FmsStatus::NullPointer, "scores must not be NULL");
        }
        let params = &m.checkpoint.params;
        let ctx = match params.user_context(user) {
            Ok(c) => c,
            Err(e) => return fail(status_of(&e), e.to_string()),
        };
        if let Some(&bad) = items.iter().find(|&&i| i >= params.dimension()) {
            return fail(
                FmsStatus::InvalidArgument,
                format!("item feature {bad} out of range for dimension {}", params.dimension()),
            );
        }
        for (k, &item) in items.iter().enumerate() {
            *scores.add(k) = ctx.score(params, item);
        }
        FmsStatus::Ok
    })
}

/// Macro-averaged F1 of `predictions` against `truth`, both of length `len`.
///
/// # Safety
/// Both arrays must hold `len` labels and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fms_macro_f1(
    predictions: *const size_t,
    truth: *const size_t,
    len: size_t,
    out: *mut f64,
) -> FmsStatus {
    guarded(|| {
        let (Some(p), Some(t), false) = (slice_or_empty(predictions, len), slice_or_empty(truth, len), out.is_null()) else {
            return fail(FmsStatus::NullPointer, "arrays and out must not be NULL");
        };
        match macro_f1(p, t) {
            Ok(f) => {
                *out = f;
                FmsStatus::Ok
            }
            Err(e) => fail(status_of(&e), e.to_string()),
        }
    })
}

/// `(variant - base) / base`; [`FmsStatus::Undefined`] when `base` is 0.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fms_percent_change(base: f64, variant: f64, out: *mut f64) -> FmsStatus {
    if out.is_null() {
        return fail(FmsStatus::NullPointer, "out must not be NULL");
    }
    match percent_change(base, variant) {
        Ok(v) => {
            *out = v;
            FmsStatus::Ok
        }
        Err(e) => fail(status_of(&e), e.to_string()),
    }
}

/// Shannon entropy in bits of per-item recommendation counts.
///
/// # Safety
/// `counts` must hold `len` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fms_entropy(counts: *const u64, len: size_t, out: *mut f64) -> FmsStatus {
    let (Some(c), false) = (slice_or_empty(counts, len), out.is_null()) else {
        return fail(FmsStatus::NullPointer, "counts and out must not be NULL");
    };
    *out = entropy_of_counts(c);
    FmsStatus::Ok
}

/// `1 - Gini` of per-item recommendation counts over the whole catalog.
///
/// # Safety
/// `counts` must hold `len` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fms_gini_diversity(counts: *const u64, len: size_t, out: *mut f64) -> FmsStatus {
    let (Some(c), false) = (slice_or_empty(counts, len), out.is_null()) else {
        return fail(FmsStatus::NullPointer, "counts and out must not be NULL");
    };
    *out = 1.0 - gini_coefficient(c);
    FmsStatus::Ok
}
