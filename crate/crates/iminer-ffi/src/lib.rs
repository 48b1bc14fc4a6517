//! C ABI over the traffic-prediction library.
//!
//! Conventions: every fallible function returns an [`IminerStatus`]; outputs
//! go through out-pointers. Handles are opaque and must be released with the
//! matching `_free` function. On failure a thread-local message is readable
//! via [`iminer_last_error`] until the next failing call on that thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::slice;

use iminer::metrics;
use iminer::pipeline::ModelBundle;
use iminer::tsfis::{self, TsModel};

/// Result code of every fallible FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IminerStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Utf8Error = 3,
    JsonError = 4,
    NumericError = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(status: IminerStatus, message: impl Into<Vec<u8>>) -> IminerStatus {
    let message = CString::new(message).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = message);
    status
}

/// Message of the most recent failure on this thread; empty string when none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn iminer_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn iminer_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Opaque fuzzy-inference-system handle.
pub struct IminerFis {
    model: TsModel,
}

/// Opaque trained-pipeline handle (scaler + clustering + FIS).
pub struct IminerBundle {
    bundle: ModelBundle,
}

unsafe fn str_arg<'a>(ptr: *const c_char) -> Result<&'a str, IminerStatus> {
    if ptr.is_null() {
        return Err(fail(IminerStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(IminerStatus::Utf8Error, "argument is not valid UTF-8"))
}

/// Parse a FIS from its JSON form. Returns NULL on failure (see
/// `iminer_last_error`); release with `iminer_fis_free`.
///
/// # Safety
/// `json` must be a valid NUL-terminated C string.
#[no_mangle]
pub unsafe extern "C" fn iminer_fis_from_json(json: *const c_char) -> *mut IminerFis {
    let Ok(text) = str_arg(json) else {
        return std::ptr::null_mut();
    };
    let model: TsModel = match serde_json::from_str(text) {
        Ok(m) => m,
        Err(e) => {
            fail(IminerStatus::JsonError, format!("bad model JSON: {e}"));
            return std::ptr::null_mut();
        }
    };
    if let Err(e) = model.validate() {
        fail(IminerStatus::InvalidArgument, format!("invalid model: {e}"));
        return std::ptr::null_mut();
    }
    Box::into_raw(Box::new(IminerFis { model }))
}

/// Number of crisp inputs the FIS expects.
///
/// # Safety
/// `fis` must be a live handle from `iminer_fis_from_json`.
#[no_mangle]
pub unsafe extern "C" fn iminer_fis_num_inputs(fis: *const IminerFis) -> usize {
    if fis.is_null() {
        fail(IminerStatus::NullPointer, "null fis handle");
        return 0;
    }
    (*fis).model.num_inputs()
}

/// Run inference on one input vector of length `len`.
///
/// # Safety
/// `fis` must be live, `inputs` must point to `len` doubles, `out` must be
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn iminer_fis_infer(
    fis: *const IminerFis,
    inputs: *const f64,
    len: usize,
    out: *mut f64,
) -> IminerStatus {
    if fis.is_null() || inputs.is_null() || out.is_null() {
        return fail(IminerStatus::NullPointer, "null argument");
    }
    let model = &(*fis).model;
    if len != model.num_inputs() {
        return fail(
            IminerStatus::InvalidArgument,
            format!("expected {} inputs, got {len}", model.num_inputs()),
        );
    }
    let x = slice::from_raw_parts(inputs, len);
    match tsfis::infer(model, x) {
        Ok(y) => {
            *out = y;
            IminerStatus::Ok
        }
        Err(e) => fail(IminerStatus::NumericError, e.to_string()),
    }
}

/// Release a FIS handle; NULL is a no-op.
///
/// # Safety
/// `fis` must come from `iminer_fis_from_json` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn iminer_fis_free(fis: *mut IminerFis) {
    if !fis.is_null() {
        drop(Box::from_raw(fis));
    }
}

/// Parse a full trained-pipeline bundle (the CLI's model.json). Returns NULL
/// on failure; release with `iminer_bundle_free`.
///
/// # Safety
/// `json` must be a valid NUL-terminated C string.
#[no_mangle]
pub unsafe extern "C" fn iminer_bundle_from_json(json: *const c_char) -> *mut IminerBundle {
    let Ok(text) = str_arg(json) else {
        return std::ptr::null_mut();
    };
    match serde_json::from_str::<ModelBundle>(text) {
        Ok(bundle) => Box::into_raw(Box::new(IminerBundle { bundle })),
        Err(e) => {
            fail(IminerStatus::JsonError, format!("bad bundle JSON: {e}"));
            std::ptr::null_mut()
        }
    }
}

/// Rule count of the bundle's FIS.
///
/// # Safety
/// `bundle` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn iminer_bundle_num_rules(bundle: *const IminerBundle) -> usize {
    if bundle.is_null() {
        fail(IminerStatus::NullPointer, "null bundle handle");
        return 0;
    }
    (*bundle).bundle.ts_model.rules.len()
}

/// Release a bundle handle; NULL is a no-op.
///
/// # Safety
/// `bundle` must come from `iminer_bundle_from_json` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn iminer_bundle_free(bundle: *mut IminerBundle) {
    if !bundle.is_null() {
        drop(Box::from_raw(bundle));
    }
}

/// Schweizer-Sklar T-norm T_p(a, b); requires p > 0 and a, b in [0, 1].
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn iminer_tnorm_ss(a: f64, b: f64, p: f64, out: *mut f64) -> IminerStatus {
    if out.is_null() {
        return fail(IminerStatus::NullPointer, "null out pointer");
    }
    match tsfis::tnorm_ss(a, b, p) {
        Ok(v) => {
            *out = v;
            IminerStatus::Ok
        }
        Err(e) => fail(IminerStatus::InvalidArgument, e.to_string()),
    }
}

unsafe fn two_series<'a>(
    pred: *const f64,
    actual: *const f64,
    len: usize,
) -> Result<(&'a [f64], &'a [f64]), IminerStatus> {
    if pred.is_null() || actual.is_null() {
        return Err(fail(IminerStatus::NullPointer, "null series pointer"));
    }
    if len == 0 {
        return Err(fail(IminerStatus::InvalidArgument, "empty series"));
    }
    Ok((
        slice::from_raw_parts(pred, len),
        slice::from_raw_parts(actual, len),
    ))
}

/// Root-mean-square error between two equal-length series.
///
/// # Safety
/// `pred` and `actual` must point to `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn iminer_rmse(
    pred: *const f64,
    actual: *const f64,
    len: usize,
    out: *mut f64,
) -> IminerStatus {
    if out.is_null() {
        return fail(IminerStatus::NullPointer, "null out pointer");
    }
    let (p, a) = match two_series(pred, actual, len) {
        Ok(v) => v,
        Err(s) => return s,
    };
    match metrics::rmse(p, a) {
        Ok(v) => {
            *out = v;
            IminerStatus::Ok
        }
        Err(e) => fail(IminerStatus::NumericError, e.to_string()),
    }
}

/// Pearson correlation coefficient between two equal-length series.
///
/// # Safety
/// `pred` and `actual` must point to `len` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn iminer_corr_coef(
    pred: *const f64,
    actual: *const f64,
    len: usize,
    out: *mut f64,
) -> IminerStatus {
    if out.is_null() {
        return fail(IminerStatus::NullPointer, "null out pointer");
    }
    let (p, a) = match two_series(pred, actual, len) {
        Ok(v) => v,
        Err(s) => return s,
    };
    match metrics::corr_coef(p, a) {
        Ok(v) => {
            *out = v;
            IminerStatus::Ok
        }
        Err(e) => fail(IminerStatus::NumericError, e.to_string()),
    }
}
