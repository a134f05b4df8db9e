//! C ABI for the segmentation engine: opaque model handles, status codes,
//! and a buffer-based predict call, so other languages can bind without
//! touching Rust types. The header is generated into `include/rdseg.h`.
//!
//! Handles are not thread-safe; use one handle per thread.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::path::Path;
use std::ptr;

use rdseg::config::RunConfig;
use rdseg::model::{checkpoint, Model};
use rdseg::ops::{argmax_classes, BnMode};
use rdseg::tape::Tape;
use rdseg::tensor::Tensor;

/// Opaque handle to a loaded model, frozen for inference.
pub struct RdsegModel {
    model: Model<f32>,
}

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RdsegStatus {
    /// Success.
    RdsegOk = 0,
    /// A pointer or argument was null, malformed, or inconsistent.
    RdsegInvalidArgument = 1,
    /// A file could not be read.
    RdsegIoError = 2,
    /// A config or checkpoint file failed to parse or match the model.
    RdsegFormatError = 3,
    /// The forward pass failed.
    RdsegInferenceError = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(status: RdsegStatus, message: &str) -> RdsegStatus {
    set_error(message);
    status
}

/// Message describing the most recent failure on this thread. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rdseg_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn rdseg_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

unsafe fn cstr_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, RdsegStatus> {
    if ptr.is_null() {
        set_error(&format!("{what} is null"));
        return Err(RdsegStatus::RdsegInvalidArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(&format!("{what} is not valid UTF-8"));
        RdsegStatus::RdsegInvalidArgument
    })
}

/// Load a model from a run-config TOML and a checkpoint file.
///
/// On success writes a handle to `out_model` (free with
/// [`rdseg_model_free`]) and returns `RdsegOk`.
///
/// # Safety
/// `config_path` and `checkpoint_path` must be NUL-terminated strings and
/// `out_model` a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn rdseg_model_load(
    config_path: *const c_char,
    checkpoint_path: *const c_char,
    out_model: *mut *mut RdsegModel,
) -> RdsegStatus {
    if out_model.is_null() {
        return fail(RdsegStatus::RdsegInvalidArgument, "out_model is null");
    }
    *out_model = ptr::null_mut();
    let config_path = match cstr_arg(config_path, "config_path") {
        Ok(s) => s,
        Err(status) => return status,
    };
    let checkpoint_path = match cstr_arg(checkpoint_path, "checkpoint_path") {
        Ok(s) => s,
        Err(status) => return status,
    };

    let cfg = match RunConfig::from_path(Path::new(config_path)) {
        Ok(cfg) => cfg,
        Err(e) => return fail(status_of(&e), &e.to_string()),
    };
    let mut model = match Model::<f32>::new(cfg.model.clone(), cfg.seed) {
        Ok(m) => m,
        Err(e) => return fail(RdsegStatus::RdsegFormatError, &e.to_string()),
    };
    if let Err(e) = checkpoint::load(&model, Path::new(checkpoint_path), true) {
        return fail(status_of(&e), &e.to_string());
    }
    model.set_bn_mode(BnMode::Frozen);
    *out_model = Box::into_raw(Box::new(RdsegModel { model }));
    RdsegStatus::RdsegOk
}

fn status_of(e: &rdseg::Error) -> RdsegStatus {
    match e {
        rdseg::Error::Io { .. } | rdseg::Error::Image { .. } => RdsegStatus::RdsegIoError,
        rdseg::Error::Checkpoint(_) | rdseg::Error::Config(_) => RdsegStatus::RdsegFormatError,
        rdseg::Error::Value(_) | rdseg::Error::Shape(_) | rdseg::Error::Data(_) => {
            RdsegStatus::RdsegInvalidArgument
        }
        _ => RdsegStatus::RdsegInferenceError,
    }
}

/// Release a handle returned by [`rdseg_model_load`]. Null is a no-op.
///
/// # Safety
/// `model` must be a handle from [`rdseg_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rdseg_model_free(model: *mut RdsegModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of output classes, or -1 for a null handle.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rdseg_model_num_classes(model: *const RdsegModel) -> i32 {
    match model.as_ref() {
        Some(m) => m.model.config.num_classes as i32,
        None => -1,
    }
}

/// 1 when the model has a depth branch (predict then requires a depth
/// buffer), 0 when RGB-only, -1 for a null handle.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rdseg_model_requires_depth(model: *const RdsegModel) -> i32 {
    match model.as_ref() {
        Some(m) => m.model.config.has_depth() as i32,
        None => -1,
    }
}

/// Segment one image.
///
/// `rgb` is interleaved 8-bit RGB, row-major, `height*width*3` bytes.
/// `depth`, when required by the model, is 16-bit row-major with 65535 = 1.0
/// (pass null for RGB-only models). `out_labels` receives `height*width`
/// class ids.
///
/// # Safety
/// Buffers must be valid for the stated extents; `model` must be a live
/// handle. The handle must not be used from two threads at once.
#[no_mangle]
pub unsafe extern "C" fn rdseg_predict(
    model: *const RdsegModel,
    rgb: *const u8,
    depth: *const u16,
    height: u32,
    width: u32,
    out_labels: *mut u8,
) -> RdsegStatus {
    let Some(handle) = model.as_ref() else {
        return fail(RdsegStatus::RdsegInvalidArgument, "model handle is null");
    };
    if rgb.is_null() || out_labels.is_null() {
        return fail(RdsegStatus::RdsegInvalidArgument, "rgb/out_labels is null");
    }
    if height == 0 || width == 0 {
        return fail(RdsegStatus::RdsegInvalidArgument, "image extents must be nonzero");
    }
    let (h, w) = (height as usize, width as usize);
    let needs_depth = handle.model.config.has_depth();
    if needs_depth && depth.is_null() {
        return fail(
            RdsegStatus::RdsegInvalidArgument,
            "this model has a depth branch: a depth buffer is required",
        );
    }
    if !needs_depth && !depth.is_null() {
        return fail(RdsegStatus::RdsegInvalidArgument, "model has no depth branch");
    }

    let rgb_slice = std::slice::from_raw_parts(rgb, h * w * 3);
    let mut planar = vec![0.0f32; 3 * h * w];
    for p in 0..h * w {
        for c in 0..3 {
            planar[c * h * w + p] = rgb_slice[p * 3 + c] as f32 / 255.0;
        }
    }
    let rgb_t = match Tensor::from_vec(planar, &[1, 3, h, w]) {
        Ok(t) => t,
        Err(e) => return fail(RdsegStatus::RdsegInvalidArgument, &e.to_string()),
    };
    let depth_t = if needs_depth {
        let d = std::slice::from_raw_parts(depth, h * w);
        let plane: Vec<f32> = d.iter().map(|&v| v as f32 / 65535.0).collect();
        match Tensor::from_vec(plane, &[1, 1, h, w]) {
            Ok(t) => Some(t),
            Err(e) => return fail(RdsegStatus::RdsegInvalidArgument, &e.to_string()),
        }
    } else {
        None
    };

    let mut tape = Tape::paused();
    let logits = match handle.model.forward(&mut tape, Some(&rgb_t), depth_t.as_ref()) {
        Ok(l) => l,
        Err(e) => return fail(status_of(&e), &e.to_string()),
    };
    let pred = match argmax_classes(&logits) {
        Ok(p) => p,
        Err(e) => return fail(RdsegStatus::RdsegInferenceError, &e.to_string()),
    };
    std::slice::from_raw_parts_mut(out_labels, h * w).copy_from_slice(&pred.ids);
    RdsegStatus::RdsegOk
}
