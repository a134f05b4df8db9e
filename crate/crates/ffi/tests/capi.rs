//! Exercise the C surface exactly as a foreign caller would: paths in,
//! status codes and raw buffers out.

use std::ffi::{CStr, CString};
use std::ptr;

use rdseg::config::RunConfig;
use rdseg::model::{checkpoint, BranchMode, Model, ModelConfig};
use rdseg_ffi::*;

fn micro_config(branches: BranchMode) -> ModelConfig {
    ModelConfig {
        block_depths: [1, 1, 1, 1],
        width_multiplier: 1.0 / 16.0,
        num_classes: 4,
        branches,
        ..ModelConfig::toy(4)
    }
}

/// Write a config + matching random-weights checkpoint, return their paths.
fn fixture(dir: &std::path::Path, branches: BranchMode) -> (CString, CString) {
    let mut cfg = RunConfig::default();
    cfg.seed = 5;
    cfg.model = micro_config(branches);
    let config_path = dir.join("run.toml");
    std::fs::write(&config_path, toml::to_string(&cfg).unwrap()).unwrap();

    let model = Model::<f32>::new(cfg.model.clone(), cfg.seed).unwrap();
    let ckpt_path = dir.join("model.sgck");
    checkpoint::save(&model, &ckpt_path).unwrap();
    (
        CString::new(config_path.to_str().unwrap()).unwrap(),
        CString::new(ckpt_path.to_str().unwrap()).unwrap(),
    )
}

#[test]
fn load_predict_free_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (config, ckpt) = fixture(dir.path(), BranchMode::RgbD);

    let mut handle: *mut RdsegModel = ptr::null_mut();
    let status = unsafe { rdseg_model_load(config.as_ptr(), ckpt.as_ptr(), &mut handle) };
    assert_eq!(status, RdsegStatus::RdsegOk, "{:?}", last_error());
    assert!(!handle.is_null());
    assert_eq!(unsafe { rdseg_model_num_classes(handle) }, 4);
    assert_eq!(unsafe { rdseg_model_requires_depth(handle) }, 1);

    let (h, w) = (32u32, 40u32);
    let rgb: Vec<u8> = (0..h * w * 3).map(|i| (i % 251) as u8).collect();
    let depth: Vec<u16> = (0..h * w).map(|i| (i * 97 % 65535) as u16).collect();
    let mut labels = vec![255u8; (h * w) as usize];
    let status = unsafe {
        rdseg_predict(handle, rgb.as_ptr(), depth.as_ptr(), h, w, labels.as_mut_ptr())
    };
    assert_eq!(status, RdsegStatus::RdsegOk, "{:?}", last_error());
    assert!(labels.iter().all(|&id| id < 4));

    // determinism across calls
    let mut labels2 = vec![0u8; (h * w) as usize];
    unsafe { rdseg_predict(handle, rgb.as_ptr(), depth.as_ptr(), h, w, labels2.as_mut_ptr()) };
    assert_eq!(labels, labels2);

    unsafe { rdseg_model_free(handle) };
}

#[test]
fn rgb_only_model_rejects_depth_buffer() {
    let dir = tempfile::tempdir().unwrap();
    let (config, ckpt) = fixture(dir.path(), BranchMode::RgbOnly);
    let mut handle: *mut RdsegModel = ptr::null_mut();
    let status = unsafe { rdseg_model_load(config.as_ptr(), ckpt.as_ptr(), &mut handle) };
    assert_eq!(status, RdsegStatus::RdsegOk, "{:?}", last_error());
    assert_eq!(unsafe { rdseg_model_requires_depth(handle) }, 0);

    let (h, w) = (16u32, 16u32);
    let rgb = vec![128u8; (h * w * 3) as usize];
    let depth = vec![0u16; (h * w) as usize];
    let mut labels = vec![0u8; (h * w) as usize];
    let status = unsafe {
        rdseg_predict(handle, rgb.as_ptr(), depth.as_ptr(), h, w, labels.as_mut_ptr())
    };
    assert_eq!(status, RdsegStatus::RdsegInvalidArgument);

    let status =
        unsafe { rdseg_predict(handle, rgb.as_ptr(), ptr::null(), h, w, labels.as_mut_ptr()) };
    assert_eq!(status, RdsegStatus::RdsegOk, "{:?}", last_error());
    unsafe { rdseg_model_free(handle) };
}

#[test]
fn missing_depth_buffer_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let (config, ckpt) = fixture(dir.path(), BranchMode::RgbD);
    let mut handle: *mut RdsegModel = ptr::null_mut();
    unsafe { rdseg_model_load(config.as_ptr(), ckpt.as_ptr(), &mut handle) };
    let rgb = vec![0u8; 16 * 16 * 3];
    let mut labels = vec![0u8; 16 * 16];
    let status =
        unsafe { rdseg_predict(handle, rgb.as_ptr(), ptr::null(), 16, 16, labels.as_mut_ptr()) };
    assert_eq!(status, RdsegStatus::RdsegInvalidArgument);
    assert!(last_error().contains("depth"));
    unsafe { rdseg_model_free(handle) };
}

#[test]
fn bad_paths_and_null_arguments() {
    let mut handle: *mut RdsegModel = ptr::null_mut();
    let missing = CString::new("/nonexistent/config.toml").unwrap();
    let ckpt = CString::new("/nonexistent/model.sgck").unwrap();
    let status = unsafe { rdseg_model_load(missing.as_ptr(), ckpt.as_ptr(), &mut handle) };
    assert_ne!(status, RdsegStatus::RdsegOk);
    assert!(handle.is_null());
    assert!(!last_error().is_empty());

    let status = unsafe { rdseg_model_load(ptr::null(), ckpt.as_ptr(), &mut handle) };
    assert_eq!(status, RdsegStatus::RdsegInvalidArgument);
    assert_eq!(unsafe { rdseg_model_num_classes(ptr::null()) }, -1);
    unsafe { rdseg_model_free(ptr::null_mut()) };

    assert!(!unsafe { CStr::from_ptr(rdseg_version()) }.to_str().unwrap().is_empty());
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(rdseg_last_error()) }.to_string_lossy().into_owned()
}
