use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use dfdnet::train::Trainer;
use dfdnet::{Tensor, TrainConfig};
use dfdnet_ffi::*;

fn last_error() -> String {
    let p = dfdnet_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

fn write_checkpoint(dir: &Path) -> PathBuf {
    let cfg = TrainConfig {
        crop: 16,
        base_channels: 4,
        proj_dim: 4,
        ..TrainConfig::default()
    };
    let path = dir.join("model.ckpt");
    Trainer::new(&cfg).unwrap().checkpoint().save(&path).unwrap();
    path
}

#[test]
fn model_handle_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_checkpoint(dir.path());
    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { dfdnet_model_load(c_path.as_ptr(), &mut model) }, DfdnetStatus::Ok);
    assert!(!model.is_null());

    let (h, w) = (12, 20);
    let image = Tensor::from_fn(&[3, h, w], |i| (i % 9) as f64 / 8.0);
    let mut restored = vec![0.0; 3 * h * w];
    let mut flare = vec![0.0; 3 * h * w];
    let status =
        unsafe { dfdnet_model_restore(model, image.data().as_ptr(), h, w, restored.as_mut_ptr(), flare.as_mut_ptr()) };
    assert_eq!(status, DfdnetStatus::Ok);

    let lib = dfdnet::Checkpoint::load(&path).unwrap().model().unwrap();
    let want = lib.restore(&image).unwrap();
    assert_eq!(restored, want.restored.data());
    assert_eq!(flare, want.flare.data());
    assert_eq!(unsafe { dfdnet_model_param_count(model) }, lib.param_count());
    unsafe { dfdnet_model_free(model) };
}

#[test]
fn errors_carry_status_and_message() {
    let mut model = ptr::null_mut();
    let missing = CString::new("/definitely/not/here.ckpt").unwrap();
    assert_eq!(unsafe { dfdnet_model_load(missing.as_ptr(), &mut model) }, DfdnetStatus::Io);
    assert!(model.is_null());
    assert!(last_error().contains("not/here.ckpt"));

    assert_eq!(unsafe { dfdnet_model_load(ptr::null(), &mut model) }, DfdnetStatus::NullPointer);

    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.ckpt");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    let junk = CString::new(junk.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { dfdnet_model_load(junk.as_ptr(), &mut model) }, DfdnetStatus::Format);

    let img = [0.5; 3];
    let mut out = 0.0;
    assert_eq!(unsafe { dfdnet_psnr(img.as_ptr(), img.as_ptr(), 0, 1, &mut out) }, DfdnetStatus::InvalidArgument);
    let status = unsafe { dfdnet_psnr(img.as_ptr(), img.as_ptr(), 1, 1, &mut out) };
    assert_eq!(status, DfdnetStatus::Ok);
    assert!(dfdnet_last_error().is_null());
    assert_eq!(out, 100.0);
}

#[test]
fn metrics_through_the_boundary() {
    let (h, w) = (2, 2);
    let target = vec![0.5; 12];
    let mut pred = target.clone();
    pred[0] = 0.6;
    let full = [1u8; 4];
    let (mut a, mut b, mut ok) = (0.0, 0.0, -1);
    unsafe {
        assert_eq!(dfdnet_psnr(pred.as_ptr(), target.as_ptr(), h, w, &mut a), DfdnetStatus::Ok);
        assert_eq!(
            dfdnet_masked_psnr(pred.as_ptr(), target.as_ptr(), full.as_ptr(), h, w, &mut b, &mut ok),
            DfdnetStatus::Ok
        );
    }
    assert_eq!(ok, 1);
    assert!((a - b).abs() < 1e-9);
    let want = 10.0 * (12.0f64 / 0.01).log10();
    assert!((a - want).abs() < 1e-9, "{a} vs {want}");

    let empty = [0u8; 4];
    b = -7.0;
    let status = unsafe { dfdnet_masked_psnr(pred.as_ptr(), target.as_ptr(), empty.as_ptr(), h, w, &mut b, &mut ok) };
    assert_eq!(status, DfdnetStatus::Ok);
    assert_eq!((ok, b), (0, -7.0));

    let mut spec = vec![0.0; 4];
    assert_eq!(unsafe { dfdnet_spectrum(target.as_ptr(), h, w, spec.as_mut_ptr()) }, DfdnetStatus::Ok);
    assert_eq!(spec.iter().filter(|&&v| v > 0.5).count(), 1);
}

#[test]
fn synthesis_is_deterministic() {
    let n = 3 * 16 * 16;
    let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
    unsafe {
        assert_eq!(dfdnet_synth_sample(4, 2, 16, a.as_mut_ptr(), ptr::null_mut(), ptr::null_mut()), DfdnetStatus::Ok);
        assert_eq!(dfdnet_synth_sample(4, 2, 16, b.as_mut_ptr(), ptr::null_mut(), ptr::null_mut()), DfdnetStatus::Ok);
    }
    assert_eq!(a, b);

    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().join("ds").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { dfdnet_synth_dataset(out.as_ptr(), 2, 4, 16) }, DfdnetStatus::Ok);
    assert_eq!(dfdnet::dataset::Dataset::open(&dir.path().join("ds")).unwrap().len(), 2);
}

/// Directory holding the built shared library (`target/<profile>`).
fn lib_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_header() {
    let lib = lib_dir();
    if !lib.join("libdfdnet_ffi.so").exists() {
        eprintln!("shared library not built in {}; skipping C link test", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "dfdnet.h"
int main(void) {
    double a[12], b[12], psnr = 0.0;
    for (int i = 0; i < 12; i++) { a[i] = 0.25; b[i] = 0.25; }
    b[3] = 0.35;
    if (dfdnet_psnr(a, b, 2, 2, &psnr) != DFDNET_STATUS_OK) return 1;
    DfdnetModel *m = NULL;
    if (dfdnet_model_load("/missing.ckpt", &m) != DFDNET_STATUS_IO || m != NULL) return 2;
    if (dfdnet_last_error() == NULL) return 3;
    printf("%.9f\n", psnr);
    return 0;
}
"#,
    )
    .unwrap();
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let exe = dir.path().join("smoke");
    let cc = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg("-L")
        .arg(&lib)
        .arg("-ldfdnet_ffi")
        .arg(format!("-Wl,-rpath,{}", lib.display()))
        .arg("-o")
        .arg(&exe)
        .status()
        .expect("run cc");
    assert!(cc.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status);
    let psnr: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    let want = 10.0 * (12.0f64 / 0.01).log10();
    assert!((psnr - want).abs() < 1e-6);
}
