//! C interface to the flare-removal library.
//!
//! Every fallible function returns a [`DfdnetStatus`]; on failure the
//! message is available from [`dfdnet_last_error`] on the same thread.
//! Images cross the boundary as planar `double` arrays of `3 * height * width`
//! values in `[0, 1]`, channel-major (all R, then all G, then all B).
//! Masks are `height * width` bytes, nonzero meaning set.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use dfdnet::dataset::{self, SceneSource};
use dfdnet::mask::Mask;
use dfdnet::{metrics, Checkpoint, Error, Model, Tensor};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DfdnetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    /// Malformed checkpoint, image, dataset or configuration.
    Format = 4,
    NonFinite = 5,
    /// A Rust panic was caught at the boundary.
    Internal = 6,
}

/// Opaque inference model.
pub struct DfdnetModel {
    model: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DfdnetStatus {
    match e {
        Error::Validation(_) => DfdnetStatus::InvalidArgument,
        Error::NonFinite(_) | Error::Diverged { .. } => DfdnetStatus::NonFinite,
        Error::Io { .. } => DfdnetStatus::Io,
        Error::Config(_) | Error::Dataset { .. } | Error::Checkpoint(_) | Error::Image { .. } | Error::Json(_) => {
            DfdnetStatus::Format
        }
    }
}

struct Fail(DfdnetStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DfdnetStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(DfdnetStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DfdnetStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DfdnetStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            DfdnetStatus::Internal
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

fn image_len(height: usize, width: usize) -> Result<usize, Fail> {
    if height == 0 || width == 0 {
        return Err(invalid(format!("image size {height}×{width} is empty")));
    }
    3usize
        .checked_mul(height)
        .and_then(|n| n.checked_mul(width))
        .ok_or_else(|| invalid("image size overflows"))
}

unsafe fn image_arg(p: *const f64, height: usize, width: usize, what: &str) -> Result<Tensor, Fail> {
    let n = image_len(height, width)?;
    if p.is_null() {
        return Err(null(what));
    }
    let data = std::slice::from_raw_parts(p, n).to_vec();
    Ok(Tensor::from_vec(&[3, height, width], data))
}

unsafe fn mask_arg(p: *const u8, height: usize, width: usize) -> Result<Mask, Fail> {
    if p.is_null() {
        return Err(null("mask"));
    }
    let bits = std::slice::from_raw_parts(p, height * width).iter().map(|&b| b != 0).collect();
    Ok(Mask::from_bits(height, width, bits)?)
}

unsafe fn write_out(dst: *mut f64, src: &[f64], what: &str) -> Result<(), Fail> {
    if dst.is_null() {
        return Err(null(what));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

unsafe fn write_scalar(dst: *mut f64, v: f64) -> Result<(), Fail> {
    if dst.is_null() {
        return Err(null("output"));
    }
    *dst = v;
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn dfdnet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a checkpoint written by `dfdnet train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dfdnet_model_load(path: *const c_char, out: *mut *mut DfdnetModel) -> DfdnetStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = path_arg(path, "path")?;
        let model = Checkpoint::load(&path)?.model()?;
        *out = Box::into_raw(Box::new(DfdnetModel { model }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`dfdnet_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dfdnet_model_free(model: *mut DfdnetModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of network parameters, or 0 for a NULL model.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dfdnet_model_param_count(model: *const DfdnetModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.param_count())
}

/// Removes flare from one image. Outputs are clamped to `[0, 1]`; any size
/// is accepted (inputs are reflect-padded internally). `flare_out` may be NULL.
///
/// # Safety
/// `image` and `restored_out` (and `flare_out` when non-NULL) must hold
/// `3 * height * width` doubles.
#[no_mangle]
pub unsafe extern "C" fn dfdnet_model_restore(
    model: *const DfdnetModel,
    image: *const f64,
    height: usize,
    width: usize,
    restored_out: *mut f64,
    flare_out: *mut f64,
) -> DfdnetStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let x = image_arg(image, height, width, "image")?;
        let r = m.model.restore(&x)?;
        write_out(restored_out, r.restored.data(), "restored_out")?;
        if !flare_out.is_null() {
            write_out(flare_out, r.flare.data(), "flare_out")?;
        }
        Ok(())
    })
}

/// PSNR in dB, capped at 100 for identical images.
///
/// # Safety
/// `pred` and `target` must hold `3 * height * width` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dfdnet_psnr(
    pred: *const f64,
    target: *const f64,
    height: usize,
    width: usize,
    out: *mut f64,
) -> DfdnetStatus {
    guard(|| {
        let p = image_arg(pred, height, width, "pred")?;
        let t = image_arg(target, height, width, "target")?;
        write_scalar(out, metrics::psnr(&p, &t)?)
    })
}

/// Mean SSIM over channels with an 11×11 Gaussian window.
///
/// # Safety
/// As for [`dfdnet_psnr`].
#[no_mangle]
pub unsafe extern "C" fn dfdnet_ssim(
    pred: *const f64,
    target: *const f64,
    height: usize,
    width: usize,
    out: *mut f64,
) -> DfdnetStatus {
    guard(|| {
        let p = image_arg(pred, height, width, "pred")?;
        let t = image_arg(target, height, width, "target")?;
        write_scalar(out, metrics::ssim(&p, &t)?)
    })
}

/// PSNR over mask pixels. For an empty mask `*applicable` is set to 0 and
/// `*out` is left untouched.
///
/// # Safety
/// As for [`dfdnet_psnr`]; `mask` must hold `height * width` bytes and
/// `applicable` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dfdnet_masked_psnr(
    pred: *const f64,
    target: *const f64,
    mask: *const u8,
    height: usize,
    width: usize,
    out: *mut f64,
    applicable: *mut i32,
) -> DfdnetStatus {
    guard(|| {
        let p = image_arg(pred, height, width, "pred")?;
        let t = image_arg(target, height, width, "target")?;
        let m = mask_arg(mask, height, width)?;
        if applicable.is_null() {
            return Err(null("applicable"));
        }
        match metrics::masked_psnr(&p, &t, &m)? {
            Some(v) => {
                write_scalar(out, v)?;
                *applicable = 1;
            }
            None => *applicable = 0,
        }
        Ok(())
    })
}

/// Centered log-amplitude spectrum of the image luminance, normalized to
/// `[0, 1]`, written as `height * width` doubles.
///
/// # Safety
/// `image` must hold `3 * height * width` doubles, `out` `height * width`.
#[no_mangle]
pub unsafe extern "C" fn dfdnet_spectrum(
    image: *const f64,
    height: usize,
    width: usize,
    out: *mut f64,
) -> DfdnetStatus {
    guard(|| {
        let x = image_arg(image, height, width, "image")?;
        write_out(out, metrics::spectrum_image(&x)?.data(), "out")
    })
}

/// Synthesizes sample `index` of the procedural dataset with `seed` at
/// `size × size`, identical to what `dfdnet synth` writes before 8-bit
/// quantization. Any output pointer may be NULL to skip it.
///
/// # Safety
/// Each non-NULL output must hold `3 * size * size` doubles.
#[no_mangle]
pub unsafe extern "C" fn dfdnet_synth_sample(
    seed: u64,
    index: usize,
    size: usize,
    input_out: *mut f64,
    reference_out: *mut f64,
    flare_out: *mut f64,
) -> DfdnetStatus {
    guard(|| {
        image_len(size, size)?;
        let (s, _) = dataset::synthesize(&SceneSource::Procedural, seed, index, size)?;
        for (dst, src) in [(input_out, &s.input), (reference_out, &s.reference), (flare_out, &s.flare)] {
            if !dst.is_null() {
                write_out(dst, src.data(), "output")?;
            }
        }
        Ok(())
    })
}

/// Writes `n` procedural samples to `out_dir` in the dataset layout.
///
/// # Safety
/// `out_dir` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dfdnet_synth_dataset(out_dir: *const c_char, n: usize, seed: u64, size: usize) -> DfdnetStatus {
    guard(|| {
        let dir = path_arg(out_dir, "out_dir")?;
        dataset::write_dataset(&dir, n, seed, size, &SceneSource::Procedural)?;
        Ok(())
    })
}
