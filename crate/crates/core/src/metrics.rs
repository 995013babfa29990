//! Image fidelity metrics (PSNR, SSIM, region-masked PSNR) and log-amplitude
//! spectrum visualization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::mask::Mask;
use crate::tensor::Tensor;

/// PSNR reported for a zero mean squared error.
pub const PSNR_CAP_DB: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
/// Non-DC log-amplitude spread below which a spectrum counts as flat.
const FLAT_SPECTRUM_TOL: f64 = 1e-9;
const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    Glare,
    Streak,
    LightSource,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionMask {
    pub kind: RegionKind,
    pub mask: Mask,
}

fn check_pair(pred: &Tensor, target: &Tensor) -> Result<(usize, usize, usize)> {
    if pred.shape() != target.shape() {
        return Err(Error::validation(format!(
            "prediction {:?} and target {:?} differ in shape",
            pred.shape(),
            target.shape()
        )));
    }
    if pred.shape().len() != 3 {
        return Err(Error::validation(format!("expected a C×H×W image, got {:?}", pred.shape())));
    }
    Ok(pred.dims3())
}

/// `10·log₁₀(1/mse)` for unit peak, capped at [`PSNR_CAP_DB`].
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
    }
}

pub fn psnr(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check_pair(pred, target)?;
    let se: f64 = pred.data().iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(psnr_from_mse(se / pred.len() as f64))
}

/// PSNR with the squared error averaged over mask-positive pixels of every
/// channel. `None` when the mask is empty.
pub fn masked_psnr(pred: &Tensor, target: &Tensor, mask: &Mask) -> Result<Option<f64>> {
    let (c, h, w) = check_pair(pred, target)?;
    if (mask.height(), mask.width()) != (h, w) {
        return Err(Error::validation(format!(
            "mask is {}×{}, image is {h}×{w}",
            mask.height(),
            mask.width()
        )));
    }
    let n = mask.count();
    if n == 0 {
        return Ok(None);
    }
    let (p, t) = (pred.data(), target.data());
    let mut se = 0.0;
    for ch in 0..c {
        for (i, _) in mask.bits().iter().enumerate().filter(|(_, &b)| b) {
            let d = p[ch * h * w + i] - t[ch * h * w + i];
            se += d * d;
        }
    }
    Ok(Some(psnr_from_mse(se / (n * c) as f64)))
}

fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut taps = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - r;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = taps.iter().sum();
    taps.map(|t| t / s)
}

/// Separable Gaussian filtering keeping only fully-covered positions.
fn filter_valid(x: &[f64], h: usize, w: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x0 in 0..ow {
            rows[y * ow + x0] = taps.iter().enumerate().map(|(k, t)| t * x[y * w + x0 + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y0 in 0..oh {
        for x0 in 0..ow {
            out[y0 * ow + x0] = taps.iter().enumerate().map(|(k, t)| t * rows[(y0 + k) * ow + x0]).sum();
        }
    }
    out
}

/// Single-scale SSIM with an 11×11 Gaussian window (σ = 1.5), unit data
/// range, averaged over valid window positions and then over channels.
pub fn ssim(pred: &Tensor, target: &Tensor) -> Result<f64> {
    let (c, h, w) = check_pair(pred, target)?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::validation(format!(
            "SSIM needs at least {SSIM_WINDOW}×{SSIM_WINDOW} pixels, got {h}×{w}"
        )));
    }
    let taps = gaussian_taps();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    for ch in 0..c {
        let (a, b) = (pred.channel(ch), target.channel(ch));
        let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
        let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
        let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
        let mu_a = filter_valid(a, h, w, &taps);
        let mu_b = filter_valid(b, h, w, &taps);
        let e_aa = filter_valid(&aa, h, w, &taps);
        let e_bb = filter_valid(&bb, h, w, &taps);
        let e_ab = filter_valid(&ab, h, w, &taps);
        let mut acc = 0.0;
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += acc / mu_a.len() as f64;
    }
    Ok(total / c as f64)
}

/// Rec. 601 luma of a 3-channel image; single-channel input is returned as is.
pub fn luminance(image: &Tensor) -> Result<Vec<f64>> {
    if image.shape().len() != 3 {
        return Err(Error::validation(format!("expected a C×H×W image, got {:?}", image.shape())));
    }
    let (c, h, w) = image.dims3();
    match c {
        1 => Ok(image.channel(0).to_vec()),
        3 => Ok((0..h * w)
            .map(|i| (0..3).map(|ch| LUMA[ch] * image.channel(ch)[i]).sum())
            .collect()),
        _ => Err(Error::validation(format!("luminance needs 1 or 3 channels, got {c}"))),
    }
}

/// `log(1+|F|)` of the luminance spectrum, shifted so DC sits at
/// `(H/2, W/2)`, as a 1×H×W image in `[0, 1]`.
///
/// The min-max range is taken over the non-DC bins and the DC pixel is
/// clamped into it, so adding a constant to the image changes only the DC
/// pixel. If the non-DC bins are flat (up to rounding) the output is a single unit DC pixel.
pub fn spectrum_image(image: &Tensor) -> Result<Tensor> {
    let (_, h, w) = image.dims3();
    let y = luminance(image)?;
    let spec = fft::forward_full(&y, h, w);
    let mut out = vec![0.0; h * w];
    for (i, z) in spec.iter().enumerate() {
        let (r, c) = (i / w, i % w);
        out[((r + h / 2) % h) * w + (c + w / 2) % w] = z.norm().ln_1p();
    }
    let dc = (h / 2) * w + w / 2;
    let (lo, hi) = out
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != dc)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, &v)| (lo.min(v), hi.max(v)));
    if !(hi - lo > FLAT_SPECTRUM_TOL) {
        out.iter_mut().for_each(|v| *v = 0.0);
        out[dc] = 1.0;
    } else {
        for v in &mut out {
            *v = ((*v - lo) / (hi - lo)).clamp(0.0, 1.0);
        }
    }
    Ok(Tensor::from_vec(&[1, h, w], out))
}
