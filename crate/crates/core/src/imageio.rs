//! 8-bit PNG reading and writing for tensors and masks.

use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::tensor::Tensor;

fn image_err(path: &Path, source: image::ImageError) -> Error {
    match source {
        image::ImageError::IoError(e) => Error::io(path, e),
        source => Error::Image {
            path: path.to_path_buf(),
            source,
        },
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Reads any supported image as a 3×H×W tensor in `[0, 1]`.
pub fn load_rgb(path: &Path) -> Result<Tensor> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut t = Tensor::zeros(&[3, h, w]);
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            t.channel_mut(c)[y as usize * w + x as usize] = px[c] as f64 / 255.0;
        }
    }
    Ok(t)
}

pub fn to_rgb8(image: &Tensor) -> RgbImage {
    let (c, h, w) = image.dims3();
    assert!(c == 3 || c == 1, "expected 1 or 3 channels, got {c}");
    ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let i = y as usize * w + x as usize;
        let at = |ch: usize| quantize(image.channel(ch.min(c - 1))[i]);
        Rgb([at(0), at(1), at(2)])
    })
}

pub fn save_rgb(path: &Path, image: &Tensor) -> Result<()> {
    to_rgb8(image).save(path).map_err(|e| image_err(path, e))
}

/// Writes the first channel as 8-bit grayscale.
pub fn save_gray(path: &Path, image: &Tensor) -> Result<()> {
    let (_, h, w) = image.dims3();
    let img: GrayImage = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        Luma([quantize(image.channel(0)[y as usize * w + x as usize])])
    });
    img.save(path).map_err(|e| image_err(path, e))
}

/// Mask pixels are stored as 0 or 255.
pub fn save_mask(path: &Path, mask: &Mask) -> Result<()> {
    let w = mask.width();
    let img: GrayImage = ImageBuffer::from_fn(w as u32, mask.height() as u32, |x, y| {
        Luma([if mask.get(y as usize, x as usize) { 255 } else { 0 }])
    });
    img.save(path).map_err(|e| image_err(path, e))
}

/// Pixels brighter than mid-gray are set.
pub fn load_mask(path: &Path) -> Result<Mask> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Mask::from_bits(h, w, img.pixels().map(|p| p[0] > 127).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgb_and_mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let t = Tensor::from_fn(&[3, 5, 7], |i| (i % 256) as f64 / 255.0);
        let p = dir.path().join("a.png");
        save_rgb(&p, &t).unwrap();
        assert!(load_rgb(&p).unwrap().max_abs_diff(&t) < 1e-12);
        let m = Mask::from_fn(5, 7, |y, x| (x + y) % 3 == 0);
        let q = dir.path().join("m.png");
        save_mask(&q, &m).unwrap();
        assert_eq!(load_mask(&q).unwrap(), m);
        assert!(matches!(load_rgb(&dir.path().join("missing.png")), Err(Error::Io { .. })));
    }
}
