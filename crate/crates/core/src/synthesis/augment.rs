//! Random photometric and geometric augmentation of flare assets and
//! background images.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::FlareAsset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const GAMMA_RANGE: (f64, f64) = (1.8, 2.2);
pub const ROTATION_RANGE: (f64, f64) = (0.0, 2.0 * PI);
/// Pixels at [`REFERENCE_SIZE`]; rescaled proportionally for other sizes.
pub const TRANSLATION_RANGE: (f64, f64) = (-300.0, 300.0);
pub const SHEAR_RANGE: (f64, f64) = (-PI / 9.0, PI / 9.0);
pub const SCALE_RANGE: (f64, f64) = (0.8, 1.5);
/// Gaussian σ in pixels at [`REFERENCE_SIZE`].
pub const BLUR_RANGE: (f64, f64) = (0.1, 3.0);
pub const COLOR_SHIFT_RANGE: (f64, f64) = (-0.02, 0.02);
pub const BG_SCALE_RANGE: (f64, f64) = (0.5, 1.2);
pub const NOISE_SCALE: f64 = 0.01;
pub const NOISE_DOF: f64 = 1.0;
pub const REFERENCE_SIZE: f64 = 512.0;

/// One draw of every augmentation parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub gamma: f64,
    pub rotation: f64,
    /// `(dx, dy)` at 512-pixel scale.
    pub translation: [f64; 2],
    pub shear: f64,
    pub scale: f64,
    /// Gaussian σ at 512-pixel scale; zero disables blurring.
    pub blur_sigma: f64,
    pub flip: bool,
    pub color_shift: [f64; 3],
    pub bg_rgb_scale: [f64; 3],
    pub noise_var: f64,
}

fn within((lo, hi): (f64, f64), v: f64) -> bool {
    v >= lo && v <= hi
}

impl AugmentParams {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let u = |rng: &mut R, (lo, hi): (f64, f64)| rng.gen_range(lo..hi);
        let gamma = u(rng, GAMMA_RANGE);
        let rotation = u(rng, ROTATION_RANGE);
        let translation = [u(rng, TRANSLATION_RANGE), u(rng, TRANSLATION_RANGE)];
        let shear = u(rng, SHEAR_RANGE);
        let scale = u(rng, SCALE_RANGE);
        let blur_sigma = u(rng, BLUR_RANGE);
        let flip = rng.gen_bool(0.5);
        let color_shift = [
            u(rng, COLOR_SHIFT_RANGE),
            u(rng, COLOR_SHIFT_RANGE),
            u(rng, COLOR_SHIFT_RANGE),
        ];
        let bg_rgb_scale = [
            u(rng, BG_SCALE_RANGE),
            u(rng, BG_SCALE_RANGE),
            u(rng, BG_SCALE_RANGE),
        ];
        let chi = ChiSquared::new(NOISE_DOF).expect("positive degrees of freedom");
        let noise_var = NOISE_SCALE * chi.sample(rng);
        AugmentParams {
            gamma,
            rotation,
            translation,
            shear,
            scale,
            blur_sigma,
            flip,
            color_shift,
            bg_rgb_scale,
            noise_var,
        }
    }

    /// Parameters under which both augmentations are the identity.
    pub fn identity() -> Self {
        AugmentParams {
            gamma: 2.0,
            rotation: 0.0,
            translation: [0.0, 0.0],
            shear: 0.0,
            scale: 1.0,
            blur_sigma: 0.0,
            flip: false,
            color_shift: [0.0; 3],
            bg_rgb_scale: [1.0; 3],
            noise_var: 0.0,
        }
    }

    /// True when every sampled field lies in its sampling interval.
    pub fn in_range(&self) -> bool {
        within(GAMMA_RANGE, self.gamma)
            && within(ROTATION_RANGE, self.rotation)
            && self.translation.iter().all(|&t| within(TRANSLATION_RANGE, t))
            && within(SHEAR_RANGE, self.shear)
            && within(SCALE_RANGE, self.scale)
            && within(BLUR_RANGE, self.blur_sigma)
            && self.color_shift.iter().all(|&c| within(COLOR_SHIFT_RANGE, c))
            && self.bg_rgb_scale.iter().all(|&s| within(BG_SCALE_RANGE, s))
            && self.noise_var >= 0.0
            && self.noise_var.is_finite()
    }
}

/// Output-to-output map `p ↦ c + A·(p − c) + t` about the pixel-grid center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineTransform {
    pub a: [[f64; 2]; 2],
    pub t: [f64; 2],
    pub center: [f64; 2],
}

impl AffineTransform {
    /// `rotation · shear · scale · flip` with translation rescaled to an
    /// `height × width` canvas.
    pub fn from_params(p: &AugmentParams, height: usize, width: usize) -> Self {
        let (s, c) = p.rotation.sin_cos();
        let rot = [[c, -s], [s, c]];
        let sh = [[1.0, p.shear.tan()], [0.0, 1.0]];
        let f = if p.flip { -1.0 } else { 1.0 };
        let rs = mul2(rot, sh);
        let a = [
            [rs[0][0] * p.scale * f, rs[0][1] * p.scale],
            [rs[1][0] * p.scale * f, rs[1][1] * p.scale],
        ];
        AffineTransform {
            a,
            t: [
                p.translation[0] * width as f64 / REFERENCE_SIZE,
                p.translation[1] * height as f64 / REFERENCE_SIZE,
            ],
            center: [(width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0],
        }
    }

    /// Image of the point `(x, y)`.
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        (
            self.center[0] + self.a[0][0] * dx + self.a[0][1] * dy + self.t[0],
            self.center[1] + self.a[1][0] * dx + self.a[1][1] * dy + self.t[1],
        )
    }

    /// Preimage of `(x, y)`; `None` for a singular matrix.
    pub fn invert(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let [[a, b], [c, d]] = self.a;
        let det = a * d - b * c;
        if det == 0.0 {
            return None;
        }
        let (u, v) = (x - self.center[0] - self.t[0], y - self.center[1] - self.t[1]);
        Some((
            self.center[0] + (d * u - b * v) / det,
            self.center[1] + (-c * u + a * v) / det,
        ))
    }
}

fn mul2(x: [[f64; 2]; 2], y: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [
        [x[0][0] * y[0][0] + x[0][1] * y[1][0], x[0][0] * y[0][1] + x[0][1] * y[1][1]],
        [x[1][0] * y[0][0] + x[1][1] * y[1][0], x[1][0] * y[0][1] + x[1][1] * y[1][1]],
    ]
}

/// Bilinear inverse warp of a C×H×W image; samples outside the source are zero.
pub fn warp(image: &Tensor, tf: &AffineTransform) -> Tensor {
    let (c, h, w) = image.dims3();
    let mut out = Tensor::zeros(&[c, h, w]);
    for y in 0..h {
        for x in 0..w {
            let Some((sx, sy)) = tf.invert(x as f64, y as f64) else {
                continue;
            };
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let taps = [
                (x0, y0, (1.0 - fx) * (1.0 - fy)),
                (x0 + 1.0, y0, fx * (1.0 - fy)),
                (x0, y0 + 1.0, (1.0 - fx) * fy),
                (x0 + 1.0, y0 + 1.0, fx * fy),
            ];
            for ch in 0..c {
                let src = image.channel(ch);
                let mut v = 0.0;
                for &(tx, ty, wgt) in &taps {
                    if wgt == 0.0 || tx < 0.0 || ty < 0.0 || tx >= w as f64 || ty >= h as f64 {
                        continue;
                    }
                    v += wgt * src[ty as usize * w + tx as usize];
                }
                out.channel_mut(ch)[y * w + x] = v;
            }
        }
    }
    out
}

/// Separable Gaussian blur with edge replication; `sigma <= 0` is the identity.
pub fn gaussian_blur(image: &Tensor, sigma: f64) -> Tensor {
    if !(sigma > 0.0) {
        return image.clone();
    }
    let (c, h, w) = image.dims3();
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r).map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    let clampi = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut out = Tensor::zeros(&[c, h, w]);
    let mut tmp = vec![0.0; h * w];
    for ch in 0..c {
        let src = image.channel(ch);
        for y in 0..h {
            for x in 0..w {
                tmp[y * w + x] = k
                    .iter()
                    .enumerate()
                    .map(|(j, kv)| kv * src[y * w + clampi(x as isize + j as isize - r, w)])
                    .sum();
            }
        }
        let dst = out.channel_mut(ch);
        for y in 0..h {
            for x in 0..w {
                dst[y * w + x] = k
                    .iter()
                    .enumerate()
                    .map(|(j, kv)| kv * tmp[clampi(y as isize + j as isize - r, h) * w + x])
                    .sum();
            }
        }
    }
    out
}

/// Applies one shared affine warp and blur to the flare and light-source
/// layers, then adds the color shift to the flare (clipped to `[0, 1]`).
/// Translation and blur width are scaled from 512 pixels to the canvas.
pub fn augment_flare(asset: &FlareAsset, p: &AugmentParams) -> Result<FlareAsset> {
    asset.validate()?;
    let (_, h, w) = asset.flare.dims3();
    let tf = AffineTransform::from_params(p, h, w);
    let sigma = p.blur_sigma * h.min(w) as f64 / REFERENCE_SIZE;
    let light = gaussian_blur(&warp(&asset.light_source, &tf), sigma).clamp(0.0, 1.0);
    let mut flare = gaussian_blur(&warp(&asset.flare, &tf), sigma);
    for ch in 0..3 {
        let shift = p.color_shift[ch];
        flare.channel_mut(ch).iter_mut().for_each(|v| *v = (*v + shift).clamp(0.0, 1.0));
    }
    Ok(FlareAsset {
        flare,
        light_source: light,
        kind: asset.kind,
    })
}

/// Per-channel scaling plus zero-mean Gaussian noise of variance
/// `p.noise_var`, clipped to `[0, 1]`.
pub fn augment_background(image: &Tensor, p: &AugmentParams, seed: u64) -> Result<Tensor> {
    if image.shape().len() != 3 || image.shape()[0] != 3 {
        return Err(Error::validation(format!("background must be 3×H×W, got {:?}", image.shape())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = p.noise_var.max(0.0).sqrt();
    let normal = Normal::new(0.0, std).map_err(|e| Error::validation(e.to_string()))?;
    let mut out = image.clone();
    for ch in 0..3 {
        let k = p.bg_rgb_scale[ch];
        for v in out.channel_mut(ch) {
            let n = if std > 0.0 { normal.sample(&mut rng) } else { 0.0 };
            *v = (*v * k + n).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::FlareKind;

    fn pattern(h: usize, w: usize) -> Tensor {
        Tensor::from_fn(&[3, h, w], |i| {
            let (c, y, x) = (i / (h * w), (i / w) % h, i % w);
            (((x * 7 + y * 3 + c * 5) % 11) as f64) / 10.0
        })
    }

    #[test]
    fn samples_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..2000 {
            assert!(AugmentParams::sample(&mut rng).in_range());
        }
    }

    #[test]
    fn identity_params_leave_asset_unchanged() {
        let asset = FlareAsset {
            flare: pattern(12, 16),
            light_source: pattern(12, 16).map(|v| 1.0 - v),
            kind: FlareKind::Scattering,
        };
        let out = augment_flare(&asset, &AugmentParams::identity()).unwrap();
        assert!(out.flare.max_abs_diff(&asset.flare) < 1e-6);
        assert!(out.light_source.max_abs_diff(&asset.light_source) < 1e-6);
    }

    #[test]
    fn double_half_turn_restores_orientation() {
        let img = pattern(16, 20);
        let p = AugmentParams {
            rotation: PI,
            ..AugmentParams::identity()
        };
        let tf = AffineTransform::from_params(&p, 16, 20);
        let twice = warp(&warp(&img, &tf), &tf);
        let mae = twice.zip_map(&img, |a, b| (a - b).abs()).mean();
        assert!(mae < 2e-2, "mae {mae}");
    }

    #[test]
    fn transform_round_trips_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = AugmentParams::sample(&mut rng);
        let tf = AffineTransform::from_params(&p, 64, 48);
        for &(x, y) in &[(0.0, 0.0), (10.5, 3.25), (47.0, 63.0)] {
            let (u, v) = tf.apply(x, y);
            let (bx, by) = tf.invert(u, v).unwrap();
            assert!((bx - x).abs() < 1e-9 && (by - y).abs() < 1e-9);
        }
    }

    #[test]
    fn background_examples() {
        let img = Tensor::full(&[3, 8, 8], 0.8);
        assert_eq!(augment_background(&img, &AugmentParams::identity(), 1).unwrap(), img);
        let half = AugmentParams {
            bg_rgb_scale: [0.5; 3],
            ..AugmentParams::identity()
        };
        let out = augment_background(&img, &half, 1).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.4).abs() < 1e-12));
    }

    #[test]
    fn noise_variance_matches_request() {
        let img = Tensor::full(&[3, 578, 577], 0.5);
        let p = AugmentParams {
            noise_var: 0.002,
            ..AugmentParams::identity()
        };
        let out = augment_background(&img, &p, 9).unwrap();
        let n = out.len() as f64;
        let mean = out.mean();
        let var = out.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        assert!((var / 0.002 - 1.0).abs() < 0.05, "var {var}");
    }
}
