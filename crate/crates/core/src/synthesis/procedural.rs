//! Parametric flare assets and background scenes for training without
//! external image collections.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FlareAsset, FlareKind};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Glow {
    /// Peak value, kept below 0.3 so the halo alone never reads as a streak.
    pub amplitude: f64,
    pub sigma: f64,
    pub tint: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Streak {
    pub angle: f64,
    pub amplitude: f64,
    /// Spread along the streak direction.
    pub length: f64,
    /// Spread across it.
    pub width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ring {
    pub radius: f64,
    pub width: f64,
    pub amplitude: f64,
    /// Relative radius offset between adjacent color channels.
    pub dispersion: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ghost {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub amplitude: f64,
    pub tint: [f64; 3],
}

/// Everything needed to render one flare asset, centered on the canvas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlareRecipe {
    pub size: usize,
    pub kind: FlareKind,
    pub core_radius: f64,
    pub core_tint: [f64; 3],
    pub glow: Option<Glow>,
    pub streaks: Vec<Streak>,
    pub ring: Option<Ring>,
    pub ghosts: Vec<Ghost>,
}

fn tint<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    let warm = rng.gen_range(0.0..1.0);
    [1.0, rng.gen_range(0.75..1.0), 0.55 + 0.45 * (1.0 - warm)]
}

impl FlareRecipe {
    /// Draws a recipe; scattering and reflective families are equally likely.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, size: usize) -> Self {
        let s = size as f64;
        let kind = if rng.gen_bool(0.5) {
            FlareKind::Scattering
        } else {
            FlareKind::Reflective
        };
        let core_radius = (s / 40.0).max(1.5) * rng.gen_range(0.9..1.3);
        let core_tint = [1.0, 1.0, rng.gen_range(0.85..1.0)];
        let glow = Some(Glow {
            amplitude: rng.gen_range(0.12..0.28),
            sigma: s * rng.gen_range(0.08..0.2),
            tint: tint(rng),
        });
        let mut recipe = FlareRecipe {
            size,
            kind,
            core_radius,
            core_tint,
            glow,
            streaks: Vec::new(),
            ring: None,
            ghosts: Vec::new(),
        };
        match kind {
            FlareKind::Scattering => {
                let n = rng.gen_range(4..=8);
                let base = rng.gen_range(0.0..PI);
                for k in 0..n {
                    recipe.streaks.push(Streak {
                        angle: base + PI * k as f64 / n as f64 + rng.gen_range(-0.1..0.1),
                        amplitude: rng.gen_range(0.7..1.0),
                        length: s * rng.gen_range(0.3..0.8),
                        width: rng.gen_range(0.4..0.8),
                    });
                }
                recipe.ring = Some(Ring {
                    radius: s * rng.gen_range(0.15..0.3),
                    width: rng.gen_range(0.8..2.0),
                    amplitude: rng.gen_range(0.05..0.15),
                    dispersion: rng.gen_range(0.02..0.06),
                });
            }
            FlareKind::Reflective => {
                let n = rng.gen_range(3..=6);
                let dir = rng.gen_range(0.0..2.0 * PI);
                let (dy, dx) = dir.sin_cos();
                for _ in 0..n {
                    let t = s * rng.gen_range(0.1..0.45);
                    recipe.ghosts.push(Ghost {
                        x: dx * t,
                        y: dy * t,
                        radius: s * rng.gen_range(0.025..0.09),
                        amplitude: rng.gen_range(0.08..0.3),
                        tint: tint(rng),
                    });
                }
                let n_streaks = rng.gen_range(0..=2);
                let base = rng.gen_range(0.0..PI);
                for k in 0..n_streaks {
                    recipe.streaks.push(Streak {
                        angle: base + PI * k as f64 / 2.0,
                        amplitude: rng.gen_range(0.4..0.8),
                        length: s * rng.gen_range(0.08..0.2),
                        width: rng.gen_range(0.5..1.0),
                    });
                }
            }
        }
        recipe
    }

    /// Flare layer (glow, streaks, ring, ghosts and core) and light-source
    /// layer (core only), both clipped to `[0, 1]`.
    pub fn render(&self) -> FlareAsset {
        let n = self.size;
        let c = (n as f64 - 1.0) / 2.0;
        let mut flare = Tensor::zeros(&[3, n, n]);
        let mut light = Tensor::zeros(&[3, n, n]);
        let plane = n * n;
        for y in 0..n {
            for x in 0..n {
                let (dx, dy) = (x as f64 - c, y as f64 - c);
                let r = (dx * dx + dy * dy).sqrt();
                let mut rgb = [0.0; 3];
                if let Some(g) = &self.glow {
                    let v = glow_profile(g, r);
                    for ch in 0..3 {
                        rgb[ch] += v * g.tint[ch];
                    }
                }
                let streak: f64 = self.streaks.iter().map(|s| streak_profile(s, dx, dy)).sum();
                for v in &mut rgb {
                    *v += streak;
                }
                if let Some(ring) = &self.ring {
                    for (ch, v) in rgb.iter_mut().enumerate() {
                        let rad = ring.radius * (1.0 + ring.dispersion * (ch as f64 - 1.0));
                        let d = (r - rad) / ring.width;
                        *v += ring.amplitude * (-0.5 * d * d).exp();
                    }
                }
                for gh in &self.ghosts {
                    let d = ((dx - gh.x).powi(2) + (dy - gh.y).powi(2)).sqrt();
                    let edge = (gh.radius + 0.5 - d).clamp(0.0, 1.0);
                    for ch in 0..3 {
                        rgb[ch] += gh.amplitude * gh.tint[ch] * edge;
                    }
                }
                let core = (self.core_radius + 0.5 - r).clamp(0.0, 1.0);
                let i = y * n + x;
                for ch in 0..3 {
                    let lc = core * self.core_tint[ch];
                    light.data_mut()[ch * plane + i] = lc;
                    flare.data_mut()[ch * plane + i] = (rgb[ch] + lc).clamp(0.0, 1.0);
                }
            }
        }
        FlareAsset {
            flare,
            light_source: light,
            kind: self.kind,
        }
    }
}

/// Gaussian halo value at radius `r`; non-increasing in `r`.
pub fn glow_profile(g: &Glow, r: f64) -> f64 {
    g.amplitude * (-0.5 * (r / g.sigma).powi(2)).exp()
}

/// Anisotropic Gaussian line through the light center.
pub fn streak_profile(s: &Streak, dx: f64, dy: f64) -> f64 {
    let (sn, cs) = s.angle.sin_cos();
    let along = dx * cs + dy * sn;
    let across = -dx * sn + dy * cs;
    s.amplitude * (-0.5 * ((along / s.length).powi(2) + (across / s.width).powi(2))).exp()
}

pub fn procedural_flare(seed: u64, size: usize) -> FlareAsset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FlareRecipe::sample(&mut rng, size).render()
}

/// Outdoor scene in display space: graded sky over ground, building blocks
/// with window grids, rounded foliage, one grating-textured surface and
/// fine pixel texture.
pub fn procedural_scene(seed: u64, size: usize) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = size;
    let s = n as f64;
    let mut rgb = vec![[0.0f64; 3]; n * n];
    let horizon = (s * rng.gen_range(0.3..0.7)) as usize;
    let sky_top = [rng.gen_range(0.2..0.5), rng.gen_range(0.3..0.6), rng.gen_range(0.5..0.9)];
    let sky_low = [rng.gen_range(0.5..0.9), rng.gen_range(0.5..0.85), rng.gen_range(0.5..0.8)];
    let ground = [rng.gen_range(0.2..0.55), rng.gen_range(0.2..0.5), rng.gen_range(0.15..0.45)];
    for y in 0..n {
        let t = y as f64 / horizon.max(1) as f64;
        for x in 0..n {
            rgb[y * n + x] = if y < horizon {
                [0, 1, 2].map(|c| sky_top[c] * (1.0 - t) + sky_low[c] * t)
            } else {
                let shade = 1.0 - 0.3 * (y - horizon) as f64 / s;
                ground.map(|v| v * shade)
            };
        }
    }

    for b in 0..rng.gen_range(3..8) {
        let bw = (s * rng.gen_range(0.1..0.3)) as usize + 2;
        let bh = (s * rng.gen_range(0.2..0.6)) as usize + 2;
        let left = rng.gen_range(0..n);
        let bottom = (horizon + (s * rng.gen_range(0.0..0.2)) as usize).min(n);
        let top = bottom.saturating_sub(bh);
        let base = [rng.gen_range(0.15..0.7), rng.gen_range(0.15..0.7), rng.gen_range(0.15..0.7)];
        let cell = ((s / 16.0) as usize).max(3);
        let window = [rng.gen_range(0.05..0.3), rng.gen_range(0.6..0.95)];
        for y in top..bottom {
            for x in left..(left + bw).min(n) {
                let (ry, rx) = (y - top, x - left);
                let in_window = ry % cell >= cell / 3 && rx % cell >= cell / 3 && ry >= cell && rx >= 1;
                let lit = hash01(seed ^ b as u64, ((ry / cell) * 97 + rx / cell) as u64) < 0.3;
                rgb[y * n + x] = if in_window {
                    [window[lit as usize]; 3]
                } else {
                    base
                };
            }
        }
    }

    for _ in 0..rng.gen_range(2..6) {
        let (cy, cx) = (rng.gen_range(0.3 * s..s), rng.gen_range(0.0..s));
        let (ry, rx) = (s * rng.gen_range(0.04..0.15), s * rng.gen_range(0.04..0.15));
        let color = [rng.gen_range(0.05..0.35), rng.gen_range(0.2..0.6), rng.gen_range(0.05..0.3)];
        for y in 0..n {
            for x in 0..n {
                let d = ((y as f64 - cy) / ry).powi(2) + ((x as f64 - cx) / rx).powi(2);
                if d <= 1.0 {
                    rgb[y * n + x] = color;
                }
            }
        }
    }

    let (gy, gx) = (rng.gen_range(0..n), rng.gen_range(0..n));
    let (gh, gw) = ((s * rng.gen_range(0.1..0.3)) as usize + 1, (s * rng.gen_range(0.1..0.3)) as usize + 1);
    let period = rng.gen_range(2.5..8.0);
    let theta = rng.gen_range(0.0..PI);
    let (st, ct) = theta.sin_cos();
    for y in gy..(gy + gh).min(n) {
        for x in gx..(gx + gw).min(n) {
            let phase = 2.0 * PI * (x as f64 * ct + y as f64 * st) / period;
            let v = 0.45 + 0.3 * phase.sin();
            rgb[y * n + x] = [v, v * 0.9, v * 0.8];
        }
    }

    let mut img = Tensor::zeros(&[3, n, n]);
    let plane = n * n;
    for (i, px) in rgb.iter().enumerate() {
        for c in 0..3 {
            img.data_mut()[c * plane + i] = (px[c] + rng.gen_range(-0.03..0.03)).clamp(0.0, 1.0);
        }
    }
    img
}

/// Stateless uniform value in `[0, 1)` derived from a seed and an index.
fn hash01(seed: u64, i: u64) -> f64 {
    let mut z = seed ^ i.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}
