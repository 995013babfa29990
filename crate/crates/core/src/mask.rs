//! Binary H×W masks.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(height: usize, width: usize) -> Self {
        Mask {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn full(height: usize, width: usize) -> Self {
        Mask {
            height,
            width,
            bits: vec![true; height * width],
        }
    }

    pub fn from_bits(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::validation(format!(
                "mask of {height}×{width} needs {} entries, got {}",
                height * width,
                bits.len()
            )));
        }
        Ok(Mask { height, width, bits })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(y, x));
            }
        }
        Mask { height, width, bits }
    }

    /// Pixels of a single-channel plane strictly above `threshold`.
    pub fn threshold(plane: &[f64], height: usize, width: usize, threshold: f64) -> Self {
        Mask {
            height,
            width,
            bits: plane.iter().map(|&v| v > threshold).collect(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Pixels set here and not in `other`.
    pub fn minus(&self, other: &Mask) -> Mask {
        assert_eq!((self.height, self.width), (other.height, other.width));
        Mask {
            height: self.height,
            width: self.width,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| a && !b).collect(),
        }
    }

    pub fn intersects(&self, other: &Mask) -> bool {
        self.bits.iter().zip(&other.bits).any(|(&a, &b)| a && b)
    }

    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Mask {
        Mask::from_fn(h, w, |y, x| self.get(top + y, left + x))
    }

    /// 1×H×W tensor of 0/1 values.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(
            &[1, self.height, self.width],
            self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
    }

    /// 8-connected components as lists of `(y, x)` pixels, in raster order
    /// of their first pixel.
    pub fn components(&self) -> Vec<Vec<(usize, usize)>> {
        let mut seen = vec![false; self.bits.len()];
        let mut out = Vec::new();
        for start in 0..self.bits.len() {
            if !self.bits[start] || seen[start] {
                continue;
            }
            seen[start] = true;
            let mut stack = vec![start];
            let mut comp = Vec::new();
            while let Some(i) = stack.pop() {
                let (y, x) = (i / self.width, i % self.width);
                comp.push((y, x));
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let (ny, nx) = (y as isize + dy, x as isize + dx);
                        if ny < 0 || nx < 0 || ny >= self.height as isize || nx >= self.width as isize {
                            continue;
                        }
                        let j = ny as usize * self.width + nx as usize;
                        if self.bits[j] && !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}
