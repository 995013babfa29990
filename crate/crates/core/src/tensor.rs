//! Dense row-major `f64` tensors.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// Panics if `data.len()` disagrees with the shape.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {shape:?} does not match data length {}",
            data.len()
        );
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn try_from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::validation(format!(
                "shape {shape:?} needs {} values, got {}",
                shape.iter().product::<usize>(),
                data.len()
            )));
        }
        Ok(Self::from_vec(shape, data))
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// First element; convenient for scalar results.
    pub fn item(&self) -> f64 {
        self.data[0]
    }

    /// `(C, H, W)` of a rank-3 tensor.
    pub fn dims3(&self) -> (usize, usize, usize) {
        assert_eq!(self.shape.len(), 3, "expected a C×H×W tensor, got {:?}", self.shape);
        (self.shape[0], self.shape[1], self.shape[2])
    }

    pub fn reshape(mut self, shape: &[usize]) -> Self {
        assert_eq!(shape.iter().product::<usize>(), self.data.len());
        self.shape = shape.to_vec();
        self
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(self.shape, other.shape);
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale_assign(&mut self, k: f64) {
        for a in &mut self.data {
            *a *= k;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Channel plane `c` of a C×H×W tensor.
    pub fn channel(&self, c: usize) -> &[f64] {
        let (_, h, w) = self.dims3();
        &self.data[c * h * w..(c + 1) * h * w]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let (_, h, w) = self.dims3();
        &mut self.data[c * h * w..(c + 1) * h * w]
    }

    /// Channels `start..start + len` of a C×H×W tensor.
    pub fn slice_channels(&self, start: usize, len: usize) -> Tensor {
        let (_, h, w) = self.dims3();
        let plane = h * w;
        Tensor::from_vec(
            &[len, h, w],
            self.data[start * plane..(start + len) * plane].to_vec(),
        )
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Tensor {
        self.map(|v| v.clamp(lo, hi))
    }

    /// Spatial window `[top, top + h) × [left, left + w)` of a C×H×W tensor.
    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Tensor {
        let (c, ih, iw) = self.dims3();
        assert!(top + h <= ih && left + w <= iw, "crop outside image");
        let mut out = Vec::with_capacity(c * h * w);
        for ch in 0..c {
            let plane = self.channel(ch);
            for y in top..top + h {
                out.extend_from_slice(&plane[y * iw + left..y * iw + left + w]);
            }
        }
        Tensor::from_vec(&[c, h, w], out)
    }

    /// Reflect-pads a C×H×W tensor at the bottom and right edges.
    pub fn reflect_pad(&self, pad_bottom: usize, pad_right: usize) -> Tensor {
        let (c, h, w) = self.dims3();
        assert!(pad_bottom < h && pad_right < w, "reflection pad wider than image");
        let (nh, nw) = (h + pad_bottom, w + pad_right);
        let reflect = |i: usize, n: usize| if i < n { i } else { 2 * (n - 1) - i };
        let mut out = Tensor::zeros(&[c, nh, nw]);
        for ch in 0..c {
            let src = self.channel(ch);
            let dst = out.channel_mut(ch);
            for y in 0..nh {
                let sy = reflect(y, h);
                for x in 0..nw {
                    dst[y * nw + x] = src[sy * w + reflect(x, w)];
                }
            }
        }
        out
    }

    pub fn concat_channels(parts: &[&Tensor]) -> Tensor {
        let (_, h, w) = parts[0].dims3();
        let mut data = Vec::new();
        let mut c = 0;
        for p in parts {
            let (pc, ph, pw) = p.dims3();
            assert_eq!((ph, pw), (h, w), "concat spatial mismatch");
            c += pc;
            data.extend_from_slice(p.data());
        }
        Tensor::from_vec(&[c, h, w], data)
    }
}
