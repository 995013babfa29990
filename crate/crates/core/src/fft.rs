//! Orthonormal 2-D discrete Fourier transforms over planar real data.
//!
//! The half-spectrum of an `h × w` real plane has `h × (w/2 + 1)` bins laid
//! out row-major. Forward and inverse both carry the `1/sqrt(h·w)` factor.
//! [`inverse_half`] weights every column by its conjugate-symmetry
//! multiplicity, so it is the exact inverse of [`forward_half`] and its own
//! adjoint relations are simple (see [`forward_half_adjoint`]).

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// Number of non-redundant columns for a real signal of width `w`.
#[inline]
pub fn half_width(w: usize) -> usize {
    w / 2 + 1
}

/// How many times column `k` of the half-spectrum appears in the full one.
#[inline]
pub fn multiplicity(k: usize, w: usize) -> f64 {
    if k == 0 || (w % 2 == 0 && k == w / 2) {
        1.0
    } else {
        2.0
    }
}

/// Column transforms (length `h`) on an `h × cols` complex buffer, in place.
fn columns(buf: &mut [Complex64], h: usize, cols: usize, inverse: bool) {
    let fft = plan(h, inverse);
    let mut col = vec![Complex64::default(); h];
    for k in 0..cols {
        for y in 0..h {
            col[y] = buf[y * cols + k];
        }
        fft.process(&mut col);
        for y in 0..h {
            buf[y * cols + k] = col[y];
        }
    }
}

/// Orthonormal forward transform of one real plane, returning its half-spectrum.
pub fn forward_half(x: &[f64], h: usize, w: usize) -> Vec<Complex64> {
    debug_assert_eq!(x.len(), h * w);
    let wh = half_width(w);
    let row_fft = plan(w, false);
    let mut row = vec![Complex64::default(); w];
    let mut out = vec![Complex64::default(); h * wh];
    for y in 0..h {
        for (r, &v) in row.iter_mut().zip(&x[y * w..(y + 1) * w]) {
            *r = Complex64::new(v, 0.0);
        }
        row_fft.process(&mut row);
        out[y * wh..(y + 1) * wh].copy_from_slice(&row[..wh]);
    }
    columns(&mut out, h, wh, false);
    let norm = 1.0 / ((h * w) as f64).sqrt();
    for v in &mut out {
        *v *= norm;
    }
    out
}

/// Orthonormal inverse of a half-spectrum, with each column weighted by its
/// multiplicity. Exact inverse of [`forward_half`] on spectra of real planes.
pub fn inverse_half(s: &[Complex64], h: usize, w: usize) -> Vec<f64> {
    let wh = half_width(w);
    debug_assert_eq!(s.len(), h * wh);
    let mut buf = s.to_vec();
    columns(&mut buf, h, wh, true);
    let row_fft = plan(w, true);
    let norm = 1.0 / ((h * w) as f64).sqrt();
    let mut row = vec![Complex64::default(); w];
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        row.fill(Complex64::default());
        for k in 0..wh {
            row[k] = buf[y * wh + k] * multiplicity(k, w);
        }
        row_fft.process(&mut row);
        for (o, r) in out[y * w..(y + 1) * w].iter_mut().zip(&row) {
            *o = r.re * norm;
        }
    }
    out
}

/// Adjoint of [`forward_half`] with respect to the real inner product on
/// `(re, im)` pairs: maps a half-spectrum cotangent back to the plane.
pub fn forward_half_adjoint(g: &[Complex64], h: usize, w: usize) -> Vec<f64> {
    let wh = half_width(w);
    let scaled: Vec<Complex64> = g
        .iter()
        .enumerate()
        .map(|(i, &v)| v / multiplicity(i % wh, w))
        .collect();
    inverse_half(&scaled, h, w)
}

/// Adjoint of [`inverse_half`].
pub fn inverse_half_adjoint(g: &[f64], h: usize, w: usize) -> Vec<Complex64> {
    let wh = half_width(w);
    let mut s = forward_half(g, h, w);
    for (i, v) in s.iter_mut().enumerate() {
        *v *= multiplicity(i % wh, w);
    }
    s
}

/// Orthonormal full complex 2-D transform of a real plane.
pub fn forward_full(x: &[f64], h: usize, w: usize) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let row_fft = plan(w, false);
    for row in buf.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    columns(&mut buf, h, w, false);
    let norm = 1.0 / ((h * w) as f64).sqrt();
    for v in &mut buf {
        *v *= norm;
    }
    buf
}
