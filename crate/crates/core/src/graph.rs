//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation eagerly as it is applied and keeps the
//! forward value of each node. [`Graph::backward`] then walks the tape in
//! reverse. Graphs are single-use: build one per forward pass.
//!
//! Shape mismatches inside the graph are programmer errors and panic; public
//! operations validate their inputs before they get here.

use rustfft::num_complex::Complex64;

use crate::fft;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectralTerm {
    Amplitude,
    Phase,
}

/// Bins where both amplitudes fall below this carry no phase penalty.
pub const PHASE_AMPLITUDE_FLOOR: f64 = 1e-8;

enum Op {
    Leaf,
    WeightedSum(Vec<(Var, f64)>),
    Mul(Var, Var),
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
        cols: Vec<f64>,
    },
    ConvTranspose2 {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    LeakyRelu {
        x: Var,
        slope: f64,
    },
    StarRelu {
        x: Var,
        scale: Var,
        bias: Var,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    MeanPool(Var),
    Sum(Var),
    Reshape(Var),
    Softmax(Var),
    Rdft2(Var),
    Irdft2(Var),
    SpectralMix {
        spec: Var,
        coef: Var,
        phi: Var,
    },
    Concat(Vec<Var>),
    SliceChannels {
        x: Var,
        start: usize,
    },
    Perceptual {
        pred: Var,
        target: Tensor,
    },
    SpectralL1 {
        spec: Var,
        target: Vec<Complex64>,
        term: SpectralTerm,
    },
    GatherPatches {
        x: Var,
        coords: Vec<(usize, usize)>,
        size: usize,
    },
    ConcatCols(Var, Var),
    L2NormalizeCols {
        x: Var,
        norms: Vec<f64>,
    },
    InfoNce {
        z: Var,
        tau: f64,
        probs: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

/// `c = alpha·op(a)·op(b) + beta·c` for row-major matrices, where
/// `op(a)` is `m × k` and `op(b)` is `k × n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in &mut c[..m * n] {
            *v *= beta;
        }
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserted lengths cover every index reachable from the
    // given dimensions and strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub(crate) fn to_complex(data: &[f64]) -> Vec<Complex64> {
    data.chunks_exact(2)
        .map(|p| Complex64::new(p[0], p[1]))
        .collect()
}

pub(crate) fn from_complex(data: &[Complex64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(data.len() * 2);
    for v in data {
        out.push(v.re);
        out.push(v.im);
    }
    out
}

fn wrap_angle(d: f64) -> f64 {
    use std::f64::consts::PI;
    let mut r = (d + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

/// Per-bin contribution and gradient of the spectral L1 terms. Returns
/// `(value, d value / d re, d value / d im)` for the prediction bin.
fn spectral_l1_bin(p: Complex64, t: Complex64, term: SpectralTerm) -> (f64, f64, f64) {
    match term {
        SpectralTerm::Amplitude => {
            let (ap, at) = (p.norm(), t.norm());
            let d = ap - at;
            let s = if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            };
            if ap > 0.0 {
                (d.abs(), s * p.re / ap, s * p.im / ap)
            } else {
                (d.abs(), 0.0, 0.0)
            }
        }
        SpectralTerm::Phase => {
            let (ap, at) = (p.norm(), t.norm());
            if ap < PHASE_AMPLITUDE_FLOOR && at < PHASE_AMPLITUDE_FLOOR {
                return (0.0, 0.0, 0.0);
            }
            let d = wrap_angle(p.arg() - t.arg());
            let s = if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            };
            let a2 = ap * ap;
            if a2 > 0.0 {
                (d.abs(), -s * p.im / a2, s * p.re / a2)
            } else {
                (d.abs(), 0.0, 0.0)
            }
        }
    }
}

/// Mean spectral L1 term between two half-spectra, without gradients.
/// `logsumexp(logits) − logits[0]`, accurate when the first logit dominates.
pub fn neg_log_softmax_first(logits: &[f64]) -> f64 {
    let (arg, m) = logits
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, l)| if l > best.1 { (i, l) } else { best });
    let rest: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != arg)
        .map(|(_, l)| (l - m).exp())
        .sum();
    (m - logits[0]) + rest.ln_1p()
}

pub fn spectral_l1(pred: &[Complex64], target: &[Complex64], term: SpectralTerm) -> f64 {
    let total: f64 = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| spectral_l1_bin(p, t, term).0)
        .sum();
    total / pred.len() as f64
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf whose gradient is tracked.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last [`Graph::backward`] target with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.weighted_sum(&[(a, 1.0), (b, 1.0)])
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.weighted_sum(&[(a, k)])
    }

    /// `Σ kᵢ·vᵢ` over same-shaped inputs.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Var {
        let mut out = Tensor::zeros(self.shape(terms[0].0));
        for &(v, k) in terms {
            let val = self.value(v);
            assert_eq!(val.shape(), out.shape(), "weighted_sum shape mismatch");
            for (o, x) in out.data_mut().iter_mut().zip(val.data()) {
                *o += k * x;
            }
        }
        let vars: Vec<Var> = terms.iter().map(|t| t.0).collect();
        let rg = self.rg(&vars);
        self.push(out, Op::WeightedSum(terms.to_vec()), rg)
    }

    /// Elementwise product of same-shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Mul(a, b), rg)
    }

    /// 2-D convolution. `x`: Cin×H×W, `w`: Cout×Cin×k×k, `b`: Cout.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let (cin, h, wd) = self.value(x).dims3();
        let ws = self.shape(w).to_vec();
        assert_eq!(ws.len(), 4);
        assert_eq!(ws[1], cin, "conv2d channel mismatch");
        let (cout, k) = (ws[0], ws[2]);
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (wd + 2 * pad - k) / stride + 1;
        let cols = im2col(self.value(x).data(), cin, h, wd, k, stride, pad, ho, wo);
        let mut out = vec![0.0; cout * ho * wo];
        if let Some(b) = b {
            let bias = self.value(b).data();
            for (co, chunk) in out.chunks_exact_mut(ho * wo).enumerate() {
                chunk.fill(bias[co]);
            }
        }
        gemm(
            cout,
            cin * k * k,
            ho * wo,
            self.value(w).data(),
            false,
            &cols,
            false,
            1.0,
            &mut out,
        );
        let mut deps = vec![x, w];
        deps.extend(b);
        let rg = self.rg(&deps);
        self.push(
            Tensor::from_vec(&[cout, ho, wo], out),
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                pad,
                cols,
            },
            rg,
        )
    }

    /// 2×2 transposed convolution with stride 2. `w`: Cin×Cout×2×2.
    pub fn conv_transpose2(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let (cin, h, wd) = self.value(x).dims3();
        let ws = self.shape(w).to_vec();
        assert_eq!(ws, vec![cin, ws[1], 2, 2], "conv_transpose2 weight shape");
        let cout = ws[1];
        let hw = h * wd;
        // y4[(co·4 + a·2 + b), n] = Σ_ci w[ci, co, a, b] · x[ci, n]
        let mut y4 = vec![0.0; cout * 4 * hw];
        gemm(
            cout * 4,
            cin,
            hw,
            self.value(w).data(),
            true,
            self.value(x).data(),
            false,
            0.0,
            &mut y4,
        );
        let (oh, ow) = (2 * h, 2 * wd);
        let mut out = vec![0.0; cout * oh * ow];
        let bias = b.map(|b| self.value(b).data().to_vec());
        for co in 0..cout {
            let bv = bias.as_ref().map_or(0.0, |b| b[co]);
            for a in 0..2 {
                for bb in 0..2 {
                    let row = &y4[(co * 4 + a * 2 + bb) * hw..][..hw];
                    for i in 0..h {
                        for j in 0..wd {
                            out[co * oh * ow + (2 * i + a) * ow + 2 * j + bb] = row[i * wd + j] + bv;
                        }
                    }
                }
            }
        }
        let mut deps = vec![x, w];
        deps.extend(b);
        let rg = self.rg(&deps);
        self.push(
            Tensor::from_vec(&[cout, oh, ow], out),
            Op::ConvTranspose2 { x, w, b },
            rg,
        )
    }

    /// Channel-mixing linear map over dimension 0: `x` is Cin×(any),
    /// `w` is Cout×Cin, `b` is Cout. Trailing dimensions are preserved.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let xs = self.shape(x).to_vec();
        let cin = xs[0];
        let n: usize = xs[1..].iter().product();
        let ws = self.shape(w).to_vec();
        assert_eq!(ws.len(), 2);
        assert_eq!(ws[1], cin, "linear input mismatch");
        let cout = ws[0];
        let mut out = vec![0.0; cout * n];
        if let Some(b) = b {
            let bias = self.value(b).data();
            for (co, chunk) in out.chunks_exact_mut(n).enumerate() {
                chunk.fill(bias[co]);
            }
        }
        gemm(
            cout,
            cin,
            n,
            self.value(w).data(),
            false,
            self.value(x).data(),
            false,
            1.0,
            &mut out,
        );
        let mut shape = xs;
        shape[0] = cout;
        let mut deps = vec![x, w];
        deps.extend(b);
        let rg = self.rg(&deps);
        self.push(Tensor::from_vec(&shape, out), Op::Linear { x, w, b }, rg)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { slope * v });
        let rg = self.rg(&[x]);
        self.push(out, Op::LeakyRelu { x, slope }, rg)
    }

    /// `scale · relu(x)² + bias` with scalar `scale` and `bias` nodes.
    pub fn star_relu(&mut self, x: Var, scale: Var, bias: Var) -> Var {
        let s = self.value(scale).item();
        let b = self.value(bias).item();
        let out = self.value(x).map(|v| {
            let r = v.max(0.0);
            s * r * r + b
        });
        let rg = self.rg(&[x, scale, bias]);
        self.push(out, Op::StarRelu { x, scale, bias }, rg)
    }

    /// Layer normalization across dimension 0 (channels) independently at
    /// every trailing position. Variance is floored by `eps`, so a constant
    /// column maps to `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let xs = self.shape(x).to_vec();
        let c = xs[0];
        let n: usize = xs[1..].iter().product();
        let xv = self.value(x).data();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        assert_eq!(g.len(), c);
        assert_eq!(bt.len(), c);
        let mut xhat = vec![0.0; c * n];
        let mut inv_std = vec![0.0; n];
        let mut out = vec![0.0; c * n];
        for j in 0..n {
            let mean = (0..c).map(|i| xv[i * n + j]).sum::<f64>() / c as f64;
            let var = (0..c)
                .map(|i| {
                    let d = xv[i * n + j] - mean;
                    d * d
                })
                .sum::<f64>()
                / c as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[j] = is;
            for i in 0..c {
                let xh = (xv[i * n + j] - mean) * is;
                xhat[i * n + j] = xh;
                out[i * n + j] = g[i] * xh + bt[i];
            }
        }
        let rg = self.rg(&[x, gamma, beta]);
        self.push(
            Tensor::from_vec(&xs, out),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            rg,
        )
    }

    /// Spatial mean of a C×H×W tensor, shaped C×1.
    pub fn mean_pool(&mut self, x: Var) -> Var {
        let (c, h, w) = self.value(x).dims3();
        let out: Vec<f64> = (0..c)
            .map(|ch| self.value(x).channel(ch).iter().sum::<f64>() / (h * w) as f64)
            .collect();
        let rg = self.rg(&[x]);
        self.push(Tensor::from_vec(&[c, 1], out), Op::MeanPool(x), rg)
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        let rg = self.rg(&[x]);
        self.push(out, Op::Sum(x), rg)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let out = self.value(x).clone().reshape(shape);
        let rg = self.rg(&[x]);
        self.push(out, Op::Reshape(x), rg)
    }

    /// Softmax along the last axis of a 2-D tensor.
    pub fn softmax(&mut self, x: Var) -> Var {
        let xs = self.shape(x).to_vec();
        assert_eq!(xs.len(), 2);
        let n = xs[1];
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_exact_mut(n) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                z += *v;
            }
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        let rg = self.rg(&[x]);
        self.push(Tensor::from_vec(&xs, out), Op::Softmax(x), rg)
    }

    /// Orthonormal half-spectrum of every channel: C×H×W → C×H×(W/2+1)×2.
    pub fn rdft2(&mut self, x: Var) -> Var {
        let (c, h, w) = self.value(x).dims3();
        let wh = fft::half_width(w);
        let mut out = Vec::with_capacity(c * h * wh * 2);
        for ch in 0..c {
            out.extend(from_complex(&fft::forward_half(self.value(x).channel(ch), h, w)));
        }
        let rg = self.rg(&[x]);
        self.push(Tensor::from_vec(&[c, h, wh, 2], out), Op::Rdft2(x), rg)
    }

    /// Inverse of [`Graph::rdft2`] back to width `w`.
    pub fn irdft2(&mut self, s: Var, w: usize) -> Var {
        let ss = self.shape(s).to_vec();
        assert_eq!(ss.len(), 4);
        let (c, h, wh) = (ss[0], ss[1], ss[2]);
        assert_eq!(wh, fft::half_width(w), "irdft2 width mismatch");
        let data = self.value(s).data();
        let mut out = Vec::with_capacity(c * h * w);
        for ch in 0..c {
            let spec = to_complex(&data[ch * h * wh * 2..(ch + 1) * h * wh * 2]);
            out.extend(fft::inverse_half(&spec, h, w));
        }
        let rg = self.rg(&[s]);
        self.push(Tensor::from_vec(&[c, h, w], out), Op::Irdft2(s), rg)
    }

    /// `out[c] = (Σᵢ coef[c,i]·phi[i]) ⊙ spec[c]` with complex `phi` and `spec`.
    pub fn spectral_mix(&mut self, spec: Var, coef: Var, phi: Var) -> Var {
        let ss = self.shape(spec).to_vec();
        let (c, bins) = (ss[0], ss[1] * ss[2]);
        let ps = self.shape(phi).to_vec();
        let n = ps[0];
        assert_eq!(&ps[1..], &ss[1..], "filter resolution mismatch");
        assert_eq!(self.shape(coef), &[c, n]);
        let s = self.value(spec).data();
        let t = self.value(coef).data();
        let p = self.value(phi).data();
        let mut out = vec![0.0; c * bins * 2];
        let mut wbuf = vec![0.0; bins * 2];
        for ch in 0..c {
            wbuf.fill(0.0);
            for i in 0..n {
                let k = t[ch * n + i];
                for (wv, pv) in wbuf.iter_mut().zip(&p[i * bins * 2..(i + 1) * bins * 2]) {
                    *wv += k * pv;
                }
            }
            let sc = &s[ch * bins * 2..(ch + 1) * bins * 2];
            let oc = &mut out[ch * bins * 2..(ch + 1) * bins * 2];
            for q in 0..bins {
                let (wr, wi) = (wbuf[2 * q], wbuf[2 * q + 1]);
                let (sr, si) = (sc[2 * q], sc[2 * q + 1]);
                oc[2 * q] = wr * sr - wi * si;
                oc[2 * q + 1] = wr * si + wi * sr;
            }
        }
        let rg = self.rg(&[spec, coef, phi]);
        self.push(Tensor::from_vec(&ss, out), Op::SpectralMix { spec, coef, phi }, rg)
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Var {
        let vals: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::concat_channels(&vals);
        let rg = self.rg(parts);
        self.push(out, Op::Concat(parts.to_vec()), rg)
    }

    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Var {
        let out = self.value(x).slice_channels(start, len);
        let rg = self.rg(&[x]);
        self.push(out, Op::SliceChannels { x, start }, rg)
    }

    /// Mean absolute error plus mean squared error against a constant target.
    pub fn perceptual(&mut self, pred: Var, target: &Tensor) -> Var {
        let p = self.value(pred);
        assert_eq!(p.shape(), target.shape(), "perceptual shape mismatch");
        let n = p.len() as f64;
        let (mut l1, mut l2) = (0.0, 0.0);
        for (a, b) in p.data().iter().zip(target.data()) {
            let d = a - b;
            l1 += d.abs();
            l2 += d * d;
        }
        let rg = self.rg(&[pred]);
        self.push(
            Tensor::scalar(l1 / n + l2 / n),
            Op::Perceptual {
                pred,
                target: target.clone(),
            },
            rg,
        )
    }

    /// Mean amplitude or wrapped-phase L1 distance between the half-spectrum
    /// node `spec` and a constant target half-spectrum.
    pub fn spectral_l1(&mut self, spec: Var, target: Vec<Complex64>, term: SpectralTerm) -> Var {
        let p = to_complex(self.value(spec).data());
        assert_eq!(p.len(), target.len(), "spectral_l1 shape mismatch");
        let v = spectral_l1(&p, &target, term);
        let rg = self.rg(&[spec]);
        self.push(Tensor::scalar(v), Op::SpectralL1 { spec, target, term }, rg)
    }

    /// Flattens square patches of a C×H×W tensor into the columns of a
    /// (C·size²)×n matrix; `coords` are top-left `(row, col)` pairs.
    pub fn gather_patches(&mut self, x: Var, coords: &[(usize, usize)], size: usize) -> Var {
        let (c, h, w) = self.value(x).dims3();
        let d = c * size * size;
        let n = coords.len();
        let xv = self.value(x).data();
        let mut out = vec![0.0; d * n];
        for (j, &(top, left)) in coords.iter().enumerate() {
            assert!(top + size <= h && left + size <= w, "patch outside image");
            let mut r = 0;
            for ch in 0..c {
                for dy in 0..size {
                    for dx in 0..size {
                        out[r * n + j] = xv[ch * h * w + (top + dy) * w + left + dx];
                        r += 1;
                    }
                }
            }
        }
        let rg = self.rg(&[x]);
        self.push(
            Tensor::from_vec(&[d, n], out),
            Op::GatherPatches {
                x,
                coords: coords.to_vec(),
                size,
            },
            rg,
        )
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let (d, na, nb) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
        assert_eq!(bv.shape()[0], d);
        let mut out = Vec::with_capacity(d * (na + nb));
        for r in 0..d {
            out.extend_from_slice(&av.data()[r * na..(r + 1) * na]);
            out.extend_from_slice(&bv.data()[r * nb..(r + 1) * nb]);
        }
        let rg = self.rg(&[a, b]);
        self.push(Tensor::from_vec(&[d, na + nb], out), Op::ConcatCols(a, b), rg)
    }

    /// Scales each column of a D×n matrix to unit Euclidean norm.
    pub fn l2_normalize_cols(&mut self, x: Var) -> Var {
        let xs = self.shape(x).to_vec();
        let (d, n) = (xs[0], xs[1]);
        let xv = self.value(x).data();
        let norms: Vec<f64> = (0..n)
            .map(|j| {
                (0..d)
                    .map(|r| xv[r * n + j] * xv[r * n + j])
                    .sum::<f64>()
                    .sqrt()
                    .max(1e-12)
            })
            .collect();
        let out = Tensor::from_fn(&xs, |i| xv[i] / norms[i % n]);
        let rg = self.rg(&[x]);
        self.push(out, Op::L2NormalizeCols { x, norms }, rg)
    }

    /// InfoNCE over the columns of a K×(2+M) matrix: column 0 is the query,
    /// column 1 the positive and the rest negatives. Evaluated with
    /// log-sum-exp.
    pub fn info_nce(&mut self, z: Var, tau: f64) -> Var {
        let zs = self.shape(z).to_vec();
        let (k, cols) = (zs[0], zs[1]);
        assert!(cols >= 2);
        let zv = self.value(z).data();
        let logits: Vec<f64> = (1..cols)
            .map(|j| (0..k).map(|r| zv[r * cols] * zv[r * cols + j]).sum::<f64>() / tau)
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|l| (l - m).exp()).sum();
        let lse = m + sum.ln();
        let probs: Vec<f64> = logits.iter().map(|l| (l - lse).exp()).collect();
        let loss = neg_log_softmax_first(&logits);
        let rg = self.rg(&[z]);
        self.push(Tensor::scalar(loss), Op::InfoNce { z, tau, probs }, rg)
    }

    fn accumulate(&mut self, v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Back-propagates from the scalar node `root` with seed gradient 1.
    pub fn backward(&mut self, root: Var) {
        assert_eq!(self.value(root).len(), 1, "backward needs a scalar root");
        self.grads = vec![None; self.nodes.len()];
        self.grads[root.0] = Some(Tensor::scalar(1.0).reshape(self.shape(root)));
        for i in (0..=root.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(gout) = self.grads[i].take() else {
                continue;
            };
            let contributions = self.node_backward(i, &gout);
            self.grads[i] = Some(gout);
            for (v, g) in contributions {
                self.accumulate(v, g);
            }
        }
    }

    fn node_backward(&self, i: usize, gout: &Tensor) -> Vec<(Var, Tensor)> {
        let node = &self.nodes[i];
        let gd = gout.data();
        let needs = |v: &Var| self.nodes[v.0].requires_grad;
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::WeightedSum(terms) => {
                for &(v, k) in terms {
                    if needs(&v) {
                        out.push((v, gout.map(|g| g * k)));
                    }
                }
            }
            Op::Mul(a, b) => {
                if needs(a) {
                    out.push((*a, gout.zip_map(self.value(*b), |g, y| g * y)));
                }
                if needs(b) {
                    out.push((*b, gout.zip_map(self.value(*a), |g, x| g * x)));
                }
            }
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                pad,
                cols,
            } => {
                let (cin, h, wd) = self.value(*x).dims3();
                let ws = self.shape(*w);
                let (cout, k) = (ws[0], ws[2]);
                let (_, ho, wo) = node.value.dims3();
                let kk = cin * k * k;
                if needs(w) {
                    let mut gw = vec![0.0; cout * kk];
                    gemm(cout, ho * wo, kk, gd, false, cols, true, 0.0, &mut gw);
                    out.push((*w, Tensor::from_vec(ws, gw)));
                }
                if let Some(b) = b.filter(|b| needs(b)) {
                    let gb: Vec<f64> = gd.chunks_exact(ho * wo).map(|c| c.iter().sum()).collect();
                    out.push((b, Tensor::from_vec(&[cout], gb)));
                }
                if needs(x) {
                    let mut gcols = vec![0.0; kk * ho * wo];
                    gemm(kk, cout, ho * wo, self.value(*w).data(), true, gd, false, 0.0, &mut gcols);
                    let gx = col2im(&gcols, cin, h, wd, k, *stride, *pad, ho, wo);
                    out.push((*x, Tensor::from_vec(&[cin, h, wd], gx)));
                }
            }
            Op::ConvTranspose2 { x, w, b } => {
                let (cin, h, wd) = self.value(*x).dims3();
                let cout = self.shape(*w)[1];
                let hw = h * wd;
                let (oh, ow) = (2 * h, 2 * wd);
                let mut gy4 = vec![0.0; cout * 4 * hw];
                for co in 0..cout {
                    for a in 0..2 {
                        for bb in 0..2 {
                            let row = &mut gy4[(co * 4 + a * 2 + bb) * hw..][..hw];
                            for ii in 0..h {
                                for j in 0..wd {
                                    row[ii * wd + j] = gd[co * oh * ow + (2 * ii + a) * ow + 2 * j + bb];
                                }
                            }
                        }
                    }
                }
                if needs(w) {
                    // w viewed as Cin×(Cout·4): gw = x · gy4ᵀ
                    let mut gw = vec![0.0; cin * cout * 4];
                    gemm(cin, hw, cout * 4, self.value(*x).data(), false, &gy4, true, 0.0, &mut gw);
                    out.push((*w, Tensor::from_vec(self.shape(*w), gw)));
                }
                if let Some(b) = b.filter(|b| needs(b)) {
                    let gb: Vec<f64> = gd.chunks_exact(oh * ow).map(|c| c.iter().sum()).collect();
                    out.push((b, Tensor::from_vec(&[cout], gb)));
                }
                if needs(x) {
                    let mut gx = vec![0.0; cin * hw];
                    gemm(cin, cout * 4, hw, self.value(*w).data(), false, &gy4, false, 0.0, &mut gx);
                    out.push((*x, Tensor::from_vec(&[cin, h, wd], gx)));
                }
            }
            Op::Linear { x, w, b } => {
                let xs = self.shape(*x);
                let cin = xs[0];
                let n: usize = xs[1..].iter().product();
                let cout = self.shape(*w)[0];
                if needs(w) {
                    let mut gw = vec![0.0; cout * cin];
                    gemm(cout, n, cin, gd, false, self.value(*x).data(), true, 0.0, &mut gw);
                    out.push((*w, Tensor::from_vec(&[cout, cin], gw)));
                }
                if let Some(b) = b.filter(|b| needs(b)) {
                    let gb: Vec<f64> = gd.chunks_exact(n).map(|c| c.iter().sum()).collect();
                    out.push((b, Tensor::from_vec(&[cout], gb)));
                }
                if needs(x) {
                    let mut gx = vec![0.0; cin * n];
                    gemm(cin, cout, n, self.value(*w).data(), true, gd, false, 0.0, &mut gx);
                    out.push((*x, Tensor::from_vec(xs, gx)));
                }
            }
            Op::LeakyRelu { x, slope } => {
                let xv = self.value(*x);
                out.push((*x, gout.zip_map(xv, |g, v| if v > 0.0 { g } else { slope * g })));
            }
            Op::StarRelu { x, scale, bias } => {
                let xv = self.value(*x);
                let s = self.value(*scale).item();
                if needs(x) {
                    out.push((*x, gout.zip_map(xv, |g, v| g * 2.0 * s * v.max(0.0))));
                }
                if needs(scale) {
                    let gs: f64 = gd
                        .iter()
                        .zip(xv.data())
                        .map(|(g, v)| {
                            let r = v.max(0.0);
                            g * r * r
                        })
                        .sum();
                    out.push((*scale, Tensor::scalar(gs).reshape(self.shape(*scale))));
                }
                if needs(bias) {
                    out.push((*bias, Tensor::scalar(gout.sum()).reshape(self.shape(*bias))));
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let xs = self.shape(*x);
                let c = xs[0];
                let n: usize = xs[1..].iter().product();
                let g = self.value(*gamma).data();
                if needs(gamma) {
                    let gg: Vec<f64> = (0..c)
                        .map(|i| (0..n).map(|j| gd[i * n + j] * xhat[i * n + j]).sum())
                        .collect();
                    out.push((*gamma, Tensor::from_vec(&[c], gg)));
                }
                if needs(beta) {
                    let gb: Vec<f64> = (0..c).map(|i| gd[i * n..(i + 1) * n].iter().sum()).collect();
                    out.push((*beta, Tensor::from_vec(&[c], gb)));
                }
                if needs(x) {
                    let mut gx = vec![0.0; c * n];
                    for j in 0..n {
                        let mut mean_d = 0.0;
                        let mut mean_dx = 0.0;
                        for ii in 0..c {
                            let d = gd[ii * n + j] * g[ii];
                            mean_d += d;
                            mean_dx += d * xhat[ii * n + j];
                        }
                        mean_d /= c as f64;
                        mean_dx /= c as f64;
                        for ii in 0..c {
                            let d = gd[ii * n + j] * g[ii];
                            gx[ii * n + j] = inv_std[j] * (d - mean_d - xhat[ii * n + j] * mean_dx);
                        }
                    }
                    out.push((*x, Tensor::from_vec(xs, gx)));
                }
            }
            Op::MeanPool(x) => {
                let (c, h, w) = self.value(*x).dims3();
                let hw = h * w;
                let gx = Tensor::from_fn(&[c, h, w], |i| gd[i / hw] / hw as f64);
                out.push((*x, gx));
            }
            Op::Sum(x) => {
                out.push((*x, Tensor::full(self.shape(*x), gd[0])));
            }
            Op::Reshape(x) => {
                out.push((*x, gout.clone().reshape(self.shape(*x))));
            }
            Op::Softmax(x) => {
                let n = node.value.shape()[1];
                let y = node.value.data();
                let mut gx = vec![0.0; y.len()];
                for r in 0..y.len() / n {
                    let row = r * n..(r + 1) * n;
                    let dot: f64 = gd[row.clone()].iter().zip(&y[row.clone()]).map(|(a, b)| a * b).sum();
                    for q in row {
                        gx[q] = y[q] * (gd[q] - dot);
                    }
                }
                out.push((*x, Tensor::from_vec(self.shape(*x), gx)));
            }
            Op::Rdft2(x) => {
                let (c, h, w) = self.value(*x).dims3();
                let wh = fft::half_width(w);
                let mut gx = Vec::with_capacity(c * h * w);
                for ch in 0..c {
                    let g = to_complex(&gd[ch * h * wh * 2..(ch + 1) * h * wh * 2]);
                    gx.extend(fft::forward_half_adjoint(&g, h, w));
                }
                out.push((*x, Tensor::from_vec(&[c, h, w], gx)));
            }
            Op::Irdft2(s) => {
                let (c, h, w) = node.value.dims3();
                let mut gs = Vec::with_capacity(c * h * fft::half_width(w) * 2);
                for ch in 0..c {
                    gs.extend(from_complex(&fft::inverse_half_adjoint(gout.channel(ch), h, w)));
                }
                out.push((*s, Tensor::from_vec(self.shape(*s), gs)));
            }
            Op::SpectralMix { spec, coef, phi } => {
                let ss = self.shape(*spec);
                let (c, bins) = (ss[0], ss[1] * ss[2]);
                let n = self.shape(*phi)[0];
                let s = self.value(*spec).data();
                let t = self.value(*coef).data();
                let p = self.value(*phi).data();
                let mut gs = vec![0.0; s.len()];
                let mut gt = vec![0.0; c * n];
                let mut gp = vec![0.0; p.len()];
                let mut wbuf = vec![0.0; bins * 2];
                let mut gw = vec![0.0; bins * 2];
                for ch in 0..c {
                    wbuf.fill(0.0);
                    for ii in 0..n {
                        let k = t[ch * n + ii];
                        for (wv, pv) in wbuf.iter_mut().zip(&p[ii * bins * 2..(ii + 1) * bins * 2]) {
                            *wv += k * pv;
                        }
                    }
                    let base = ch * bins * 2;
                    for q in 0..bins {
                        let (gr, gi) = (gd[base + 2 * q], gd[base + 2 * q + 1]);
                        let (wr, wi) = (wbuf[2 * q], wbuf[2 * q + 1]);
                        let (sr, si) = (s[base + 2 * q], s[base + 2 * q + 1]);
                        // conj(w)·g and conj(s)·g
                        gs[base + 2 * q] = wr * gr + wi * gi;
                        gs[base + 2 * q + 1] = wr * gi - wi * gr;
                        gw[2 * q] = sr * gr + si * gi;
                        gw[2 * q + 1] = sr * gi - si * gr;
                    }
                    for ii in 0..n {
                        let k = t[ch * n + ii];
                        let pi = &p[ii * bins * 2..(ii + 1) * bins * 2];
                        let gpi = &mut gp[ii * bins * 2..(ii + 1) * bins * 2];
                        let mut acc = 0.0;
                        for q in 0..bins * 2 {
                            acc += pi[q] * gw[q];
                            gpi[q] += k * gw[q];
                        }
                        gt[ch * n + ii] = acc;
                    }
                }
                if needs(spec) {
                    out.push((*spec, Tensor::from_vec(ss, gs)));
                }
                if needs(coef) {
                    out.push((*coef, Tensor::from_vec(&[c, n], gt)));
                }
                if needs(phi) {
                    out.push((*phi, Tensor::from_vec(self.shape(*phi), gp)));
                }
            }
            Op::Concat(parts) => {
                let mut start = 0;
                for p in parts {
                    let c = self.shape(*p)[0];
                    if needs(p) {
                        out.push((*p, gout.slice_channels(start, c)));
                    }
                    start += c;
                }
            }
            Op::SliceChannels { x, start } => {
                let (c, h, w) = self.value(*x).dims3();
                let mut gx = Tensor::zeros(&[c, h, w]);
                let off = start * h * w;
                gx.data_mut()[off..off + gd.len()].copy_from_slice(gd);
                out.push((*x, gx));
            }
            Op::Perceptual { pred, target } => {
                let p = self.value(*pred);
                let n = p.len() as f64;
                let g0 = gd[0];
                let gx = p.zip_map(target, |a, b| {
                    let d = a - b;
                    let s = if d > 0.0 {
                        1.0
                    } else if d < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    g0 * (s + 2.0 * d) / n
                });
                out.push((*pred, gx));
            }
            Op::SpectralL1 { spec, target, term } => {
                let p = to_complex(self.value(*spec).data());
                let n = p.len() as f64;
                let g0 = gd[0];
                let mut gs = Vec::with_capacity(p.len() * 2);
                for (&pv, &tv) in p.iter().zip(target) {
                    let (_, dr, di) = spectral_l1_bin(pv, tv, *term);
                    gs.push(g0 * dr / n);
                    gs.push(g0 * di / n);
                }
                out.push((*spec, Tensor::from_vec(self.shape(*spec), gs)));
            }
            Op::GatherPatches { x, coords, size } => {
                let (c, h, w) = self.value(*x).dims3();
                let n = coords.len();
                let mut gx = Tensor::zeros(&[c, h, w]);
                let gxd = gx.data_mut();
                for (j, &(top, left)) in coords.iter().enumerate() {
                    let mut r = 0;
                    for ch in 0..c {
                        for dy in 0..*size {
                            for dx in 0..*size {
                                gxd[ch * h * w + (top + dy) * w + left + dx] += gd[r * n + j];
                                r += 1;
                            }
                        }
                    }
                }
                out.push((*x, gx));
            }
            Op::ConcatCols(a, b) => {
                let (d, na) = (self.shape(*a)[0], self.shape(*a)[1]);
                let nb = self.shape(*b)[1];
                let n = na + nb;
                if needs(a) {
                    let ga = Tensor::from_fn(&[d, na], |q| gd[(q / na) * n + q % na]);
                    out.push((*a, ga));
                }
                if needs(b) {
                    let gb = Tensor::from_fn(&[d, nb], |q| gd[(q / nb) * n + na + q % nb]);
                    out.push((*b, gb));
                }
            }
            Op::L2NormalizeCols { x, norms } => {
                let xs = self.shape(*x);
                let (d, n) = (xs[0], xs[1]);
                let y = node.value.data();
                let dots: Vec<f64> = (0..n)
                    .map(|j| (0..d).map(|r| y[r * n + j] * gd[r * n + j]).sum())
                    .collect();
                let gx = Tensor::from_fn(xs, |q| {
                    let j = q % n;
                    (gd[q] - y[q] * dots[j]) / norms[j]
                });
                out.push((*x, gx));
            }
            Op::InfoNce { z, tau, probs } => {
                let zs = self.shape(*z);
                let (k, cols) = (zs[0], zs[1]);
                let zv = self.value(*z).data();
                let g0 = gd[0];
                // d loss / d logit_j = p_j − [j = positive]
                let dl: Vec<f64> = probs
                    .iter()
                    .enumerate()
                    .map(|(j, p)| g0 * (p - if j == 0 { 1.0 } else { 0.0 }) / tau)
                    .collect();
                let mut gz = vec![0.0; k * cols];
                for r in 0..k {
                    let q = zv[r * cols];
                    let mut gq = 0.0;
                    for j in 1..cols {
                        gq += dl[j - 1] * zv[r * cols + j];
                        gz[r * cols + j] = dl[j - 1] * q;
                    }
                    gz[r * cols] = gq;
                }
                out.push((*z, Tensor::from_vec(zs, gz)));
            }
        }
        out
    }
}

#[allow(clippy::too_many_arguments)]
fn im2col(
    x: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
) -> Vec<f64> {
    let mut cols = vec![0.0; cin * k * k * ho * wo];
    for ci in 0..cin {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * ho * wo;
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &x[ci * h * w + iy as usize * w..][..w];
                    let dst = &mut cols[row + oy * wo..][..wo];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            *d = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

#[allow(clippy::too_many_arguments)]
fn col2im(
    cols: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
) -> Vec<f64> {
    let mut x = vec![0.0; cin * h * w];
    for ci in 0..cin {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * ho * wo;
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let base = ci * h * w + iy as usize * w;
                    for ox in 0..wo {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            x[base + ix as usize] += cols[row + oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    /// Checks d(root)/d(leaf) against central differences for every leaf
    /// element. `build` must construct the same graph from the given leaves.
    fn check(leaves: Vec<Tensor>, build: impl Fn(&mut Graph, &[Var]) -> Var) {
        let mut g = Graph::new();
        let vars: Vec<Var> = leaves.iter().map(|t| g.param(t.clone())).collect();
        let root = build(&mut g, &vars);
        g.backward(root);
        let eps = 1e-5;
        for (li, leaf) in leaves.iter().enumerate() {
            let analytic = g.grad(vars[li]).cloned().unwrap_or_else(|| Tensor::zeros(leaf.shape()));
            for e in 0..leaf.len() {
                let eval = |delta: f64| {
                    let mut g2 = Graph::new();
                    let vs: Vec<Var> = leaves
                        .iter()
                        .enumerate()
                        .map(|(j, t)| {
                            let mut t = t.clone();
                            if j == li {
                                t.data_mut()[e] += delta;
                            }
                            g2.constant(t)
                        })
                        .collect();
                    let r = build(&mut g2, &vs);
                    g2.value(r).item()
                };
                let numeric = (eval(eps) - eval(-eps)) / (2.0 * eps);
                let a = analytic.data()[e];
                assert!(
                    (a - numeric).abs() <= 1e-6 + 1e-5 * numeric.abs().max(a.abs()),
                    "leaf {li} elem {e}: analytic {a} numeric {numeric}"
                );
            }
        }
    }

    /// Reduces any node to a scalar with fixed weights so every output
    /// element contributes a distinct cotangent.
    fn probe(g: &mut Graph, v: Var) -> Var {
        let w = Tensor::from_fn(g.shape(v), |i| ((i * 7919 % 13) as f64 - 6.0) / 5.0);
        let wv = g.constant(w);
        let prod = g.mul(v, wv);
        g.sum(prod)
    }

    #[test]
    fn conv_and_transpose_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = rand_tensor(&mut rng, &[2, 6, 6]);
        let w = rand_tensor(&mut rng, &[3, 2, 4, 4]);
        let b = rand_tensor(&mut rng, &[3]);
        check(vec![x.clone(), w, b], |g, v| {
            let y = g.conv2d(v[0], v[1], Some(v[2]), 2, 1);
            probe(g, y)
        });
        let w3 = rand_tensor(&mut rng, &[3, 2, 3, 3]);
        check(vec![x.clone(), w3], |g, v| {
            let y = g.conv2d(v[0], v[1], None, 1, 1);
            probe(g, y)
        });
        let wt = rand_tensor(&mut rng, &[2, 3, 2, 2]);
        let bt = rand_tensor(&mut rng, &[3]);
        check(vec![x, wt, bt], |g, v| {
            let y = g.conv_transpose2(v[0], v[1], Some(v[2]));
            probe(g, y)
        });
    }

    #[test]
    fn pointwise_and_norm_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = rand_tensor(&mut rng, &[4, 3, 3]);
        let w = rand_tensor(&mut rng, &[5, 4]);
        let b = rand_tensor(&mut rng, &[5]);
        let gamma = rand_tensor(&mut rng, &[5]);
        let beta = rand_tensor(&mut rng, &[5]);
        let s = Tensor::scalar(0.8944);
        let sb = Tensor::scalar(-0.4472);
        check(vec![x, w, b, gamma, beta, s, sb], |g, v| {
            let y = g.linear(v[0], v[1], Some(v[2]));
            let y = g.layer_norm(y, v[3], v[4], 1e-5);
            let y = g.star_relu(y, v[5], v[6]);
            let y = g.leaky_relu(y, 0.2);
            let p = g.mean_pool(y);
            let p = g.reshape(p, &[1, 5]);
            let p = g.softmax(p);
            probe(g, p)
        });
    }

    #[test]
    fn spectral_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = rand_tensor(&mut rng, &[2, 4, 6]);
        let coef = rand_tensor(&mut rng, &[2, 3]);
        let phi = rand_tensor(&mut rng, &[3, 4, 4, 2]);
        check(vec![x.clone(), coef, phi], |g, v| {
            let s = g.rdft2(v[0]);
            let m = g.spectral_mix(s, v[1], v[2]);
            let y = g.irdft2(m, 6);
            probe(g, y)
        });
        let target = to_complex(rand_tensor(&mut rng, &[2, 4, 4, 2]).data());
        for term in [SpectralTerm::Amplitude, SpectralTerm::Phase] {
            let t = target.clone();
            check(vec![x.clone()], move |g, v| {
                let s = g.rdft2(v[0]);
                g.spectral_l1(s, t.clone(), term)
            });
        }
    }

    #[test]
    fn contrastive_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = rand_tensor(&mut rng, &[3, 8, 8]);
        let other = rand_tensor(&mut rng, &[12, 3]);
        let w = rand_tensor(&mut rng, &[5, 12]);
        check(vec![img, other, w], |g, v| {
            let q = g.gather_patches(v[0], &[(1, 2)], 2);
            let z = g.concat_cols(q, v[1]);
            let z = g.linear(z, v[2], None);
            let z = g.l2_normalize_cols(z);
            g.info_nce(z, 0.5)
        });
    }

    #[test]
    fn perceptual_and_structural_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = rand_tensor(&mut rng, &[2, 3, 3]);
        let b = rand_tensor(&mut rng, &[1, 3, 3]);
        let target = rand_tensor(&mut rng, &[2, 3, 3]);
        check(vec![a, b], move |g, v| {
            let c = g.concat_channels(&[v[0], v[1]]);
            let s = g.slice_channels(c, 1, 2);
            let s = g.weighted_sum(&[(s, 2.0), (v[0], -0.5)]);
            g.perceptual(s, &target)
        });
    }
}
