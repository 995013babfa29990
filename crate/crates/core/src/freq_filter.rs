//! Global dynamic frequency-domain guidance (GDFG).
//!
//! A feature map is moved to the frequency domain with an orthonormal real
//! 2-D DFT, every channel is multiplied by its own convex combination of `N`
//! shared learnable complex filters, and the result is transformed back. The
//! combination weights come from a small coefficient network evaluated on
//! the globally pooled channel descriptors. [`gdfg_block`] wraps the filter
//! in the residual channel-MLP block used throughout the network.

use rand::Rng;

use crate::error::{Error, Result};
use crate::fft;
use crate::graph::{Graph, Var};
use crate::init;
use crate::tensor::Tensor;

/// Default StarReLU scale.
pub const STAR_RELU_SCALE: f64 = 0.8944;
/// Default StarReLU bias.
pub const STAR_RELU_BIAS: f64 = -0.4472;
/// Variance floor of every layer norm.
pub const LN_EPS: f64 = 1e-5;
/// Std of the noise added to the all-ones filter initialization.
pub const PHI_INIT_STD: f64 = 0.02;
/// Default number of base filters.
pub const DEFAULT_FILTERS: usize = 4;
/// Hidden expansion of the block MLP.
pub const MLP_EXPANSION: usize = 2;

/// Real C×H×W activation tensor with finite entries, `H, W ≥ 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap(Tensor);

impl FeatureMap {
    pub fn new(t: Tensor) -> Result<Self> {
        if t.shape().len() != 3 {
            return Err(Error::validation(format!(
                "feature map must be C×H×W, got {:?}",
                t.shape()
            )));
        }
        let (c, h, w) = t.dims3();
        if c < 1 || h < 2 || w < 2 {
            return Err(Error::validation(format!(
                "feature map needs C ≥ 1, H ≥ 2, W ≥ 2, got {c}×{h}×{w}"
            )));
        }
        if !t.is_finite() {
            return Err(Error::NonFinite("feature map"));
        }
        Ok(FeatureMap(t))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.0.dims3()
    }
}

/// Orthonormal half-spectrum, stored as C×H×(W/2+1)×2 `(re, im)` pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumMap {
    data: Tensor,
    width: usize,
}

impl SpectrumMap {
    /// Wraps raw `(re, im)` data for a signal of the given width.
    pub fn from_parts(data: Tensor, width: usize) -> Result<Self> {
        let s = data.shape();
        if s.len() != 4 || s[3] != 2 || s[2] != fft::half_width(width) {
            return Err(Error::validation(format!(
                "spectrum shape {s:?} does not describe a half-spectrum of width {width}"
            )));
        }
        Ok(SpectrumMap { data, width })
    }

    pub fn data(&self) -> &Tensor {
        &self.data
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Bin `(c, row, col)` as `(re, im)`.
    pub fn bin(&self, c: usize, row: usize, col: usize) -> (f64, f64) {
        let s = self.data.shape();
        let i = ((c * s[1] + row) * s[2] + col) * 2;
        (self.data.data()[i], self.data.data()[i + 1])
    }

    /// Energy of the full spectrum, counting each stored column by its
    /// conjugate-symmetry multiplicity.
    pub fn energy(&self) -> f64 {
        let wh = self.data.shape()[2];
        self.data
            .data()
            .chunks_exact(2)
            .enumerate()
            .map(|(i, p)| fft::multiplicity(i % wh, self.width) * (p[0] * p[0] + p[1] * p[1]))
            .sum()
    }
}

pub fn rdft2(x: &FeatureMap) -> SpectrumMap {
    let mut g = Graph::new();
    let v = g.constant(x.tensor().clone());
    let s = g.rdft2(v);
    SpectrumMap {
        data: g.value(s).clone(),
        width: x.dims().2,
    }
}

pub fn irdft2(s: &SpectrumMap, height: usize, width: usize) -> Result<FeatureMap> {
    if s.height() != height || s.data.shape()[2] != fft::half_width(width) {
        return Err(Error::validation(format!(
            "spectrum {:?} cannot be inverted to {height}×{width}",
            s.data.shape()
        )));
    }
    let mut g = Graph::new();
    let v = g.constant(s.data.clone());
    let x = g.irdft2(v, width);
    FeatureMap::new(g.value(x).clone())
}

/// `scale · max(x, 0)² + bias`.
#[inline]
pub fn star_relu(x: f64, scale: f64, bias: f64) -> f64 {
    let r = x.max(0.0);
    scale * r * r + bias
}

/// Coefficient network: layer norm, `W₁`, StarReLU, `W₂`. No biases.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientHead<T> {
    pub ln_gamma: T,
    pub ln_beta: T,
    /// hidden × C
    pub w1: T,
    pub act_scale: T,
    pub act_bias: T,
    /// (N·C) × hidden
    pub w2: T,
}

/// `N` shared complex filters plus the coefficient network that mixes them
/// per channel. `T` is the parameter handle: owned tensors, store ids or
/// graph variables.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank<T = Tensor> {
    /// N × H × (W/2+1) × 2
    pub phi: T,
    pub head: CoefficientHead<T>,
    pub channels: usize,
    pub n_filters: usize,
    pub hidden_dim: usize,
    pub height: usize,
    pub width: usize,
}

/// Two-layer channel MLP with trailing layer norm, applied at every pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockMlp<T = Tensor> {
    pub fc1_w: T,
    pub fc1_b: T,
    pub act_scale: T,
    pub act_bias: T,
    pub fc2_w: T,
    pub fc2_b: T,
    pub ln_gamma: T,
    pub ln_beta: T,
    pub channels: usize,
    pub hidden: usize,
}

/// Coefficient-network width for `channels` inputs.
pub fn hidden_dim(channels: usize) -> usize {
    (channels / 4).max(4)
}

impl<T> FilterBank<T> {
    /// Rebuilds the bank with every parameter passed through `f`, which also
    /// receives a stable field name.
    pub fn map_named<U>(&self, mut f: impl FnMut(&str, &T) -> U) -> FilterBank<U> {
        FilterBank {
            phi: f("phi", &self.phi),
            head: CoefficientHead {
                ln_gamma: f("head.ln_gamma", &self.head.ln_gamma),
                ln_beta: f("head.ln_beta", &self.head.ln_beta),
                w1: f("head.w1", &self.head.w1),
                act_scale: f("head.act_scale", &self.head.act_scale),
                act_bias: f("head.act_bias", &self.head.act_bias),
                w2: f("head.w2", &self.head.w2),
            },
            channels: self.channels,
            n_filters: self.n_filters,
            hidden_dim: self.hidden_dim,
            height: self.height,
            width: self.width,
        }
    }
}

impl<T> BlockMlp<T> {
    pub fn map_named<U>(&self, mut f: impl FnMut(&str, &T) -> U) -> BlockMlp<U> {
        BlockMlp {
            fc1_w: f("fc1_w", &self.fc1_w),
            fc1_b: f("fc1_b", &self.fc1_b),
            act_scale: f("act_scale", &self.act_scale),
            act_bias: f("act_bias", &self.act_bias),
            fc2_w: f("fc2_w", &self.fc2_w),
            fc2_b: f("fc2_b", &self.fc2_b),
            ln_gamma: f("ln_gamma", &self.ln_gamma),
            ln_beta: f("ln_beta", &self.ln_beta),
            channels: self.channels,
            hidden: self.hidden,
        }
    }
}

impl FilterBank<Tensor> {
    /// Near-identity filters (`1 + noise`) for features of `channels × height × width`.
    pub fn init<R: Rng + ?Sized>(
        rng: &mut R,
        channels: usize,
        height: usize,
        width: usize,
        n_filters: usize,
    ) -> Self {
        let wh = fft::half_width(width);
        let mut phi = init::normal(rng, &[n_filters, height, wh, 2], 0.0, PHI_INIT_STD);
        for pair in phi.data_mut().chunks_exact_mut(2) {
            pair[0] += 1.0;
        }
        let e = hidden_dim(channels);
        FilterBank {
            phi,
            head: CoefficientHead {
                ln_gamma: Tensor::full(&[channels], 1.0),
                ln_beta: Tensor::zeros(&[channels]),
                w1: init::fan_in_uniform(rng, &[e, channels], channels),
                act_scale: Tensor::scalar(STAR_RELU_SCALE),
                act_bias: Tensor::scalar(STAR_RELU_BIAS),
                w2: init::normal(rng, &[n_filters * channels, e], 0.0, 0.02),
            },
            channels,
            n_filters,
            hidden_dim: e,
            height,
            width,
        }
    }

    /// Replaces every filter with `value + 0j`.
    pub fn set_constant_filters(&mut self, value: f64) {
        for pair in self.phi.data_mut().chunks_exact_mut(2) {
            pair[0] = value;
            pair[1] = 0.0;
        }
    }

    pub fn bind(&self, g: &mut Graph) -> FilterBank<Var> {
        self.map_named(|_, t| g.param(t.clone()))
    }
}

impl BlockMlp<Tensor> {
    /// Random first layer, zero output layer.
    pub fn init<R: Rng + ?Sized>(rng: &mut R, channels: usize, hidden: usize) -> Self {
        BlockMlp {
            fc1_w: init::fan_in_uniform(rng, &[hidden, channels], channels),
            fc1_b: init::fan_in_uniform(rng, &[hidden], channels),
            act_scale: Tensor::scalar(STAR_RELU_SCALE),
            act_bias: Tensor::scalar(STAR_RELU_BIAS),
            fc2_w: Tensor::zeros(&[channels, hidden]),
            fc2_b: Tensor::zeros(&[channels]),
            ln_gamma: Tensor::full(&[channels], 1.0),
            ln_beta: Tensor::zeros(&[channels]),
            channels,
            hidden,
        }
    }

    pub fn bind(&self, g: &mut Graph) -> BlockMlp<Var> {
        self.map_named(|_, t| g.param(t.clone()))
    }
}

/// Per-channel mixing weights, C×N, rows on the probability simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct MixCoefficients(Tensor);

impl MixCoefficients {
    pub fn new(t: Tensor) -> Result<Self> {
        if t.shape().len() != 2 {
            return Err(Error::validation("mix coefficients must be C×N"));
        }
        let n = t.shape()[1];
        for row in t.data().chunks_exact(n) {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-6 || row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::validation("mix coefficient row is not on the simplex"));
            }
        }
        Ok(MixCoefficients(t))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn row(&self, c: usize) -> &[f64] {
        let n = self.0.shape()[1];
        &self.0.data()[c * n..(c + 1) * n]
    }
}

fn check_channels<T>(x: &FeatureMap, bank: &FilterBank<T>) -> Result<()> {
    let (c, _, _) = x.dims();
    if c != bank.channels {
        return Err(Error::validation(format!(
            "feature map has {c} channels, filter bank expects {}",
            bank.channels
        )));
    }
    Ok(())
}

fn check_resolution<T>(x: &FeatureMap, bank: &FilterBank<T>) -> Result<()> {
    let (_, h, w) = x.dims();
    if (h, w) != (bank.height, bank.width) {
        return Err(Error::validation(format!(
            "feature resolution {h}×{w} does not match filter resolution {}×{}",
            bank.height, bank.width
        )));
    }
    Ok(())
}

/// Graph form of [`mix_coefficients`]; returns a C×N node.
pub fn mix_coefficients_node(g: &mut Graph, x: Var, head: &CoefficientHead<Var>, n_filters: usize) -> Var {
    let c = g.shape(x)[0];
    let pooled = g.mean_pool(x);
    let normed = g.layer_norm(pooled, head.ln_gamma, head.ln_beta, LN_EPS);
    let hidden = g.linear(normed, head.w1, None);
    let hidden = g.star_relu(hidden, head.act_scale, head.act_bias);
    let logits = g.linear(hidden, head.w2, None);
    let logits = g.reshape(logits, &[c, n_filters]);
    g.softmax(logits)
}

/// Graph form of [`dynamic_filter_with`]: `irdft2(Σᵢ coefᵢ·Φᵢ ⊙ rdft2(x))`.
pub fn spectral_filter_node(g: &mut Graph, x: Var, coef: Var, phi: Var) -> Var {
    let w = g.shape(x)[2];
    let spec = g.rdft2(x);
    let mixed = g.spectral_mix(spec, coef, phi);
    g.irdft2(mixed, w)
}

pub fn dynamic_filter_node(g: &mut Graph, x: Var, bank: &FilterBank<Var>) -> Var {
    let coef = mix_coefficients_node(g, x, &bank.head, bank.n_filters);
    spectral_filter_node(g, x, coef, bank.phi)
}

/// `LN(MLP(r)) + r`, shared by the GDFG block and its filter-free ablation.
pub fn residual_mlp_node(g: &mut Graph, r: Var, mlp: &BlockMlp<Var>) -> Var {
    let h = g.linear(r, mlp.fc1_w, Some(mlp.fc1_b));
    let h = g.star_relu(h, mlp.act_scale, mlp.act_bias);
    let h = g.linear(h, mlp.fc2_w, Some(mlp.fc2_b));
    let h = g.layer_norm(h, mlp.ln_gamma, mlp.ln_beta, LN_EPS);
    g.add(h, r)
}

pub fn gdfg_node(g: &mut Graph, x: Var, bank: &FilterBank<Var>, mlp: &BlockMlp<Var>) -> Var {
    let filtered = dynamic_filter_node(g, x, bank);
    let r = g.add(filtered, x);
    residual_mlp_node(g, r, mlp)
}

/// Per-channel softmax weights over the bank's filters.
pub fn mix_coefficients(x: &FeatureMap, bank: &FilterBank) -> Result<MixCoefficients> {
    check_channels(x, bank)?;
    let mut g = Graph::new();
    let xv = g.constant(x.tensor().clone());
    let head = bank.head.clone();
    let hv = CoefficientHead {
        ln_gamma: g.constant(head.ln_gamma),
        ln_beta: g.constant(head.ln_beta),
        w1: g.constant(head.w1),
        act_scale: g.constant(head.act_scale),
        act_bias: g.constant(head.act_bias),
        w2: g.constant(head.w2),
    };
    let t = mix_coefficients_node(&mut g, xv, &hv, bank.n_filters);
    Ok(MixCoefficients(g.value(t).clone()))
}

/// Filters `x` with coefficients computed from `x` itself.
pub fn dynamic_filter(x: &FeatureMap, bank: &FilterBank) -> Result<FeatureMap> {
    let coef = mix_coefficients(x, bank)?;
    dynamic_filter_with(x, &coef, bank)
}

/// Filters `x` with externally pinned coefficients.
pub fn dynamic_filter_with(x: &FeatureMap, coef: &MixCoefficients, bank: &FilterBank) -> Result<FeatureMap> {
    check_channels(x, bank)?;
    check_resolution(x, bank)?;
    if coef.0.shape() != [bank.channels, bank.n_filters] {
        return Err(Error::validation("coefficient shape does not match the filter bank"));
    }
    let mut g = Graph::new();
    let xv = g.constant(x.tensor().clone());
    let cv = g.constant(coef.0.clone());
    let pv = g.constant(bank.phi.clone());
    let out = spectral_filter_node(&mut g, xv, cv, pv);
    FeatureMap::new(g.value(out).clone())
}

/// Residual GDFG block: `r = dynamic_filter(x) + x`, `out = LN(MLP(r)) + r`.
pub fn gdfg_block(x: &FeatureMap, bank: &FilterBank, mlp: &BlockMlp) -> Result<FeatureMap> {
    check_channels(x, bank)?;
    check_resolution(x, bank)?;
    if mlp.channels != bank.channels {
        return Err(Error::validation("block MLP width does not match the filter bank"));
    }
    let mut g = Graph::new();
    let xv = g.constant(x.tensor().clone());
    let bv = bank.bind(&mut g);
    let mv = mlp.bind(&mut g);
    let out = gdfg_node(&mut g, xv, &bv, &mv);
    FeatureMap::new(g.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_map(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> FeatureMap {
        FeatureMap::new(init::uniform(rng, &[c, h, w], 1.0)).unwrap()
    }

    #[test]
    fn constant_image_concentrates_in_dc() {
        let x = FeatureMap::new(Tensor::full(&[1, 4, 6], 0.7)).unwrap();
        let s = rdft2(&x);
        let (re, im) = s.bin(0, 0, 0);
        assert_abs_diff_eq!(re, 0.7 * 24f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(im, 0.0, epsilon = 1e-12);
        let rest: f64 = s.data().data()[2..].iter().map(|v| v.abs()).sum();
        assert!(rest < 1e-12);
    }

    #[test]
    fn zero_image_has_zero_spectrum() {
        let x = FeatureMap::new(Tensor::zeros(&[2, 4, 4])).unwrap();
        assert!(rdft2(&x).data().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn parseval_on_random_3x16x16() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_map(&mut rng, 3, 16, 16);
        let spatial = x.tensor().sum_sq();
        let spectral = rdft2(&x).energy();
        assert!((spatial - spectral).abs() / spatial < 1e-5);
    }

    #[test]
    fn non_finite_feature_map_rejected() {
        let mut t = Tensor::zeros(&[1, 4, 4]);
        t.data_mut()[5] = f64::NAN;
        assert!(matches!(FeatureMap::new(t), Err(Error::NonFinite(_))));
    }

    #[test]
    fn round_trip_2x8x8() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = random_map(&mut rng, 2, 8, 8);
        let back = irdft2(&rdft2(&x), 8, 8).unwrap();
        assert!(back.tensor().max_abs_diff(x.tensor()) < 1e-5);
    }

    #[test]
    fn irdft2_rejects_wrong_shape() {
        let x = FeatureMap::new(Tensor::zeros(&[1, 4, 8])).unwrap();
        let s = rdft2(&x);
        assert!(irdft2(&s, 4, 6).is_err());
        assert!(irdft2(&s, 5, 8).is_err());
    }

    #[test]
    fn dc_only_spectrum_gives_constant() {
        let (h, w) = (4, 6);
        let mut data = Tensor::zeros(&[1, h, fft::half_width(w), 2]);
        data.data_mut()[0] = 3.0;
        let s = SpectrumMap::from_parts(data, w).unwrap();
        let x = irdft2(&s, h, w).unwrap();
        let expect = 3.0 / ((h * w) as f64).sqrt();
        assert!(x.tensor().data().iter().all(|v| (v - expect).abs() < 1e-12));
    }

    #[test]
    fn single_bin_gives_cosine_grating() {
        use std::f64::consts::PI;
        let (h, w) = (8, 8);
        let (ky, kx) = (1usize, 2usize);
        let wh = fft::half_width(w);
        let mut data = Tensor::zeros(&[1, h, wh, 2]);
        data.data_mut()[(ky * wh + kx) * 2] = 1.0;
        let x = irdft2(&SpectrumMap::from_parts(data, w).unwrap(), h, w).unwrap();
        // Direct evaluation of the inverse sum over the Hermitian pair.
        let norm = 1.0 / ((h * w) as f64).sqrt();
        for y in 0..h {
            for xx in 0..w {
                let th = 2.0 * PI * ((ky * y) as f64 / h as f64 + (kx * xx) as f64 / w as f64);
                let expect = 2.0 * norm * th.cos();
                assert_abs_diff_eq!(x.tensor().data()[y * w + xx], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn star_relu_values() {
        assert_eq!(star_relu(-1.0, 1.0, 0.0), 0.0);
        assert_abs_diff_eq!(star_relu(2.0, 0.8944, -0.4472), 3.1304, epsilon = 1e-12);
        assert_eq!(star_relu(0.0, 0.8944, -0.4472), -0.4472);
    }

    #[test]
    fn zero_w2_gives_uniform_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut bank = FilterBank::init(&mut rng, 3, 8, 8, 4);
        bank.head.w2 = Tensor::zeros(bank.head.w2.shape());
        let x = random_map(&mut rng, 3, 8, 8);
        let t = mix_coefficients(&x, &bank).unwrap();
        assert!(t.tensor().data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn hand_set_logits_softmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut bank = FilterBank::init(&mut rng, 1, 4, 4, 2);
        // A single channel normalizes to the shift, so the logits are set by
        // beta, W1 and W2 alone.
        bank.head.ln_beta = Tensor::from_vec(&[1], vec![1.0]);
        bank.head.w1 = Tensor::from_vec(&[4, 1], vec![1.0, 0.0, 0.0, 0.0]);
        bank.head.act_scale = Tensor::scalar(1.0);
        bank.head.act_bias = Tensor::scalar(0.0);
        bank.head.w2 = Tensor::from_vec(&[2, 4], vec![3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let x = random_map(&mut rng, 1, 4, 4);
        let t = mix_coefficients(&x, &bank).unwrap();
        assert_abs_diff_eq!(t.row(0)[0], 0.8808, epsilon = 1e-4);
        assert_abs_diff_eq!(t.row(0)[1], 0.1192, epsilon = 1e-4);
    }

    #[test]
    fn channel_mismatch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let bank = FilterBank::init(&mut rng, 4, 8, 8, 4);
        let x = random_map(&mut rng, 3, 8, 8);
        assert!(mix_coefficients(&x, &bank).is_err());
        let y = random_map(&mut rng, 4, 8, 6);
        assert!(dynamic_filter(&y, &bank).is_err());
    }

    #[test]
    fn identity_and_annihilating_filters() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let x = random_map(&mut rng, 3, 8, 8);
        let mut bank = FilterBank::init(&mut rng, 3, 8, 8, 4);
        bank.set_constant_filters(1.0);
        let y = dynamic_filter(&x, &bank).unwrap();
        assert!(y.tensor().max_abs_diff(x.tensor()) < 1e-5);
        bank.set_constant_filters(0.0);
        let z = dynamic_filter(&x, &bank).unwrap();
        assert!(z.tensor().data().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn dc_pass_filter_halves_channel_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = random_map(&mut rng, 2, 8, 8);
        let mut bank = FilterBank::init(&mut rng, 2, 8, 8, 2);
        bank.set_constant_filters(0.0);
        bank.phi.data_mut()[0] = 1.0;
        bank.head.w2 = Tensor::zeros(bank.head.w2.shape());
        let y = dynamic_filter(&x, &bank).unwrap();
        for c in 0..2 {
            let mean = x.tensor().channel(c).iter().sum::<f64>() / 64.0;
            for &v in y.tensor().channel(c) {
                assert_abs_diff_eq!(v, 0.5 * mean, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn identity_block_doubles_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let x = random_map(&mut rng, 4, 8, 8);
        let mut bank = FilterBank::init(&mut rng, 4, 8, 8, 4);
        bank.set_constant_filters(1.0);
        let mlp = BlockMlp::init(&mut rng, 4, 8);
        let y = gdfg_block(&x, &bank, &mlp).unwrap();
        let twice = x.tensor().map(|v| 2.0 * v);
        assert!(y.tensor().max_abs_diff(&twice) < 1e-5);

        let random_bank = FilterBank::init(&mut rng, 4, 8, 8, 4);
        let mut mlp = mlp;
        mlp.fc2_w = init::uniform(&mut rng, &[4, 8], 0.3);
        let z = gdfg_block(&x, &random_bank, &mlp).unwrap();
        assert_eq!(z.dims(), (4, 8, 8));
        assert!(z.tensor().is_finite());
    }
}
