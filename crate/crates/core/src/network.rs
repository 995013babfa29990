//! U-shaped encoder / bottleneck / decoder built from GDFG blocks.
//!
//! ```text
//! image ─ embed ─ [GDFG ─ down] × S ─ GDFG ─ [up ─ cat(skip) ─ GDFG ─ proj] × S ─ head
//! ```
//!
//! Channels double at every downsampling step. Skips carry the output of
//! each encoder's GDFG block (before downsampling) to the decoder at the same
//! resolution. The 3×3 head emits six channels: a correction that is added
//! to the input image to form the restored image, and the predicted flare.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::freq_filter::{self, BlockMlp, FilterBank, MLP_EXPANSION};
use crate::graph::{Graph, Var};
use crate::init;
use crate::params::{BoundParams, ParamId, ParamStore};
use crate::tensor::Tensor;

pub const LEAKY_SLOPE: f64 = 0.2;
pub const INPUT_CHANNELS: usize = 3;
pub const OUTPUT_CHANNELS: usize = 6;

pub type ModelParams = ParamStore;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub stages: usize,
    pub base_channels: usize,
    pub n_filters: usize,
    pub blocks_per_stage: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            stages: 2,
            base_channels: 8,
            n_filters: freq_filter::DEFAULT_FILTERS,
            blocks_per_stage: 1,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stages < 1 {
            return Err(Error::Config("stages must be at least 1".into()));
        }
        if self.base_channels < 4 {
            return Err(Error::Config("base_channels must be at least 4".into()));
        }
        if !(1..=8).contains(&self.n_filters) {
            return Err(Error::Config("n_filters must lie in 1..=8".into()));
        }
        if self.blocks_per_stage < 1 {
            return Err(Error::Config("blocks_per_stage must be at least 1".into()));
        }
        Ok(())
    }

    /// Required divisor of the input height and width.
    pub fn stride(&self) -> usize {
        1 << self.stages
    }

    pub fn check_resolution(&self, height: usize, width: usize) -> Result<()> {
        let m = self.stride();
        if height % m != 0 || height == 0 {
            return Err(Error::Config(format!(
                "height {height} is not a positive multiple of {m} (2^stages)"
            )));
        }
        if width % m != 0 || width == 0 {
            return Err(Error::Config(format!(
                "width {width} is not a positive multiple of {m} (2^stages)"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum Block {
    Gdfg {
        bank: FilterBank<ParamId>,
        mlp: BlockMlp<ParamId>,
    },
    /// Filter-free ablation: `LN(MLP(x)) + x` with a widened hidden layer.
    Plain { mlp: BlockMlp<ParamId> },
}

#[derive(Clone, Debug)]
struct Encoder {
    blocks: Vec<Block>,
    down_w: ParamId,
    down_b: ParamId,
}

#[derive(Clone, Debug)]
struct Decoder {
    up_w: ParamId,
    up_b: ParamId,
    blocks: Vec<Block>,
    proj_w: ParamId,
    proj_b: ParamId,
}

/// Network topology; the weights live in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Network {
    config: NetworkConfig,
    height: usize,
    width: usize,
    gdfg_enabled: bool,
    embed_w: ParamId,
    embed_b: ParamId,
    encoders: Vec<Encoder>,
    bottleneck: Vec<Block>,
    /// Deepest first.
    decoders: Vec<Decoder>,
    out_w: ParamId,
    out_b: ParamId,
}

/// Parameter count of a GDFG block on `c` channels at `h × w`.
pub fn gdfg_block_params(c: usize, h: usize, w: usize, n: usize) -> usize {
    let e = freq_filter::hidden_dim(c);
    let hidden = MLP_EXPANSION * c;
    let phi = n * h * fft::half_width(w) * 2;
    let head = 2 * c + e * c + 2 + n * c * e;
    phi + head + plain_block_params(c, hidden)
}

fn plain_block_params(c: usize, hidden: usize) -> usize {
    c * hidden + hidden + 2 + hidden * c + c + 2 * c
}

/// Hidden width that gives the filter-free block the same parameter budget
/// as a GDFG block at the same position.
pub fn matched_plain_hidden(c: usize, h: usize, w: usize, n: usize) -> usize {
    let target = gdfg_block_params(c, h, w, n) as f64;
    let hidden = (target - (3 * c + 2) as f64) / (2 * c + 1) as f64;
    (hidden.round() as usize).max(1)
}

fn add_block<R: Rng + ?Sized>(
    store: &mut ParamStore,
    rng: &mut R,
    prefix: &str,
    c: usize,
    h: usize,
    w: usize,
    n: usize,
    gdfg: bool,
) -> Block {
    if gdfg {
        let bank = FilterBank::init(rng, c, h, w, n);
        let mlp = BlockMlp::init(rng, c, MLP_EXPANSION * c);
        Block::Gdfg {
            bank: bank.map_named(|name, t| store.add(format!("{prefix}.bank.{name}"), t.clone())),
            mlp: mlp.map_named(|name, t| store.add(format!("{prefix}.mlp.{name}"), t.clone())),
        }
    } else {
        let mlp = BlockMlp::init(rng, c, matched_plain_hidden(c, h, w, n));
        Block::Plain {
            mlp: mlp.map_named(|name, t| store.add(format!("{prefix}.mlp.{name}"), t.clone())),
        }
    }
}

/// Resamples half-spectrum filters to a new feature resolution by bilinear
/// interpolation over normalized frequency. Rows are periodic in signed
/// frequency; columns run from DC to Nyquist and are clamped.
pub fn resample_filters(phi: &Tensor, height: usize, width: usize) -> Tensor {
    let s = phi.shape();
    let (n, sh, swh) = (s[0], s[1], s[2]);
    let wh = fft::half_width(width);
    let sw_nyq = (swh - 1).max(1) as f64;
    let mut out = Tensor::zeros(&[n, height, wh, 2]);
    let src = phi.data();
    let dst = out.data_mut();
    for row in 0..height {
        let signed = if row <= height / 2 { row as f64 } else { row as f64 - height as f64 };
        let fy = signed / height as f64 * sh as f64;
        let y0 = fy.floor();
        let ty = fy - y0;
        let r0 = (y0 as isize).rem_euclid(sh as isize) as usize;
        let r1 = (y0 as isize + 1).rem_euclid(sh as isize) as usize;
        for col in 0..wh {
            let fx = if wh > 1 { col as f64 / (wh - 1) as f64 * sw_nyq } else { 0.0 };
            let x0 = fx.floor().min((swh - 1) as f64);
            let tx = fx - x0;
            let c0 = x0 as usize;
            let c1 = (c0 + 1).min(swh - 1);
            for f in 0..n {
                for part in 0..2 {
                    let at = |r: usize, c: usize| src[((f * sh + r) * swh + c) * 2 + part];
                    let v = (1.0 - ty) * ((1.0 - tx) * at(r0, c0) + tx * at(r0, c1))
                        + ty * ((1.0 - tx) * at(r1, c0) + tx * at(r1, c1));
                    dst[((f * height + row) * wh + col) * 2 + part] = v;
                }
            }
        }
    }
    out
}

impl Network {
    /// Registers freshly initialized parameters in `store` for inputs of
    /// `height × width`.
    pub fn new<R: Rng + ?Sized>(
        config: &NetworkConfig,
        height: usize,
        width: usize,
        gdfg_enabled: bool,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        config.check_resolution(height, width)?;
        let c0 = config.base_channels;
        let n = config.n_filters;
        let embed_w = store.add("embed.w", init::fan_in_uniform(rng, &[c0, INPUT_CHANNELS, 3, 3], INPUT_CHANNELS * 9));
        let embed_b = store.add("embed.b", init::fan_in_uniform(rng, &[c0], INPUT_CHANNELS * 9));

        let mut encoders = Vec::new();
        for s in 0..config.stages {
            let c = c0 << s;
            let (h, w) = (height >> s, width >> s);
            let blocks = (0..config.blocks_per_stage)
                .map(|b| add_block(store, rng, &format!("enc{s}.block{b}"), c, h, w, n, gdfg_enabled))
                .collect();
            let down_w = store.add(format!("enc{s}.down.w"), init::fan_in_uniform(rng, &[2 * c, c, 4, 4], c * 16));
            let down_b = store.add(format!("enc{s}.down.b"), init::fan_in_uniform(rng, &[2 * c], c * 16));
            encoders.push(Encoder { blocks, down_w, down_b });
        }

        let cb = c0 << config.stages;
        let (hb, wb) = (height >> config.stages, width >> config.stages);
        let bottleneck = (0..config.blocks_per_stage)
            .map(|b| add_block(store, rng, &format!("bottleneck.block{b}"), cb, hb, wb, n, gdfg_enabled))
            .collect();

        let mut decoders = Vec::new();
        for s in (0..config.stages).rev() {
            let c = c0 << s;
            let (h, w) = (height >> s, width >> s);
            let up_w = store.add(format!("dec{s}.up.w"), init::fan_in_uniform(rng, &[2 * c, c, 2, 2], c * 4));
            let up_b = store.add(format!("dec{s}.up.b"), init::fan_in_uniform(rng, &[c], c * 4));
            let blocks = (0..config.blocks_per_stage)
                .map(|b| add_block(store, rng, &format!("dec{s}.block{b}"), 2 * c, h, w, n, gdfg_enabled))
                .collect();
            let proj_w = store.add(format!("dec{s}.proj.w"), init::fan_in_uniform(rng, &[c, 2 * c], 2 * c));
            let proj_b = store.add(format!("dec{s}.proj.b"), init::fan_in_uniform(rng, &[c], 2 * c));
            decoders.push(Decoder {
                up_w,
                up_b,
                blocks,
                proj_w,
                proj_b,
            });
        }

        let out_w = store.add("out.w", init::fan_in_uniform(rng, &[OUTPUT_CHANNELS, c0, 3, 3], c0 * 9));
        let out_b = store.add("out.b", init::fan_in_uniform(rng, &[OUTPUT_CHANNELS], c0 * 9));

        Ok(Network {
            config: config.clone(),
            height,
            width,
            gdfg_enabled,
            embed_w,
            embed_b,
            encoders,
            bottleneck,
            decoders,
            out_w,
            out_b,
        })
    }

    /// Rebuilds the topology for an existing store (e.g. a loaded checkpoint),
    /// checking that every parameter is present with the expected shape.
    pub fn attach(
        config: &NetworkConfig,
        height: usize,
        width: usize,
        gdfg_enabled: bool,
        store: &ParamStore,
    ) -> Result<Self> {
        let mut fresh = ParamStore::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let net = Network::new(config, height, width, gdfg_enabled, &mut fresh, &mut rng)?;
        for (name, t) in fresh.iter() {
            match store.by_name(name) {
                Some(s) if s.shape() == t.shape() => {}
                Some(s) => {
                    return Err(Error::Checkpoint(format!(
                        "parameter {name} has shape {:?}, expected {:?}",
                        s.shape(),
                        t.shape()
                    )))
                }
                None => return Err(Error::Checkpoint(format!("missing parameter {name}"))),
            }
            if store.id(name) != fresh.id(name) {
                return Err(Error::Checkpoint(format!("parameter {name} is out of order")));
            }
        }
        Ok(net)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn gdfg_enabled(&self) -> bool {
        self.gdfg_enabled
    }

    /// Scalar parameter count of the network (excluding any auxiliary heads
    /// sharing the store).
    pub fn param_count(&self, store: &ParamStore) -> usize {
        ["embed.", "enc", "bottleneck.", "dec", "out."]
            .iter()
            .map(|p| store.count_with_prefix(p))
            .sum()
    }

    fn block_node(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        bound: &BoundParams,
        block: &Block,
        x: Var,
    ) -> Var {
        match block {
            Block::Gdfg { bank, mlp } => {
                let (_, h, w) = g.value(x).dims3();
                let mut bv = bank.map_named(|_, &id| bound.var(id));
                if (h, w) != (bank.height, bank.width) {
                    bv.phi = g.constant(resample_filters(store.get(bank.phi), h, w));
                }
                let mv = mlp.map_named(|_, &id| bound.var(id));
                freq_filter::gdfg_node(g, x, &bv, &mv)
            }
            Block::Plain { mlp } => {
                let mv = mlp.map_named(|_, &id| bound.var(id));
                freq_filter::residual_mlp_node(g, x, &mv)
            }
        }
    }

    /// 3×3 convolution with LeakyReLU: 3×H×W → C₀×H×W.
    pub fn embed_node(&self, g: &mut Graph, bound: &BoundParams, image: Var) -> Var {
        let y = g.conv2d(image, bound.var(self.embed_w), Some(bound.var(self.embed_b)), 1, 1);
        g.leaky_relu(y, LEAKY_SLOPE)
    }

    /// Encoder `stage`: GDFG block(s), then 4×4 stride-2 convolution. Returns
    /// `(downsampled, skip)`.
    pub fn encoder_node(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        bound: &BoundParams,
        stage: usize,
        x: Var,
    ) -> (Var, Var) {
        let enc = &self.encoders[stage];
        let mut h = x;
        for b in &enc.blocks {
            h = self.block_node(g, store, bound, b, h);
        }
        let down = g.conv2d(h, bound.var(enc.down_w), Some(bound.var(enc.down_b)), 2, 1);
        (down, h)
    }

    pub fn bottleneck_node(&self, g: &mut Graph, store: &ParamStore, bound: &BoundParams, x: Var) -> Var {
        let mut h = x;
        for b in &self.bottleneck {
            h = self.block_node(g, store, bound, b, h);
        }
        h
    }

    /// Decoder at encoder depth `stage`: transposed conv, concatenation with
    /// `skip`, GDFG block(s), 1×1 projection back to the skip's width.
    pub fn decoder_node(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        bound: &BoundParams,
        stage: usize,
        d_in: Var,
        skip: Var,
    ) -> Var {
        let dec = &self.decoders[self.config.stages - 1 - stage];
        let up = g.conv_transpose2(d_in, bound.var(dec.up_w), Some(bound.var(dec.up_b)));
        let mut h = g.concat_channels(&[up, skip]);
        for b in &dec.blocks {
            h = self.block_node(g, store, bound, b, h);
        }
        g.linear(h, bound.var(dec.proj_w), Some(bound.var(dec.proj_b)))
    }

    /// Full pipeline. Returns unclamped `(restored, flare)` nodes.
    pub fn forward_node(&self, g: &mut Graph, store: &ParamStore, bound: &BoundParams, image: Var) -> (Var, Var) {
        let mut h = self.embed_node(g, bound, image);
        let mut skips = Vec::with_capacity(self.config.stages);
        for s in 0..self.config.stages {
            let (down, skip) = self.encoder_node(g, store, bound, s, h);
            skips.push(skip);
            h = down;
        }
        h = self.bottleneck_node(g, store, bound, h);
        for s in (0..self.config.stages).rev() {
            h = self.decoder_node(g, store, bound, s, h, skips[s]);
        }
        let out = g.conv2d(h, bound.var(self.out_w), Some(bound.var(self.out_b)), 1, 1);
        let correction = g.slice_channels(out, 0, 3);
        let flare = g.slice_channels(out, 3, 3);
        let restored = g.add(image, correction);
        (restored, flare)
    }

    pub fn check_input(&self, image: &Tensor) -> Result<()> {
        if image.shape().len() != 3 || image.shape()[0] != INPUT_CHANNELS {
            return Err(Error::validation(format!(
                "network input must be 3×H×W, got {:?}",
                image.shape()
            )));
        }
        let (_, h, w) = image.dims3();
        self.config.check_resolution(h, w)?;
        if !image.is_finite() {
            return Err(Error::NonFinite("network input"));
        }
        Ok(())
    }

    /// Inference without gradient bookkeeping: `(restored, flare)`, unclamped.
    pub fn forward(&self, store: &ParamStore, image: &Tensor) -> Result<(Tensor, Tensor)> {
        self.check_input(image)?;
        let mut g = Graph::new();
        let bound = store.bind(&mut g);
        let x = g.constant(image.clone());
        let (r, f) = self.forward_node(&mut g, store, &bound, x);
        Ok((g.value(r).clone(), g.value(f).clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> (Network, ParamStore) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Network::new(&NetworkConfig::default(), 32, 32, true, &mut store, &mut rng).unwrap();
        (net, store)
    }

    #[test]
    fn rejects_indivisible_resolution() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = Network::new(&NetworkConfig::default(), 30, 32, true, &mut store, &mut rng).unwrap_err();
        assert!(err.to_string().contains("height 30"), "{err}");
        let (net, store) = toy();
        let err = net.forward(&store, &Tensor::zeros(&[3, 32, 34])).unwrap_err();
        assert!(err.to_string().contains("width 34"), "{err}");
    }

    #[test]
    fn output_shapes_match_input() {
        let (net, store) = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = init::uniform(&mut rng, &[3, 32, 32], 0.5).map(|v| v + 0.5);
        let (r, f) = net.forward(&store, &img).unwrap();
        assert_eq!(r.shape(), &[3, 32, 32]);
        assert_eq!(f.shape(), &[3, 32, 32]);
        assert!(r.is_finite() && f.is_finite());
        // Other multiples of 2^stages run with resampled filters.
        let img = Tensor::full(&[3, 16, 24], 0.3);
        let (r, _) = net.forward(&store, &img).unwrap();
        assert_eq!(r.shape(), &[3, 16, 24]);
    }

    #[test]
    fn resampling_to_same_resolution_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let phi = init::uniform(&mut rng, &[2, 8, 5, 2], 1.0);
        let same = resample_filters(&phi, 8, 8);
        assert!(same.max_abs_diff(&phi) < 1e-12);
        let constant = Tensor::full(&[1, 8, 5, 2], 0.5);
        let up = resample_filters(&constant, 16, 12);
        assert!(up.data().iter().all(|&v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn attach_validates_store() {
        let (_, store) = toy();
        assert!(Network::attach(&NetworkConfig::default(), 32, 32, true, &store).is_ok());
        assert!(Network::attach(&NetworkConfig::default(), 64, 64, true, &store).is_err());
        assert!(Network::attach(&NetworkConfig::default(), 32, 32, false, &store).is_err());
    }

    #[test]
    fn plain_block_budget_matches() {
        for &(c, h, w) in &[(8, 64, 64), (16, 32, 32), (32, 16, 16)] {
            let gd = gdfg_block_params(c, h, w, 4) as f64;
            let plain = plain_block_params(c, matched_plain_hidden(c, h, w, 4)) as f64;
            assert!((gd - plain).abs() / gd < 0.01);
        }
    }
}
