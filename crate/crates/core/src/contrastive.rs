//! Light-source-centered patch contrast: patch sampling around the light
//! mask, a projection head onto the unit sphere and the InfoNCE loss.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::freq_filter::{STAR_RELU_BIAS, STAR_RELU_SCALE};
use crate::graph::{Graph, Var};
use crate::init;
use crate::mask::Mask;
use crate::params::{BoundParams, ParamId, ParamStore};
use crate::tensor::Tensor;

pub const DEFAULT_NEGATIVES: usize = 16;
pub const DEFAULT_PROJ_DIM: usize = 128;
pub const DEFAULT_TAU: f64 = 0.07;
/// Negatives must overlap the query patch by strictly less than this
/// fraction of its area.
pub const MAX_NEGATIVE_OVERLAP: f64 = 0.25;
pub const PARAM_PREFIX: &str = "ldg";

/// Default patch side for a square crop of side `image_size`.
pub fn default_patch_size(image_size: usize) -> usize {
    (image_size / 16).max(1)
}

/// Top-left `(row, col)` locations of one query/positive pair and its negatives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchCoords {
    pub patch_size: usize,
    /// Shared by the query (restored image) and the positive (reference).
    pub query: (usize, usize),
    /// Locations in the reference image.
    pub negatives: Vec<(usize, usize)>,
}

impl PatchCoords {
    /// Reference-side locations in loss column order: positive, then negatives.
    pub fn reference_columns(&self) -> Vec<(usize, usize)> {
        std::iter::once(self.query).chain(self.negatives.iter().copied()).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchSet {
    pub query: Tensor,
    pub positive: Tensor,
    pub negatives: Vec<Tensor>,
    pub patch_size: usize,
    pub coords: PatchCoords,
}

/// Overlapping area of two `p×p` patches at the given top-left corners.
pub fn overlap_area(a: (usize, usize), b: (usize, usize), p: usize) -> usize {
    let dy = a.0.abs_diff(b.0);
    let dx = a.1.abs_diff(b.1);
    p.saturating_sub(dy) * p.saturating_sub(dx)
}

fn admissible_negative(query: (usize, usize), cand: (usize, usize), p: usize) -> bool {
    (overlap_area(query, cand, p) as f64) < MAX_NEGATIVE_OVERLAP * (p * p) as f64
}

/// First pixel (raster order) of maximal channel-mean intensity.
fn brightest_pixel(image: &Tensor) -> (usize, usize) {
    let (c, h, w) = image.dims3();
    let mut best = (0, 0);
    let mut best_v = f64::NEG_INFINITY;
    for y in 0..h {
        for x in 0..w {
            let v: f64 = (0..c).map(|ch| image.data()[ch * h * w + y * w + x]).sum();
            if v > best_v {
                best_v = v;
                best = (y, x);
            }
        }
    }
    best
}

/// Samples patch locations. The query is centered (as far as the image
/// bounds allow) on a uniformly chosen light-mask pixel; negatives are drawn
/// uniformly from locations overlapping it by < 25% area, without
/// replacement when enough exist. An empty mask falls back to the brightest
/// pixel of `reference`.
pub fn sample_coords(
    reference: &Tensor,
    light_mask: &Mask,
    n_negatives: usize,
    patch_size: usize,
    seed: u64,
) -> Result<PatchCoords> {
    if reference.shape().len() != 3 {
        return Err(Error::validation("patch sampling needs a C×H×W image"));
    }
    let (_, h, w) = reference.dims3();
    if (light_mask.height(), light_mask.width()) != (h, w) {
        return Err(Error::validation(format!(
            "light mask is {}×{}, image is {h}×{w}",
            light_mask.height(),
            light_mask.width()
        )));
    }
    let p = patch_size;
    if p == 0 || p > h || p > w {
        return Err(Error::validation(format!("patch size {p} does not fit a {h}×{w} image")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<(usize, usize)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (y, x)))
        .filter(|&(y, x)| light_mask.get(y, x))
        .collect();
    let (cy, cx) = if centers.is_empty() {
        brightest_pixel(reference)
    } else {
        centers[rng.gen_range(0..centers.len())]
    };
    let query = (
        cy.saturating_sub(p / 2).min(h - p),
        cx.saturating_sub(p / 2).min(w - p),
    );

    let candidates: Vec<(usize, usize)> = (0..=h - p)
        .flat_map(|y| (0..=w - p).map(move |x| (y, x)))
        .filter(|&c| admissible_negative(query, c, p))
        .collect();
    if candidates.is_empty() && n_negatives > 0 {
        return Err(Error::validation(format!(
            "no negative location for patch {p} in a {h}×{w} image"
        )));
    }
    let negatives = if candidates.len() >= n_negatives {
        index::sample(&mut rng, candidates.len(), n_negatives)
            .into_iter()
            .map(|i| candidates[i])
            .collect()
    } else {
        (0..n_negatives)
            .map(|_| candidates[rng.gen_range(0..candidates.len())])
            .collect()
    };
    Ok(PatchCoords {
        patch_size: p,
        query,
        negatives,
    })
}

pub fn sample_patches(
    restored: &Tensor,
    reference: &Tensor,
    light_mask: &Mask,
    n_negatives: usize,
    patch_size: usize,
    seed: u64,
) -> Result<PatchSet> {
    if restored.shape() != reference.shape() {
        return Err(Error::validation(format!(
            "restored {:?} and reference {:?} differ in shape",
            restored.shape(),
            reference.shape()
        )));
    }
    let coords = sample_coords(reference, light_mask, n_negatives, patch_size, seed)?;
    let cut = |img: &Tensor, (t, l): (usize, usize)| img.crop(t, l, patch_size, patch_size);
    Ok(PatchSet {
        query: cut(restored, coords.query),
        positive: cut(reference, coords.query),
        negatives: coords.negatives.iter().map(|&c| cut(reference, c)).collect(),
        patch_size,
        coords,
    })
}

pub fn cosine_sim(z1: &[f64], z2: &[f64]) -> Result<f64> {
    if z1.len() != z2.len() {
        return Err(Error::validation(format!(
            "vectors of length {} and {}",
            z1.len(),
            z2.len()
        )));
    }
    let n1 = z1.iter().map(|v| v * v).sum::<f64>().sqrt();
    let n2 = z2.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::validation("cosine similarity of a zero vector"));
    }
    let dot: f64 = z1.iter().zip(z2).map(|(a, b)| a * b).sum();
    Ok((dot / (n1 * n2)).clamp(-1.0, 1.0))
}

/// `−log softmax` of the positive logit among `[pos, negs…] / tau`, via
/// log-sum-exp.
pub fn info_nce(pos_sim: f64, neg_sims: &[f64], tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::validation(format!("temperature must be positive, got {tau}")));
    }
    let logits: Vec<f64> = std::iter::once(pos_sim)
        .chain(neg_sims.iter().copied())
        .map(|s| s / tau)
        .collect();
    Ok(crate::graph::neg_log_softmax_first(&logits).max(0.0))
}

/// flatten → linear → StarReLU → linear → L2 normalize.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionHead<T = Tensor> {
    /// K × D
    pub w1: T,
    pub b1: T,
    pub act_scale: T,
    pub act_bias: T,
    /// K × K
    pub w2: T,
    pub b2: T,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl<T> ProjectionHead<T> {
    pub fn map_named<U>(&self, mut f: impl FnMut(&str, &T) -> U) -> ProjectionHead<U> {
        ProjectionHead {
            w1: f("w1", &self.w1),
            b1: f("b1", &self.b1),
            act_scale: f("act_scale", &self.act_scale),
            act_bias: f("act_bias", &self.act_bias),
            w2: f("w2", &self.w2),
            b2: f("b2", &self.b2),
            input_dim: self.input_dim,
            output_dim: self.output_dim,
        }
    }
}

impl ProjectionHead<Tensor> {
    /// Head for 3-channel `patch_size²` patches.
    pub fn init<R: Rng + ?Sized>(rng: &mut R, patch_size: usize, output_dim: usize) -> Self {
        let d = 3 * patch_size * patch_size;
        let k = output_dim;
        ProjectionHead {
            w1: init::fan_in_uniform(rng, &[k, d], d),
            b1: init::fan_in_uniform(rng, &[k], d),
            act_scale: Tensor::scalar(STAR_RELU_SCALE),
            act_bias: Tensor::scalar(STAR_RELU_BIAS),
            w2: init::fan_in_uniform(rng, &[k, k], k),
            b2: init::fan_in_uniform(rng, &[k], k),
            input_dim: d,
            output_dim: k,
        }
    }

    /// Adds the head to `store` under the `ldg.` prefix.
    pub fn register(&self, store: &mut ParamStore) -> ProjectionHead<ParamId> {
        self.map_named(|name, t| store.add(format!("{PARAM_PREFIX}.{name}"), t.clone()))
    }

    pub fn bind(&self, g: &mut Graph) -> ProjectionHead<Var> {
        self.map_named(|_, t| g.constant(t.clone()))
    }

    /// Unit-norm embedding of each patch.
    pub fn project(&self, patches: &[&Tensor]) -> Result<Vec<Vec<f64>>> {
        for p in patches {
            if p.len() != self.input_dim {
                return Err(Error::validation(format!(
                    "patch has {} values, head expects {}",
                    p.len(),
                    self.input_dim
                )));
            }
        }
        let n = patches.len();
        let mut cols = vec![0.0; self.input_dim * n];
        for (j, p) in patches.iter().enumerate() {
            for (r, &v) in p.data().iter().enumerate() {
                cols[r * n + j] = v;
            }
        }
        let mut g = Graph::new();
        let head = self.bind(&mut g);
        let x = g.constant(Tensor::from_vec(&[self.input_dim, n], cols));
        let z = project_node(&mut g, x, &head);
        let zv = g.value(z);
        if !zv.is_finite() {
            return Err(Error::NonFinite("projected patch"));
        }
        let k = self.output_dim;
        Ok((0..n)
            .map(|j| (0..k).map(|r| zv.data()[r * n + j]).collect())
            .collect())
    }
}

impl ProjectionHead<ParamId> {
    /// Looks the `ldg.` parameters up in `store`.
    pub fn attach(store: &ParamStore, patch_size: usize, output_dim: usize) -> Result<Self> {
        let d = 3 * patch_size * patch_size;
        let k = output_dim;
        let find = |name: &str, shape: &[usize]| -> Result<ParamId> {
            let full = format!("{PARAM_PREFIX}.{name}");
            let id = store
                .id(&full)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {full}")))?;
            if store.get(id).shape() != shape {
                return Err(Error::Checkpoint(format!(
                    "parameter {full} has shape {:?}, expected {shape:?}",
                    store.get(id).shape()
                )));
            }
            Ok(id)
        };
        Ok(ProjectionHead {
            w1: find("w1", &[k, d])?,
            b1: find("b1", &[k])?,
            act_scale: find("act_scale", &[1])?,
            act_bias: find("act_bias", &[1])?,
            w2: find("w2", &[k, k])?,
            b2: find("b2", &[k])?,
            input_dim: d,
            output_dim: k,
        })
    }

    pub fn vars(&self, bound: &BoundParams) -> ProjectionHead<Var> {
        self.map_named(|_, &id| bound.var(id))
    }

    pub fn tensors(&self, store: &ParamStore) -> ProjectionHead<Tensor> {
        self.map_named(|_, &id| store.get(id).clone())
    }
}

/// Projects the columns of a D×n matrix onto the unit sphere in K dimensions.
pub fn project_node(g: &mut Graph, x: Var, head: &ProjectionHead<Var>) -> Var {
    let h = g.linear(x, head.w1, Some(head.b1));
    let h = g.star_relu(h, head.act_scale, head.act_bias);
    let z = g.linear(h, head.w2, Some(head.b2));
    g.l2_normalize_cols(z)
}

/// Contrastive loss node for one sample: query patch from `restored`,
/// positive and negatives from the constant `reference`.
pub fn ldg_node(
    g: &mut Graph,
    restored: Var,
    reference: &Tensor,
    coords: &PatchCoords,
    head: &ProjectionHead<Var>,
    tau: f64,
) -> Var {
    let p = coords.patch_size;
    let q = g.gather_patches(restored, &[coords.query], p);
    let r = g.constant(reference.clone());
    let keys = g.gather_patches(r, &coords.reference_columns(), p);
    let cols = g.concat_cols(q, keys);
    let z = project_node(g, cols, head);
    g.info_nce(z, tau)
}

/// Projects and normalizes every patch of `patches`, then evaluates InfoNCE.
pub fn ldg_loss(patches: &PatchSet, head: &ProjectionHead, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::validation(format!("temperature must be positive, got {tau}")));
    }
    let all: Vec<&Tensor> = [&patches.query, &patches.positive]
        .into_iter()
        .chain(patches.negatives.iter())
        .collect();
    let z = head.project(&all)?;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let pos = dot(&z[0], &z[1]);
    let negs: Vec<f64> = z[2..].iter().map(|v| dot(&z[0], v)).collect();
    info_nce(pos, &negs, tau)
}
