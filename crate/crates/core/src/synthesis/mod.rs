//! Paired data synthesis: flare assets are linearized, augmented and added
//! onto linearized backgrounds; region masks are derived from the layers.

pub mod augment;
pub mod procedural;

use serde::{Deserialize, Serialize};

pub use augment::{augment_background, augment_flare, AffineTransform, AugmentParams};
pub use procedural::{procedural_flare, procedural_scene, FlareRecipe};

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::tensor::Tensor;

/// Luminance threshold of the light-source layer.
pub const LIGHT_THRESHOLD: f64 = 0.5;
/// Luminance threshold for streak candidates in the flare layer.
pub const STREAK_THRESHOLD: f64 = 0.3;
/// Minimum principal-axis ratio of a streak component.
pub const STREAK_ASPECT: f64 = 3.0;
/// Luminance threshold of the glare region.
pub const GLARE_THRESHOLD: f64 = 0.05;
const REC709: [f64; 3] = [0.2126, 0.7152, 0.0722];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlareKind {
    Scattering,
    Reflective,
}

/// Co-registered flare and light-source layers.
#[derive(Clone, Debug, PartialEq)]
pub struct FlareAsset {
    pub flare: Tensor,
    pub light_source: Tensor,
    pub kind: FlareKind,
}

impl FlareAsset {
    pub fn validate(&self) -> Result<()> {
        check_rgb(&self.flare, "flare")?;
        check_rgb(&self.light_source, "light source")?;
        if self.flare.shape() != self.light_source.shape() {
            return Err(Error::validation(format!(
                "flare {:?} and light source {:?} differ in shape",
                self.flare.shape(),
                self.light_source.shape()
            )));
        }
        Ok(())
    }
}

fn check_rgb(t: &Tensor, what: &str) -> Result<()> {
    if t.shape().len() != 3 || t.shape()[0] != 3 {
        return Err(Error::validation(format!("{what} must be 3×H×W, got {:?}", t.shape())));
    }
    if !t.data().iter().all(|v| (0.0..=1.0).contains(v)) {
        return Err(Error::validation(format!("{what} has values outside [0, 1]")));
    }
    Ok(())
}

/// Pixelwise `x^gamma`.
pub fn inverse_gamma(image: &Tensor, gamma: f64) -> Result<Tensor> {
    if !(gamma > 0.0) {
        return Err(Error::validation(format!("gamma must be positive, got {gamma}")));
    }
    Ok(image.map(|v| v.max(0.0).powf(gamma)))
}

/// Pixelwise `x^(1/gamma)`.
pub fn forward_gamma(image: &Tensor, gamma: f64) -> Result<Tensor> {
    if !(gamma > 0.0) {
        return Err(Error::validation(format!("gamma must be positive, got {gamma}")));
    }
    Ok(image.map(|v| v.max(0.0).powf(1.0 / gamma)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Composite {
    pub input: Tensor,
    pub reference: Tensor,
    pub flare: Tensor,
}

/// `input = clip(background + flare, 0, 1)`.
pub fn composite(background: &Tensor, flare_layer: &Tensor) -> Result<Composite> {
    if background.shape() != flare_layer.shape() {
        return Err(Error::validation(format!(
            "background {:?} and flare {:?} differ in shape",
            background.shape(),
            flare_layer.shape()
        )));
    }
    Ok(Composite {
        input: background.zip_map(flare_layer, |b, f| (b + f).clamp(0.0, 1.0)),
        reference: background.clone(),
        flare: flare_layer.clone(),
    })
}

/// Pairwise disjoint glare, streak and light-source masks.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionMasks {
    pub glare: Mask,
    pub streak: Mask,
    pub light_source: Mask,
}

/// Rec. 709 luminance of a 3×H×W image.
pub fn luminance(image: &Tensor) -> Vec<f64> {
    let (_, h, w) = image.dims3();
    (0..h * w)
        .map(|i| (0..3).map(|c| REC709[c] * image.channel(c)[i]).sum())
        .collect()
}

/// Ratio of principal standard deviations of a pixel set, each pixel
/// treated as a unit square.
pub fn aspect_ratio(pixels: &[(usize, usize)]) -> f64 {
    let n = pixels.len() as f64;
    let (my, mx) = pixels
        .iter()
        .fold((0.0, 0.0), |(a, b), &(y, x)| (a + y as f64 / n, b + x as f64 / n));
    let (mut syy, mut sxx, mut sxy) = (1.0 / 12.0, 1.0 / 12.0, 0.0);
    for &(y, x) in pixels {
        let (dy, dx) = (y as f64 - my, x as f64 - mx);
        syy += dy * dy / n;
        sxx += dx * dx / n;
        sxy += dx * dy / n;
    }
    let tr = syy + sxx;
    let disc = ((syy - sxx).powi(2) + 4.0 * sxy * sxy).sqrt();
    let (l1, l2) = ((tr + disc) / 2.0, (tr - disc) / 2.0);
    (l1 / l2).sqrt()
}

/// `light_source`: light luminance > 0.5. `streak`: 8-connected components of
/// flare luminance > 0.3 outside the light source whose aspect ratio exceeds
/// 3. `glare`: flare luminance > 0.05 outside both.
pub fn derive_masks(flare_layer: &Tensor, light_source_layer: &Tensor) -> Result<RegionMasks> {
    if flare_layer.shape() != light_source_layer.shape() {
        return Err(Error::validation("flare and light-source layers differ in shape"));
    }
    check_rgb(flare_layer, "flare")?;
    check_rgb(light_source_layer, "light source")?;
    let (_, h, w) = flare_layer.dims3();
    let fl = luminance(flare_layer);
    let light = Mask::threshold(&luminance(light_source_layer), h, w, LIGHT_THRESHOLD);
    let bright = Mask::threshold(&fl, h, w, STREAK_THRESHOLD).minus(&light);
    let mut streak = Mask::empty(h, w);
    for comp in bright.components() {
        if comp.len() >= 2 && aspect_ratio(&comp) > STREAK_ASPECT {
            for &(y, x) in &comp {
                streak.set(y, x, true);
            }
        }
    }
    let glare = Mask::threshold(&fl, h, w, GLARE_THRESHOLD)
        .minus(&light)
        .minus(&streak);
    Ok(RegionMasks {
        glare,
        streak,
        light_source: light,
    })
}

/// One synthesized pair. Images are display-encoded (forward gamma applied);
/// masks come from the linear layers.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeSample {
    pub input: Tensor,
    pub reference: Tensor,
    pub flare: Tensor,
    pub masks: RegionMasks,
    pub seed: u64,
    pub params: AugmentParams,
}

/// Linearizes scene and asset, augments both, composites, derives masks and
/// re-encodes with gamma for storage. The flare asset is placed on a canvas
/// the size of the scene.
pub fn make_sample(scene: &Tensor, asset: &FlareAsset, seed: u64) -> Result<CompositeSample> {
    use rand::SeedableRng;
    check_rgb(scene, "scene")?;
    asset.validate()?;
    if scene.shape() != asset.flare.shape() {
        return Err(Error::validation(format!(
            "scene {:?} and flare asset {:?} differ in shape",
            scene.shape(),
            asset.flare.shape()
        )));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let params = AugmentParams::sample(&mut rng);
    let g = params.gamma;
    let linear_asset = FlareAsset {
        flare: inverse_gamma(&asset.flare, g)?,
        light_source: inverse_gamma(&asset.light_source, g)?,
        kind: asset.kind,
    };
    let aug = augment_flare(&linear_asset, &params)?;
    let background = augment_background(&inverse_gamma(scene, g)?, &params, noise_seed(seed))?;
    let comp = composite(&background, &aug.flare)?;
    let masks = derive_masks(&aug.flare, &aug.light_source)?;
    Ok(CompositeSample {
        input: forward_gamma(&comp.input, g)?,
        reference: forward_gamma(&comp.reference, g)?,
        flare: forward_gamma(&comp.flare, g)?,
        masks,
        seed,
        params,
    })
}

fn noise_seed(seed: u64) -> u64 {
    seed ^ 0x6E6F_6973_655F_5345
}
