//! On-disk paired dataset: one PNG per image kind and sample plus a JSON
//! record of how each sample was synthesized.
//!
//! ```text
//! <root>/input/000000.png       flare-damaged image
//! <root>/gt/000000.png          clean reference
//! <root>/flare/000000.png       flare layer
//! <root>/mask_glare/000000.png
//! <root>/mask_streak/000000.png
//! <root>/mask_light/000000.png
//! <root>/meta/000000.json
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageio;
use crate::synthesis::{self, AugmentParams, CompositeSample, FlareKind, RegionMasks};
use crate::tensor::Tensor;

pub const IMAGE_DIRS: [&str; 6] = ["input", "gt", "flare", "mask_glare", "mask_streak", "mask_light"];
pub const META_DIR: &str = "meta";
const WRITE_CHUNK: usize = 64;

pub fn sample_name(index: usize) -> String {
    format!("{index:06}")
}

/// Synthesis record stored next to every sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub index: usize,
    pub seed: u64,
    pub scene_seed: u64,
    pub flare_seed: u64,
    pub flare_kind: FlareKind,
    pub size: usize,
    pub params: AugmentParams,
}

/// Independent seeds for scene, flare asset and augmentation of sample `index`.
pub fn sample_seeds(seed: u64, index: usize) -> (u64, u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    (rng.gen(), rng.gen(), rng.gen())
}

/// Source of background images.
pub enum SceneSource {
    Procedural,
    /// Random `size×size` crops of user images, upscaled when smaller.
    Images(Vec<Tensor>),
}

impl SceneSource {
    /// Loads every `.png` in `dir`, sorted by file name.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
            .collect();
        paths.sort();
        if paths.is_empty() {
            return Err(Error::Dataset {
                root: dir.to_path_buf(),
                reason: "no .png scene images".into(),
            });
        }
        Ok(SceneSource::Images(
            paths.iter().map(|p| imageio::load_rgb(p)).collect::<Result<_>>()?,
        ))
    }

    fn scene(&self, seed: u64, index: usize, size: usize) -> Tensor {
        match self {
            SceneSource::Procedural => synthesis::procedural_scene(seed, size),
            SceneSource::Images(images) => random_crop(&images[index % images.len()], seed, size),
        }
    }
}

fn random_crop(image: &Tensor, seed: u64, size: usize) -> Tensor {
    let (_, h, w) = image.dims3();
    let image = if h < size || w < size {
        let k = size as f64 / h.min(w) as f64;
        let (nw, nh) = (((w as f64 * k).ceil() as u32).max(size as u32), ((h as f64 * k).ceil() as u32).max(size as u32));
        let resized = imageops::resize(&imageio::to_rgb8(image), nw, nh, FilterType::Triangle);
        let (rw, rh) = (nw as usize, nh as usize);
        Tensor::from_fn(&[3, rh, rw], |i| {
            let (c, y, x) = (i / (rh * rw), (i / rw) % rh, i % rw);
            resized.get_pixel(x as u32, y as u32)[c] as f64 / 255.0
        })
    } else {
        image.clone()
    };
    let (_, h, w) = image.dims3();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let top = rng.gen_range(0..=h - size);
    let left = rng.gen_range(0..=w - size);
    image.crop(top, left, size, size)
}

/// Synthesizes sample `index` of a dataset.
pub fn synthesize(scenes: &SceneSource, seed: u64, index: usize, size: usize) -> Result<(CompositeSample, SampleMeta)> {
    let (scene_seed, flare_seed, aug_seed) = sample_seeds(seed, index);
    let scene = scenes.scene(scene_seed, index, size);
    let asset = synthesis::procedural_flare(flare_seed, size);
    let sample = synthesis::make_sample(&scene, &asset, aug_seed)?;
    let meta = SampleMeta {
        index,
        seed: aug_seed,
        scene_seed,
        flare_seed,
        flare_kind: asset.kind,
        size,
        params: sample.params.clone(),
    };
    Ok((sample, meta))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn write_sample(root: &Path, sample: &CompositeSample, meta: &SampleMeta) -> Result<()> {
    let name = sample_name(meta.index);
    let png = |dir: &str| root.join(dir).join(format!("{name}.png"));
    imageio::save_rgb(&png("input"), &sample.input)?;
    imageio::save_rgb(&png("gt"), &sample.reference)?;
    imageio::save_rgb(&png("flare"), &sample.flare)?;
    imageio::save_mask(&png("mask_glare"), &sample.masks.glare)?;
    imageio::save_mask(&png("mask_streak"), &sample.masks.streak)?;
    imageio::save_mask(&png("mask_light"), &sample.masks.light_source)?;
    let meta_path = root.join(META_DIR).join(format!("{name}.json"));
    let json = serde_json::to_string_pretty(meta)?;
    fs::write(&meta_path, json + "\n").map_err(|e| Error::io(&meta_path, e))
}

/// Writes `n` samples under `root`. Samples are synthesized in parallel and
/// written in index order; output bytes depend only on the arguments.
pub fn write_dataset(root: &Path, n: usize, seed: u64, size: usize, scenes: &SceneSource) -> Result<()> {
    if size < 2 {
        return Err(Error::validation(format!("image size must be at least 2, got {size}")));
    }
    for dir in IMAGE_DIRS.iter().chain([&META_DIR]) {
        create_dir(&root.join(dir))?;
    }
    for start in (0..n).step_by(WRITE_CHUNK) {
        let batch: Vec<_> = (start..(start + WRITE_CHUNK).min(n))
            .into_par_iter()
            .map(|i| synthesize(scenes, seed, i, size))
            .collect::<Result<_>>()?;
        for (sample, meta) in &batch {
            write_sample(root, sample, meta)?;
        }
    }
    Ok(())
}

/// One loaded sample.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSample {
    pub name: String,
    pub input: Tensor,
    pub reference: Tensor,
    pub flare: Tensor,
    pub masks: RegionMasks,
}

/// Validated view of a dataset directory.
#[derive(Clone, Debug)]
pub struct Dataset {
    root: PathBuf,
    names: Vec<String>,
}

impl Dataset {
    /// Lists the samples in `input/` and checks that every other image
    /// directory holds the same files.
    pub fn open(root: &Path) -> Result<Self> {
        let invalid = |reason: String| Error::Dataset {
            root: root.to_path_buf(),
            reason,
        };
        let input_dir = root.join("input");
        let entries = fs::read_dir(&input_dir).map_err(|e| invalid(format!("cannot read input/: {e}")))?;
        let mut names: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let p = e.path();
                (p.extension()? == "png").then(|| p.file_stem()?.to_str().map(str::to_owned))?
            })
            .collect();
        names.sort();
        if names.is_empty() {
            return Err(invalid("no samples in input/".into()));
        }
        let missing: Vec<String> = IMAGE_DIRS[1..]
            .iter()
            .flat_map(|dir| names.iter().map(move |n| format!("{dir}/{n}.png")))
            .filter(|rel| !root.join(rel).is_file())
            .collect();
        if !missing.is_empty() {
            return Err(invalid(format!("missing files: {}", missing.join(", "))));
        }
        Ok(Dataset {
            root: root.to_path_buf(),
            names,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn load(&self, i: usize) -> Result<DataSample> {
        let name = &self.names[i];
        let png = |dir: &str| self.root.join(dir).join(format!("{name}.png"));
        let input = imageio::load_rgb(&png("input"))?;
        let reference = imageio::load_rgb(&png("gt"))?;
        let flare = imageio::load_rgb(&png("flare"))?;
        let masks = RegionMasks {
            glare: imageio::load_mask(&png("mask_glare"))?,
            streak: imageio::load_mask(&png("mask_streak"))?,
            light_source: imageio::load_mask(&png("mask_light"))?,
        };
        let (_, h, w) = input.dims3();
        let consistent = reference.shape() == input.shape()
            && flare.shape() == input.shape()
            && [&masks.glare, &masks.streak, &masks.light_source]
                .iter()
                .all(|m| (m.height(), m.width()) == (h, w));
        if !consistent {
            return Err(Error::Dataset {
                root: self.root.clone(),
                reason: format!("sample {name} has images of different sizes"),
            });
        }
        Ok(DataSample {
            name: name.clone(),
            input,
            reference,
            flare,
            masks,
        })
    }

    pub fn load_all(&self) -> Result<Vec<DataSample>> {
        (0..self.len()).into_par_iter().map(|i| self.load(i)).collect()
    }
}
