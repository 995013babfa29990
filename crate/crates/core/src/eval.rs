//! Evaluation over a dataset: per-image and mean PSNR, SSIM and
//! region-masked PSNR, written as one JSON report.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{DataSample, Dataset};
use crate::error::{Error, Result};
use crate::imageio;
use crate::mask::Mask;
use crate::metrics;
use crate::model::Model;
use crate::tensor::Tensor;

pub const REPORT_FILE: &str = "report.json";
pub const RESTORED_DIR: &str = "restored";

/// Metrics for one image. Region PSNRs are `null` when the mask is empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageReport {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
    pub g_psnr: Option<f64>,
    pub s_psnr: Option<f64>,
    /// Masked PSNR over the all-ones mask.
    pub full_mask_psnr: f64,
    /// PSNR of the unprocessed input against the reference.
    pub input_psnr: f64,
    /// `[height, width]` the network ran at when padding was needed.
    pub padded_to: Option<[usize; 2]>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub psnr: f64,
    pub ssim: f64,
    /// Mean over images with a non-empty glare mask; `null` if there are none.
    pub g_psnr: Option<f64>,
    pub s_psnr: Option<f64>,
    pub input_psnr: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub g_psnr: usize,
    pub s_psnr: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub count: usize,
    pub images: Vec<ImageReport>,
    pub mean: Aggregate,
    /// Images whose glare / streak mask was empty.
    pub skipped: Skipped,
    /// Number of images that were reflect-padded to a multiple of `2^stages`.
    pub padded: usize,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Scores one restored image against its sample.
pub fn score(sample: &DataSample, restored: &Tensor, padded_to: Option<(usize, usize)>) -> Result<ImageReport> {
    let (_, h, w) = sample.reference.dims3();
    Ok(ImageReport {
        name: sample.name.clone(),
        psnr: metrics::psnr(restored, &sample.reference)?,
        ssim: metrics::ssim(restored, &sample.reference)?,
        g_psnr: metrics::masked_psnr(restored, &sample.reference, &sample.masks.glare)?,
        s_psnr: metrics::masked_psnr(restored, &sample.reference, &sample.masks.streak)?,
        full_mask_psnr: metrics::masked_psnr(restored, &sample.reference, &Mask::full(h, w))?
            .expect("full mask is never empty"),
        input_psnr: metrics::psnr(&sample.input, &sample.reference)?,
        padded_to: padded_to.map(|(h, w)| [h, w]),
    })
}

pub fn aggregate(images: Vec<ImageReport>) -> Report {
    let n = images.len();
    let agg = Aggregate {
        psnr: mean(images.iter().map(|r| r.psnr)).unwrap_or(f64::NAN),
        ssim: mean(images.iter().map(|r| r.ssim)).unwrap_or(f64::NAN),
        g_psnr: mean(images.iter().filter_map(|r| r.g_psnr)),
        s_psnr: mean(images.iter().filter_map(|r| r.s_psnr)),
        input_psnr: mean(images.iter().map(|r| r.input_psnr)).unwrap_or(f64::NAN),
    };
    Report {
        count: n,
        skipped: Skipped {
            g_psnr: images.iter().filter(|r| r.g_psnr.is_none()).count(),
            s_psnr: images.iter().filter(|r| r.s_psnr.is_none()).count(),
        },
        padded: images.iter().filter(|r| r.padded_to.is_some()).count(),
        mean: agg,
        images,
    }
}

/// Evaluates an arbitrary restoration function; it returns the clamped
/// restored image and the padded size it used, if any.
pub fn evaluate_with<F>(samples: &[DataSample], restore: F) -> Result<(Report, Vec<Tensor>)>
where
    F: Fn(&Tensor) -> Result<(Tensor, Option<(usize, usize)>)> + Sync,
{
    if samples.is_empty() {
        return Err(Error::validation("nothing to evaluate"));
    }
    let scored: Vec<(ImageReport, Tensor)> = samples
        .par_iter()
        .map(|s| {
            let (restored, padded) = restore(&s.input)?;
            Ok((score(s, &restored, padded)?, restored))
        })
        .collect::<Result<_>>()?;
    let (images, restored) = scored.into_iter().unzip();
    Ok((aggregate(images), restored))
}

pub fn evaluate(model: &Model, samples: &[DataSample]) -> Result<(Report, Vec<Tensor>)> {
    evaluate_with(samples, |x| {
        let r = model.restore(x)?;
        Ok((r.restored, r.padded_to))
    })
}

/// Evaluates `data_dir` and writes `report.json` (and restored PNGs when
/// `save_images`) into `out_dir`.
pub fn evaluate_to_dir(model: &Model, data_dir: &Path, out_dir: &Path, save_images: bool) -> Result<Report> {
    let ds = Dataset::open(data_dir)?;
    let samples = ds.load_all()?;
    let (report, restored) = evaluate(model, &samples)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    if save_images {
        let dir = out_dir.join(RESTORED_DIR);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (s, img) in samples.iter().zip(&restored) {
            imageio::save_rgb(&dir.join(format!("{}.png", s.name)), img)?;
        }
    }
    let path = out_dir.join(REPORT_FILE);
    let json = serde_json::to_string_pretty(&report)? + "\n";
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}
