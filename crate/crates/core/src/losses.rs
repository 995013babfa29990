//! Training objectives: pixel perceptual loss, amplitude/phase spectral loss
//! and their weighted total.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::graph::{self, Graph, SpectralTerm, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub lambda: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 2.0,
            lambda: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Per-term values of one evaluation of the total objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    /// Sum over the restored and flare pairs, before `alpha`.
    pub perceptual: f64,
    /// Before `lambda`.
    pub frequency: f64,
    pub ldg: f64,
}

fn check_same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::validation(format!(
            "shape mismatch: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Mean absolute error plus mean squared error.
pub fn perceptual_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check_same_shape(pred, target)?;
    let mut g = Graph::new();
    let p = g.constant(pred.clone());
    let l = g.perceptual(p, target);
    Ok(g.value(l).item())
}

/// Half-spectra of every channel of a C×H×W image, concatenated.
pub fn image_spectrum(image: &Tensor) -> Vec<Complex64> {
    let (c, h, w) = image.dims3();
    (0..c)
        .flat_map(|ch| fft::forward_half(image.channel(ch), h, w))
        .collect()
}

/// `(amplitude term, phase term)` of the spectral loss.
pub fn frequency_loss_terms(pred: &Tensor, target: &Tensor) -> Result<(f64, f64)> {
    check_same_shape(pred, target)?;
    if pred.shape().len() != 3 {
        return Err(Error::validation("frequency loss needs C×H×W images"));
    }
    let p = image_spectrum(pred);
    let t = image_spectrum(target);
    Ok((
        graph::spectral_l1(&p, &t, SpectralTerm::Amplitude),
        graph::spectral_l1(&p, &t, SpectralTerm::Phase),
    ))
}

/// Mean L1 distance between amplitude spectra plus mean wrapped L1 distance
/// between phase spectra.
pub fn frequency_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    let (a, p) = frequency_loss_terms(pred, target)?;
    Ok(a + p)
}

/// `α·[per(restored, reference) + per(flare_pred, flare_true)] + λ·freq(restored, reference) + ldg`.
pub fn total_loss(
    restored: &Tensor,
    flare_pred: &Tensor,
    reference: &Tensor,
    flare_true: &Tensor,
    ldg: f64,
    w: &LossWeights,
) -> Result<LossBreakdown> {
    w.validate()?;
    let perceptual = perceptual_loss(restored, reference)? + perceptual_loss(flare_pred, flare_true)?;
    let frequency = frequency_loss(restored, reference)?;
    Ok(combine(perceptual, frequency, ldg, w))
}

pub fn combine(perceptual: f64, frequency: f64, ldg: f64, w: &LossWeights) -> LossBreakdown {
    LossBreakdown {
        total: w.alpha * perceptual + w.lambda * frequency + ldg,
        perceptual,
        frequency,
        ldg,
    }
}

pub fn perceptual_node(g: &mut Graph, pred: Var, target: &Tensor) -> Var {
    g.perceptual(pred, target)
}

pub fn frequency_node(g: &mut Graph, pred: Var, target: &Tensor) -> Var {
    let spec = g.rdft2(pred);
    let t = image_spectrum(target);
    let amp = g.spectral_l1(spec, t.clone(), SpectralTerm::Amplitude);
    let phase = g.spectral_l1(spec, t, SpectralTerm::Phase);
    g.add(amp, phase)
}
