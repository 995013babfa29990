//! A configured network together with its parameters.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::TrainConfig;
use crate::contrastive::{self, ProjectionHead};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// ChaCha stream used for parameter initialization; training draws from
/// [`TRAIN_STREAM`] of the same seed.
pub const INIT_STREAM: u64 = 0;
pub const TRAIN_STREAM: u64 = 1;

#[derive(Clone, Debug)]
pub struct Model {
    pub config: TrainConfig,
    pub net: Network,
    pub store: ParamStore,
    /// Present when the contrastive loss is enabled.
    pub head: Option<ProjectionHead<ParamId>>,
}

/// Output of [`Model::restore`], clamped to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Restoration {
    pub restored: Tensor,
    pub flare: Tensor,
    /// Padded `(height, width)` the network actually ran at, if padding was needed.
    pub padded_to: Option<(usize, usize)>,
}

fn next_multiple(n: usize, m: usize) -> usize {
    n.div_ceil(m) * m
}

impl Model {
    /// Fresh parameters drawn from `config.seed`.
    pub fn init(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(INIT_STREAM);
        let mut store = ParamStore::new();
        let net = Network::new(
            &config.network(),
            config.crop,
            config.crop,
            config.gdfg_enabled,
            &mut store,
            &mut rng,
        )?;
        let head = config.ldgm_enabled.then(|| {
            ProjectionHead::init(&mut rng, config.patch_size(), config.proj_dim).register(&mut store)
        });
        Ok(Model {
            config: config.clone(),
            net,
            store,
            head,
        })
    }

    /// Wraps stored parameters, checking names and shapes against `config`.
    pub fn from_parts(config: &TrainConfig, store: ParamStore) -> Result<Self> {
        config.validate()?;
        let net = Network::attach(&config.network(), config.crop, config.crop, config.gdfg_enabled, &store)?;
        let head = if config.ldgm_enabled {
            Some(ProjectionHead::attach(&store, config.patch_size(), config.proj_dim)?)
        } else {
            None
        };
        let head_count = match &head {
            Some(_) => store.count_with_prefix(contrastive::PARAM_PREFIX),
            None => 0,
        };
        let expected = net.param_count(&store) + head_count;
        let total: usize = store.tensors().iter().map(Tensor::len).sum();
        if expected != total {
            return Err(Error::Checkpoint(format!(
                "store holds {total} scalars, configuration accounts for {expected}"
            )));
        }
        Ok(Model {
            config: config.clone(),
            net,
            store,
            head,
        })
    }

    /// Network parameters only, without the contrastive head.
    pub fn param_count(&self) -> usize {
        self.net.param_count(&self.store)
    }

    /// Runs the network on a 3×H×W image of any size. Sizes that are not a
    /// multiple of `2^stages` are reflect-padded and the outputs cropped back.
    pub fn restore(&self, image: &Tensor) -> Result<Restoration> {
        if image.shape().len() != 3 || image.shape()[0] != 3 {
            return Err(Error::validation(format!("expected a 3×H×W image, got {:?}", image.shape())));
        }
        let (_, h, w) = image.dims3();
        if h == 0 || w == 0 {
            return Err(Error::validation("image is empty"));
        }
        let m = self.net.config().stride();
        let (ph, pw) = (next_multiple(h, m), next_multiple(w, m));
        if ph - h > h - 1 || pw - w > w - 1 {
            return Err(Error::validation(format!(
                "image {h}×{w} is too small to reflect-pad to a multiple of {m}"
            )));
        }
        let padded_to = (ph != h || pw != w).then_some((ph, pw));
        let input = match padded_to {
            Some(_) => image.reflect_pad(ph - h, pw - w),
            None => image.clone(),
        };
        let (restored, flare) = self.net.forward(&self.store, &input)?;
        let back = |t: Tensor| match padded_to {
            Some(_) => t.crop(0, 0, h, w).clamp(0.0, 1.0),
            None => t.clamp(0.0, 1.0),
        };
        Ok(Restoration {
            restored: back(restored),
            flare: back(flare),
            padded_to,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TrainConfig {
        TrainConfig {
            crop: 16,
            base_channels: 4,
            proj_dim: 8,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn reattaches_and_pads() {
        let m = Model::init(&small()).unwrap();
        let again = Model::from_parts(&m.config, m.store.clone()).unwrap();
        let img = Tensor::from_fn(&[3, 10, 13], |i| (i % 11) as f64 / 10.0);
        let a = m.restore(&img).unwrap();
        assert_eq!(a.padded_to, Some((12, 16)));
        assert_eq!(a.restored.shape(), &[3, 10, 13]);
        assert_eq!(a, again.restore(&img).unwrap());
        assert!(a.restored.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn rejects_foreign_store() {
        let m = Model::init(&small()).unwrap();
        let other = TrainConfig {
            ldgm_enabled: false,
            ..small()
        };
        assert!(Model::from_parts(&other, m.store.clone()).is_err());
    }
}
