//! Optimization loop.
//!
//! Each iteration draws `batch_size` (sample, crop, patch seed) triples from
//! the training RNG, evaluates the per-sample objective and gradients in
//! parallel, sums them in batch order, and takes one Adam step on the mean.
//! Results depend only on the configuration and the data.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::checkpoint::{Checkpoint, RngState};
use crate::config::TrainConfig;
use crate::contrastive;
use crate::dataset::{DataSample, Dataset};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::losses::{self, LossBreakdown};
use crate::mask::Mask;
use crate::model::{Model, TRAIN_STREAM};
use crate::optim::Adam;
use crate::tensor::Tensor;

pub const LOG_HEADER: &str = "iter,total,perceptual,frequency,ldg,lr";
pub const LOG_FILE: &str = "loss_log.csv";
pub const CHECKPOINT_FILE: &str = "final.ckpt";
pub const LAST_GOOD_FILE: &str = "last_good.ckpt";

/// Losses of one iteration, averaged over the batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub iter: u64,
    pub loss: LossBreakdown,
    pub lr: f64,
}

impl LossRecord {
    pub fn csv_line(&self) -> String {
        let l = &self.loss;
        format!("{},{},{},{},{},{}", self.iter, l.total, l.perceptual, l.frequency, l.ldg, self.lr)
    }
}

/// One cropped training example.
#[derive(Clone, Debug)]
pub struct Crop {
    pub input: Tensor,
    pub reference: Tensor,
    pub flare: Tensor,
    pub light: Mask,
}

impl Crop {
    pub fn from_sample(s: &DataSample, top: usize, left: usize, size: usize) -> Self {
        Crop {
            input: s.input.crop(top, left, size, size),
            reference: s.reference.crop(top, left, size, size),
            flare: s.flare.crop(top, left, size, size),
            light: s.masks.light_source.crop(top, left, size, size),
        }
    }
}

/// Objective and parameter gradients (store order) for a single crop.
pub fn sample_gradients(model: &Model, crop: &Crop, patch_seed: u64) -> Result<(LossBreakdown, Vec<Tensor>)> {
    let cfg = &model.config;
    let w = cfg.weights();
    let mut g = Graph::new();
    let bound = model.store.bind(&mut g);
    let x = g.constant(crop.input.clone());
    let (restored, flare) = model.net.forward_node(&mut g, &model.store, &bound, x);
    let per_r = losses::perceptual_node(&mut g, restored, &crop.reference);
    let per_f = losses::perceptual_node(&mut g, flare, &crop.flare);
    let freq = losses::frequency_node(&mut g, restored, &crop.reference);
    let mut terms = vec![(per_r, w.alpha), (per_f, w.alpha), (freq, w.lambda)];
    let ldg = match &model.head {
        Some(head) => {
            let coords = contrastive::sample_coords(
                &crop.reference,
                &crop.light,
                cfg.n_negatives,
                cfg.patch_size(),
                patch_seed,
            )?;
            let hv = head.vars(&bound);
            let node = contrastive::ldg_node(&mut g, restored, &crop.reference, &coords, &hv, cfg.tau);
            terms.push((node, 1.0));
            Some(node)
        }
        None => None,
    };
    let total = g.weighted_sum(&terms);
    g.backward(total);
    let loss = LossBreakdown {
        total: g.value(total).item(),
        perceptual: g.value(per_r).item() + g.value(per_f).item(),
        frequency: g.value(freq).item(),
        ldg: ldg.map_or(0.0, |v| g.value(v).item()),
    };
    Ok((loss, bound.grads(&g, &model.store)))
}

pub struct Trainer {
    pub model: Model,
    pub adam: Adam,
    rng: ChaCha8Rng,
    iteration: u64,
}

impl Trainer {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        let model = Model::init(config)?;
        let adam = Adam::new(model.store.tensors(), config.betas.0, config.betas.1, config.eps);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(TRAIN_STREAM);
        Ok(Trainer {
            model,
            adam,
            rng,
            iteration: 0,
        })
    }

    pub fn resume(ck: &Checkpoint) -> Result<Self> {
        let model = ck.model()?;
        if ck.adam.m.len() != model.store.len() {
            return Err(Error::Checkpoint("optimizer state does not match parameters".into()));
        }
        Ok(Trainer {
            model,
            adam: ck.adam.clone(),
            rng: ck.rng.restore(),
            iteration: ck.iteration,
        })
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            iteration: self.iteration,
            config: self.model.config.clone(),
            params: self.model.store.clone(),
            adam: self.adam.clone(),
            rng: RngState::capture(&self.rng),
        }
    }

    fn check_data(&self, data: &[DataSample]) -> Result<()> {
        if data.is_empty() {
            return Err(Error::validation("training set is empty"));
        }
        let c = self.model.config.crop;
        for s in data {
            let (_, h, w) = s.input.dims3();
            if h < c || w < c {
                return Err(Error::validation(format!("sample {} is {h}×{w}, smaller than crop {c}", s.name)));
            }
        }
        Ok(())
    }

    /// One optimization step. On a non-finite loss or gradient the state is
    /// left untouched and returned inside [`Error::Diverged`].
    pub fn step(&mut self, data: &[DataSample]) -> Result<LossRecord> {
        self.check_data(data)?;
        let before = self.rng.clone();
        let c = self.model.config.crop;
        let picks: Vec<(usize, usize, usize, u64)> = (0..self.model.config.batch_size)
            .map(|_| {
                let i = self.rng.gen_range(0..data.len());
                let (_, h, w) = data[i].input.dims3();
                (i, self.rng.gen_range(0..=h - c), self.rng.gen_range(0..=w - c), self.rng.gen())
            })
            .collect();
        let model = &self.model;
        let results: Vec<(LossBreakdown, Vec<Tensor>)> = picks
            .par_iter()
            .map(|&(i, top, left, seed)| sample_gradients(model, &Crop::from_sample(&data[i], top, left, c), seed))
            .collect::<Result<_>>()?;

        let k = 1.0 / results.len() as f64;
        let mut loss = LossBreakdown::default();
        let mut grads: Vec<Tensor> = model.store.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        for (l, g) in &results {
            loss.total += k * l.total;
            loss.perceptual += k * l.perceptual;
            loss.frequency += k * l.frequency;
            loss.ldg += k * l.ldg;
            for (acc, g) in grads.iter_mut().zip(g) {
                acc.add_assign(g);
            }
        }
        let iter = self.iteration + 1;
        if !loss.total.is_finite() || !grads.iter().all(Tensor::is_finite) {
            self.rng = before;
            return Err(Error::Diverged {
                iteration: iter,
                last_good: Box::new(self.checkpoint()),
            });
        }
        for g in &mut grads {
            g.scale_assign(k);
        }
        let lr = self.model.config.lr_at(iter as usize);
        self.adam.update(self.model.store.tensors_mut(), &grads, lr)?;
        self.iteration = iter;
        Ok(LossRecord { iter, loss, lr })
    }

    /// Steps until `total_iters`, handing every record to `on_record`.
    pub fn run(&mut self, data: &[DataSample], mut on_record: impl FnMut(&LossRecord) -> Result<()>) -> Result<()> {
        while (self.iteration as usize) < self.model.config.total_iters {
            let rec = self.step(data)?;
            on_record(&rec)?;
        }
        Ok(())
    }
}

/// Paths written by [`train_to_dir`].
#[derive(Clone, Debug)]
pub struct TrainOutputs {
    pub log: PathBuf,
    pub checkpoint: PathBuf,
}

/// Trains on every sample of `data_dir`, writing the loss log and final
/// checkpoint into `out_dir`. On divergence the last good state is saved to
/// `last_good.ckpt` before the error is returned.
pub fn train_to_dir(config: &TrainConfig, data_dir: &Path, out_dir: &Path) -> Result<TrainOutputs> {
    config.validate()?;
    let data = Dataset::open(data_dir)?.load_all()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let log_path = out_dir.join(LOG_FILE);
    let file = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log = BufWriter::new(file);
    let io = |e| Error::io(&log_path, e);
    writeln!(log, "{LOG_HEADER}").map_err(io)?;

    let mut trainer = Trainer::new(config)?;
    let result = trainer.run(&data, |rec| {
        if rec.iter % 50 == 0 || rec.iter == 1 {
            info!("iter {} loss {:.6} lr {}", rec.iter, rec.loss.total, rec.lr);
        }
        writeln!(log, "{}", rec.csv_line()).map_err(io)
    });
    log.flush().map_err(io)?;
    if let Err(Error::Diverged { last_good, .. }) = &result {
        last_good.save(&out_dir.join(LAST_GOOD_FILE))?;
    }
    result?;
    let ck_path = out_dir.join(CHECKPOINT_FILE);
    trainer.checkpoint().save(&ck_path)?;
    Ok(TrainOutputs {
        log: log_path,
        checkpoint: ck_path,
    })
}
