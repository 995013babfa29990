//! Training configuration and its flat `key = value` text form.
//!
//! ```text
//! # comments and blank lines are ignored
//! lr = 1e-4
//! betas = 0.9, 0.99
//! lr_halve_at = 375, 500
//! ```

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::contrastive;
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::network::NetworkConfig;

/// Fractions of `total_iters` at which the learning rate halves when no
/// explicit schedule is given.
pub const DEFAULT_HALVE_FRACTIONS: [f64; 2] = [0.75, 1.0];

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub batch_size: usize,
    pub crop: usize,
    pub total_iters: usize,
    /// `None` halves at 75% and 100% of `total_iters`.
    pub lr_halve_at: Option<Vec<usize>>,
    pub seed: u64,
    pub alpha: f64,
    pub lambda: f64,
    pub tau: f64,
    pub stages: usize,
    pub base_channels: usize,
    pub n_filters: usize,
    pub blocks_per_stage: usize,
    pub ldgm_enabled: bool,
    pub gdfg_enabled: bool,
    pub n_negatives: usize,
    /// `None` uses `crop / 16`.
    pub patch_size: Option<usize>,
    pub proj_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let net = NetworkConfig::default();
        let w = LossWeights::default();
        TrainConfig {
            lr: 1e-4,
            betas: (0.9, 0.99),
            eps: 1e-8,
            batch_size: 2,
            crop: 64,
            total_iters: 500,
            lr_halve_at: None,
            seed: 0,
            alpha: w.alpha,
            lambda: w.lambda,
            tau: contrastive::DEFAULT_TAU,
            stages: net.stages,
            base_channels: net.base_channels,
            n_filters: net.n_filters,
            blocks_per_stage: net.blocks_per_stage,
            ldgm_enabled: true,
            gdfg_enabled: true,
            n_negatives: contrastive::DEFAULT_NEGATIVES,
            patch_size: None,
            proj_dim: contrastive::DEFAULT_PROJ_DIM,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value for {key}: {value:?}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid value for {key}: {value:?}"))),
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

impl TrainConfig {
    pub fn network(&self) -> NetworkConfig {
        NetworkConfig {
            stages: self.stages,
            base_channels: self.base_channels,
            n_filters: self.n_filters,
            blocks_per_stage: self.blocks_per_stage,
        }
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            alpha: self.alpha,
            lambda: self.lambda,
        }
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size.unwrap_or_else(|| contrastive::default_patch_size(self.crop))
    }

    /// Iterations after which the learning rate halves.
    pub fn milestones(&self) -> Vec<usize> {
        match &self.lr_halve_at {
            Some(m) => m.clone(),
            None => DEFAULT_HALVE_FRACTIONS
                .iter()
                .map(|f| (f * self.total_iters as f64).round() as usize)
                .collect(),
        }
    }

    /// Learning rate used by 1-based iteration `iter`.
    pub fn lr_at(&self, iter: usize) -> f64 {
        let halvings = self.milestones().iter().filter(|&&m| m < iter).count();
        self.lr * 0.5f64.powi(halvings as i32)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        let (b1, b2) = self.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return bad(format!("betas must lie in [0, 1), got ({b1}, {b2})"));
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        self.network().validate()?;
        let m = self.network().stride();
        if self.crop == 0 || self.crop % m != 0 {
            return bad(format!("crop {} is not a positive multiple of {m} (2^stages)", self.crop));
        }
        if let Some(at) = &self.lr_halve_at {
            if at.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("lr_halve_at must be strictly increasing, got {at:?}"));
            }
        }
        self.weights().validate()?;
        if !(self.tau > 0.0) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if self.ldgm_enabled {
            let p = self.patch_size();
            if p == 0 || p > self.crop {
                return bad(format!("patch_size {p} does not fit crop {}", self.crop));
            }
            if self.proj_dim == 0 {
                return bad("proj_dim must be at least 1".into());
            }
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "lr" => self.lr = parse(key, value)?,
            "betas" => match parse_list::<f64>(key, value)?[..] {
                [b1, b2] => self.betas = (b1, b2),
                _ => return Err(Error::Config(format!("betas needs two values, got {value:?}"))),
            },
            "eps" => self.eps = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "crop" => self.crop = parse(key, value)?,
            "total_iters" => self.total_iters = parse(key, value)?,
            "lr_halve_at" => {
                self.lr_halve_at = match value {
                    "auto" => None,
                    _ => Some(parse_list(key, value)?),
                }
            }
            "seed" => self.seed = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "stages" => self.stages = parse(key, value)?,
            "base_channels" => self.base_channels = parse(key, value)?,
            "n_filters" => self.n_filters = parse(key, value)?,
            "blocks_per_stage" => self.blocks_per_stage = parse(key, value)?,
            "ldgm_enabled" => self.ldgm_enabled = parse_bool(key, value)?,
            "gdfg_enabled" => self.gdfg_enabled = parse_bool(key, value)?,
            "n_negatives" => self.n_negatives = parse(key, value)?,
            "patch_size" => {
                self.patch_size = match value {
                    "auto" => None,
                    _ => Some(parse(key, value)?),
                }
            }
            "proj_dim" => self.proj_dim = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses and validates; keys not present keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_owned()) {
                return Err(Error::Config(format!("line {}: duplicate key {key:?}", n + 1)));
            }
            cfg.set(key, value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Canonical text form listing every key; `parse(to_text())` is lossless.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let opt = |v: &Option<usize>| v.map_or("auto".to_owned(), |v| v.to_string());
        let _ = writeln!(s, "lr = {:?}", self.lr);
        let _ = writeln!(s, "betas = {:?}, {:?}", self.betas.0, self.betas.1);
        let _ = writeln!(s, "eps = {:?}", self.eps);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "crop = {}", self.crop);
        let _ = writeln!(s, "total_iters = {}", self.total_iters);
        let halve = self.lr_halve_at.as_deref().map_or("auto".to_owned(), join);
        let _ = writeln!(s, "lr_halve_at = {halve}");
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "alpha = {:?}", self.alpha);
        let _ = writeln!(s, "lambda = {:?}", self.lambda);
        let _ = writeln!(s, "tau = {:?}", self.tau);
        let _ = writeln!(s, "stages = {}", self.stages);
        let _ = writeln!(s, "base_channels = {}", self.base_channels);
        let _ = writeln!(s, "n_filters = {}", self.n_filters);
        let _ = writeln!(s, "blocks_per_stage = {}", self.blocks_per_stage);
        let _ = writeln!(s, "ldgm_enabled = {}", self.ldgm_enabled);
        let _ = writeln!(s, "gdfg_enabled = {}", self.gdfg_enabled);
        let _ = writeln!(s, "n_negatives = {}", self.n_negatives);
        let _ = writeln!(s, "patch_size = {}", opt(&self.patch_size));
        let _ = writeln!(s, "proj_dim = {}", self.proj_dim);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = TrainConfig::default();
        cfg.lr = 3e-4;
        cfg.lr_halve_at = Some(vec![10, 20]);
        cfg.patch_size = Some(6);
        cfg.gdfg_enabled = false;
        assert_eq!(TrainConfig::parse(&cfg.to_text()).unwrap(), cfg);
        assert_eq!(TrainConfig::parse(&TrainConfig::default().to_text()).unwrap(), TrainConfig::default());
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(TrainConfig::parse("learning_rate = 1").unwrap_err().to_string().contains("unknown key"));
        assert!(TrainConfig::parse("crop = 30").is_err());
        assert!(TrainConfig::parse("lr = -1").is_err());
        assert!(TrainConfig::parse("lr_halve_at = 5, 5").is_err());
        assert!(TrainConfig::parse("lr = 1\nlr = 2").is_err());
        assert!(TrainConfig::parse("just words").is_err());
    }

    #[test]
    fn schedule_scales_with_budget() {
        let cfg = TrainConfig::parse("total_iters = 200\nlr = 0.1 # comment").unwrap();
        assert_eq!(cfg.milestones(), [150, 200]);
        assert_eq!(cfg.lr_at(150), 0.1);
        assert_eq!(cfg.lr_at(151), 0.05);
        assert_eq!(cfg.lr_at(201), 0.025);
    }
}
