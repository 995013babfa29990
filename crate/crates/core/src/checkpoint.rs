//! Binary training snapshots.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "DFDNCKPT" | version u32 | iteration u64
//! config: len u64 + UTF-8 text (canonical key = value form)
//! rng:    seed [u8; 32] | stream u64 | word_pos u128
//! params: count u64, then per tensor: name (len u64 + bytes) | rank u64 | dims u64… | f64…
//! adam:   beta1 f64 | beta2 f64 | eps f64 | step u64 | m tensors… | v tensors…
//! ```
//!
//! Encoding is canonical, so load followed by save reproduces the file.

use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::optim::Adam;
use crate::params::ParamStore;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"DFDNCKPT";
const VERSION: u32 = 1;
/// Rejects absurd lengths before allocating.
const MAX_LEN: u64 = 1 << 32;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// Completed training iterations.
    pub iteration: u64,
    pub config: TrainConfig,
    pub params: ParamStore,
    pub adam: Adam,
    pub rng: RngState,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.0.extend_from_slice(b);
    }

    fn tensor(&mut self, t: &Tensor) {
        self.u64(t.shape().len() as u64);
        for &d in t.shape() {
            self.u64(d as u64);
        }
        for &v in t.data() {
            self.f64(v);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        if n > MAX_LEN {
            return Err(Error::Checkpoint(format!("implausible length {n} at byte {}", self.pos - 8)));
        }
        Ok(n as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.len()?;
        self.take(n)
    }

    fn tensor(&mut self) -> Result<Tensor> {
        let rank = self.len()?;
        let shape = (0..rank).map(|_| self.len()).collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&n| n as u64 <= MAX_LEN)
            .ok_or_else(|| Error::Checkpoint(format!("implausible tensor shape {shape:?}")))?;
        let data = (0..n).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Ok(Tensor::from_vec(&shape, data))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.0.extend_from_slice(&VERSION.to_le_bytes());
        w.u64(self.iteration);
        w.bytes(self.config.to_text().as_bytes());
        w.0.extend_from_slice(&self.rng.seed);
        w.u64(self.rng.stream);
        w.0.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        w.u64(self.params.len() as u64);
        for (name, t) in self.params.iter() {
            w.bytes(name.as_bytes());
            w.tensor(t);
        }
        w.f64(self.adam.beta1);
        w.f64(self.adam.beta2);
        w.f64(self.adam.eps);
        w.u64(self.adam.step);
        for t in self.adam.m.iter().chain(&self.adam.v) {
            w.tensor(t);
        }
        w.0
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(r.array()?);
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let iteration = r.u64()?;
        let text = std::str::from_utf8(r.bytes()?)
            .map_err(|_| Error::Checkpoint("configuration is not UTF-8".into()))?;
        let config = TrainConfig::parse(text)?;
        let rng = RngState {
            seed: r.array()?,
            stream: r.u64()?,
            word_pos: u128::from_le_bytes(r.array()?),
        };
        let n = r.len()?;
        let mut params = ParamStore::new();
        for _ in 0..n {
            let name = std::str::from_utf8(r.bytes()?)
                .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
                .to_owned();
            let t = r.tensor()?;
            if params.id(&name).is_some() {
                return Err(Error::Checkpoint(format!("duplicate parameter {name}")));
            }
            params.add(name, t);
        }
        let (beta1, beta2, eps, step) = (r.f64()?, r.f64()?, r.f64()?, r.u64()?);
        let m = (0..n).map(|_| r.tensor()).collect::<Result<Vec<_>>>()?;
        let v = (0..n).map(|_| r.tensor()).collect::<Result<Vec<_>>>()?;
        for (t, (m, v)) in params.tensors().iter().zip(m.iter().zip(&v)) {
            if m.shape() != t.shape() || v.shape() != t.shape() {
                return Err(Error::Checkpoint("optimizer moment shape mismatch".into()));
            }
        }
        if r.pos != buf.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", buf.len() - r.pos)));
        }
        Ok(Checkpoint {
            iteration,
            config,
            params,
            adam: Adam {
                beta1,
                beta2,
                eps,
                step,
                m,
                v,
            },
            rng,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }

    /// Inference model built from the stored parameters.
    pub fn model(&self) -> Result<Model> {
        Model::from_parts(&self.config, self.params.clone())
    }
}
