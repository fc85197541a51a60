//! Binary checkpoints.
//!
//! Little-endian layout: magic `MNMC`, `u32` version, length-prefixed config
//! text, `u64` iteration, RNG state (32-byte seed, `u64` stream, `u128` word
//! position), `u64` optimizer step, then each parameter as a length-prefixed
//! name, `u32` rank, `u64` dims and three `f64` blocks (value, first and
//! second moment). A CRC-32 of everything before it closes the file.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Param, ParamStore, Real};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MNMC";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
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
pub struct SavedParam {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: String,
    pub iteration: u64,
    pub rng: RngState,
    pub step: u64,
    pub params: Vec<SavedParam>,
}

impl Checkpoint {
    pub fn capture<T: Real>(config: String, iteration: u64, rng: &ChaCha8Rng, store: &ParamStore<T>) -> Self {
        let f = |xs: &[T]| xs.iter().map(|x| x.as_f64()).collect();
        Self {
            config,
            iteration,
            rng: RngState::capture(rng),
            step: store.step(),
            params: store
                .iter()
                .map(|(name, p)| SavedParam {
                    name: name.to_string(),
                    shape: p.shape.clone(),
                    value: f(&p.value),
                    m: f(&p.m),
                    v: f(&p.v),
                })
                .collect(),
        }
    }

    pub fn param_store<T: Real>(&self) -> ParamStore<T> {
        let f = |xs: &[f64]| xs.iter().map(|&x| T::lit(x)).collect();
        let mut store = ParamStore::new();
        for p in &self.params {
            store.insert_param(
                p.name.clone(),
                Param {
                    shape: p.shape.clone(),
                    value: f(&p.value),
                    m: f(&p.m),
                    v: f(&p.v),
                },
            );
        }
        store.set_step(self.step);
        store
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        put_str(&mut b, &self.config);
        b.extend_from_slice(&self.iteration.to_le_bytes());
        b.extend_from_slice(&self.rng.seed);
        b.extend_from_slice(&self.rng.stream.to_le_bytes());
        b.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        b.extend_from_slice(&self.step.to_le_bytes());
        b.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for p in &self.params {
            put_str(&mut b, &p.name);
            b.extend_from_slice(&(p.shape.len() as u32).to_le_bytes());
            for &d in &p.shape {
                b.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for block in [&p.value, &p.m, &p.v] {
                for x in block.iter() {
                    b.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        let crc = crc32fast::hash(&b);
        b.extend_from_slice(&crc.to_le_bytes());
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::Checkpoint(format!("file too short ({} bytes)", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Checkpoint("bad magic bytes".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(Error::Checkpoint("checksum mismatch".into()));
        }
        let mut r = Reader { buf: body, pos: 4 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::CheckpointVersion {
                found: version,
                expected: VERSION,
            });
        }
        let config = r.string()?;
        let iteration = r.u64()?;
        let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().unwrap());
        let step = r.u64()?;
        let n = r.u32()? as usize;
        let mut params = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let count = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::Checkpoint(format!("`{name}` has an overflowing shape")))?;
            let mut blocks = Vec::with_capacity(3);
            for _ in 0..3 {
                blocks.push(r.f64s(count)?);
            }
            let v = blocks.pop().unwrap();
            let m = blocks.pop().unwrap();
            let value = blocks.pop().unwrap();
            params.push(SavedParam {
                name,
                shape,
                value,
                m,
                v,
            });
        }
        if r.pos != body.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", body.len() - r.pos)));
        }
        Ok(Self {
            config,
            iteration,
            rng: RngState { seed, stream, word_pos },
            step,
            params,
        })
    }

    /// Writes via a temporary file and rename so a crash never leaves a
    /// half-written checkpoint under `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn put_str(b: &mut Vec<u8>, s: &str) {
    b.extend_from_slice(&(s.len() as u32).to_le_bytes());
    b.extend_from_slice(s.as_bytes());
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

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("name is not UTF-8".into()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Checkpoint("block too large".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
