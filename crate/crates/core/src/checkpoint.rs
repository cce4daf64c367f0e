//! TOTC checkpoint files.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! "TOTC"                         4 bytes
//! version                        u16 (currently 1)
//! reserved                       u16, zero
//! input_dim, hidden_dim,
//! embed_dim, num_prototypes      4 × u32
//! normalize, prototypes_frozen   2 × u8
//! reserved                       u16, zero
//! temperature                    f64
//! W1, b1, W2, b2, C              f64, row-major, in this order
//! adam step, prototype steps     2 × u64
//! lr, weight_decay,
//! beta1, beta2, eps              5 × f64
//! first moments                  f64, same order and sizes as the parameters
//! second moments                 f64, same order and sizes as the parameters
//! ```

use std::fs;
use std::path::Path;

use crate::encoder::{AdamState, EncoderParams, EncoderShape, NUM_TENSORS};
use crate::error::{Error, Result};
use crate::model::ScoreSettings;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"TOTC";
pub const CHECKPOINT_VERSION: u16 = 1;

/// Everything needed to resume training or run inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: EncoderParams,
    pub adam: AdamState,
    pub settings: ScoreSettings,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let shape = self.params.shape();
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        for d in [shape.input_dim, shape.hidden_dim, shape.embed_dim, shape.num_prototypes] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.push(u8::from(self.settings.normalize));
        out.push(u8::from(self.adam.prototypes_frozen));
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&self.settings.temperature.to_le_bytes());
        let mut put = |vals: &[f64]| vals.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        for t in self.params.tensors() {
            put(t);
        }
        let a = &self.adam;
        let mut tail = Vec::new();
        tail.extend_from_slice(&a.step.to_le_bytes());
        tail.extend_from_slice(&a.prototype_steps.to_le_bytes());
        for v in [a.lr, a.weight_decay, a.beta1, a.beta2, a.eps] {
            tail.extend_from_slice(&v.to_le_bytes());
        }
        for m in a.first_moment.iter().chain(&a.second_moment) {
            m.iter().for_each(|v| tail.extend_from_slice(&v.to_le_bytes()));
        }
        out.extend_from_slice(&tail);
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic { path: path.to_path_buf(), expected: CHECKPOINT_MAGIC, found: magic });
        }
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                path: path.to_path_buf(),
                expected: CHECKPOINT_VERSION,
                found: version,
            });
        }
        r.u16()?;
        let shape = EncoderShape {
            input_dim: r.u32()? as usize,
            hidden_dim: r.u32()? as usize,
            embed_dim: r.u32()? as usize,
            num_prototypes: r.u32()? as usize,
        };
        let expected = expected_len(shape);
        if bytes.len() != expected {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                expected: expected as u64,
                found: bytes.len() as u64,
            });
        }
        let normalize = r.take(1)?[0] != 0;
        let frozen = r.take(1)?[0] != 0;
        r.u16()?;
        let temperature = r.f64()?;
        let mut params = EncoderParams::zeros(shape);
        for t in params.tensors_mut() {
            r.fill(t)?;
        }
        let mut adam = AdamState::new(&params, 0.0, 0.0);
        adam.step = r.u64()?;
        adam.prototype_steps = r.u64()?;
        adam.lr = r.f64()?;
        adam.weight_decay = r.f64()?;
        adam.beta1 = r.f64()?;
        adam.beta2 = r.f64()?;
        adam.eps = r.f64()?;
        adam.prototypes_frozen = frozen;
        for i in 0..NUM_TENSORS {
            r.fill(&mut adam.first_moment[i])?;
        }
        for i in 0..NUM_TENSORS {
            r.fill(&mut adam.second_moment[i])?;
        }
        Ok(Self { params, adam, settings: ScoreSettings { temperature, normalize } })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

fn expected_len(shape: EncoderShape) -> usize {
    let params = shape.input_dim * shape.hidden_dim
        + shape.hidden_dim
        + shape.hidden_dim * shape.embed_dim
        + shape.embed_dim
        + shape.num_prototypes * shape.embed_dim;
    4 + 2 + 2 + 16 + 4 + 8 + params * 8 + 16 + 40 + 2 * params * 8
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated {
                path: self.path.to_path_buf(),
                expected: (self.pos + n) as u64,
                found: self.bytes.len() as u64,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn fill(&mut self, dst: &mut [f64]) -> Result<()> {
        for v in dst.iter_mut() {
            *v = self.f64()?;
        }
        Ok(())
    }
}
