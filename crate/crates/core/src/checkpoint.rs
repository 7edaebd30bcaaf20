//! Binary model checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! | field        | type            |
//! |--------------|-----------------|
//! | magic        | 8 bytes `TSELCKPT` |
//! | version      | u32 (= 1)       |
//! | d_raw, d_hidden, d_feat, d_sem | 4 × u64 |
//! | seed         | u64             |
//! | alpha, eta, gamma, mu, lambda | 5 × f64 |
//! | tensors      | f64, row-major, in order adapter_w1, adapter_b1, adapter_w2, adapter_b2, attn_w, vis_w |

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ModelDims, ModelParams, TensorId};

const MAGIC: &[u8; 8] = b"TSELCKPT";
const VERSION: u32 = 1;

/// Run metadata stored alongside the parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub alpha: f64,
    pub eta: f64,
    pub gamma: f64,
    pub mu: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.params.dims;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for n in [d.d_raw, d.d_hidden, d.d_feat, d.d_sem] {
            out.extend_from_slice(&(n as u64).to_le_bytes());
        }
        out.extend_from_slice(&self.meta.seed.to_le_bytes());
        let m = &self.meta;
        for x in [m.alpha, m.eta, m.gamma, m.mu, m.lambda] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for t in TensorId::ALL {
            for x in self.params.tensor(t) {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::invalid("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::invalid(format!("unsupported checkpoint version {version}")));
        }
        let dims = ModelDims {
            d_raw: r.u64()? as usize,
            d_hidden: r.u64()? as usize,
            d_feat: r.u64()? as usize,
            d_sem: r.u64()? as usize,
        };
        dims.validate()?;
        let meta = CheckpointMeta {
            seed: r.u64()?,
            alpha: r.f64()?,
            eta: r.f64()?,
            gamma: r.f64()?,
            mu: r.f64()?,
            lambda: r.f64()?,
        };
        let mut params = ModelParams::zeros(dims);
        for t in TensorId::ALL {
            for x in params.tensor_mut(t) {
                *x = r.f64()?;
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::invalid("trailing bytes after checkpoint tensors"));
        }
        if !params.is_finite() {
            return Err(Error::NonFinite {
                tensor: "checkpoint".into(),
            });
        }
        Ok(Checkpoint { meta, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::invalid("truncated checkpoint"));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let dims = ModelDims {
            d_raw: 3,
            d_hidden: 4,
            d_feat: 3,
            d_sem: 2,
        };
        Checkpoint {
            meta: CheckpointMeta {
                seed: 9,
                alpha: 0.5,
                eta: 1e-4,
                gamma: 1e-4,
                mu: 0.25,
                lambda: 0.2,
            },
            params: ModelParams::init(dims, 9).unwrap(),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn rejects_truncated_and_corrupt() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(Checkpoint::from_bytes(&long).is_err());
    }
}
