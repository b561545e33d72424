//! Versioned binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "CFMIMOCK"
//! version      u32      currently 1
//! kind         u8       0 = MAPPO, 1 = DQN
//! iteration    u64      training iterations completed
//! config_len   u64      length of the JSON config echo
//! config       bytes    UTF-8 JSON
//! nets         u32      number of networks
//! per network:
//!   layers+1   u32      number of widths
//!   widths     u32 each
//!   params     f64 each (count implied by the widths)
//! ```
//!
//! MAPPO stores the critic first, then one actor (shared) or one per AP.
//! DQN stores the online Q-network.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::CheckpointError;
use crate::nn::Mlp;

const MAGIC: &[u8; 8] = b"CFMIMOCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Mappo,
    Dqn,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mappo => "mappo",
            ModelKind::Dqn => "dqn",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub iteration: u64,
    pub config_json: String,
    pub nets: Vec<Mlp>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        b.push(match self.kind {
            ModelKind::Mappo => 0,
            ModelKind::Dqn => 1,
        });
        b.extend_from_slice(&self.iteration.to_le_bytes());
        b.extend_from_slice(&(self.config_json.len() as u64).to_le_bytes());
        b.extend_from_slice(self.config_json.as_bytes());
        b.extend_from_slice(&(self.nets.len() as u32).to_le_bytes());
        for net in &self.nets {
            b.extend_from_slice(&(net.sizes().len() as u32).to_le_bytes());
            for &w in net.sizes() {
                b.extend_from_slice(&(w as u32).to_le_bytes());
            }
            for &p in net.params() {
                b.extend_from_slice(&p.to_le_bytes());
            }
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let kind = match r.take(1)?[0] {
            0 => ModelKind::Mappo,
            1 => ModelKind::Dqn,
            k => return Err(CheckpointError::Corrupt(format!("unknown model kind {k}"))),
        };
        let iteration = r.u64()?;
        let len = r.u64()? as usize;
        let config_json = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| CheckpointError::Corrupt("config echo is not UTF-8".into()))?;
        let count = r.u32()? as usize;
        let mut nets = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let n = r.u32()? as usize;
            if !(2..=64).contains(&n) {
                return Err(CheckpointError::Corrupt(format!("implausible layer count {n}")));
            }
            let sizes = (0..n).map(|_| r.u32().map(|w| w as usize)).collect::<Result<Vec<_>, _>>()?;
            let len: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
            if len * 8 > bytes.len() {
                return Err(CheckpointError::Corrupt("parameter block longer than file".into()));
            }
            let params = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
            if params.iter().any(|p| !p.is_finite()) {
                return Err(CheckpointError::Corrupt("non-finite parameter".into()));
            }
            nets.push(Mlp::from_params(&sizes, params).expect("length derived from widths"));
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::Corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            kind,
            iteration,
            config_json,
            nets,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn expect_kind(&self, kind: ModelKind) -> Result<(), CheckpointError> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(CheckpointError::Kind {
                expected: kind.name(),
                found: self.kind.name(),
            })
        }
    }

    /// Reject networks whose widths differ from what the scenario needs.
    pub fn expect_shapes(&self, expected: &[Vec<usize>]) -> Result<(), CheckpointError> {
        if self.nets.len() != expected.len() {
            return Err(CheckpointError::Corrupt(format!(
                "{} networks stored, {} expected",
                self.nets.len(),
                expected.len()
            )));
        }
        for (index, (net, want)) in self.nets.iter().zip(expected).enumerate() {
            if net.sizes() != want.as_slice() {
                return Err(CheckpointError::Shape {
                    index,
                    expected: want.clone(),
                    found: net.sizes().to_vec(),
                });
            }
        }
        Ok(())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| CheckpointError::Corrupt(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::make_rng;

    fn sample() -> Checkpoint {
        let mut rng = make_rng(1, "ckpt");
        Checkpoint {
            kind: ModelKind::Mappo,
            iteration: 12,
            config_json: "{\"rng_seed\":7}".into(),
            nets: vec![
                Mlp::orthogonal(&[5, 4, 1], 1.0, 1.0, &mut rng),
                Mlp::orthogonal(&[3, 6, 7], 1.0, 0.01, &mut rng),
            ],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ck = sample();
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = sample().to_bytes();
        assert!(matches!(Checkpoint::from_bytes(b"nonsense"), Err(CheckpointError::BadMagic)));
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 3]),
            Err(CheckpointError::Corrupt(_))
        ));
        let mut v2 = bytes.clone();
        v2[8] = 2;
        assert!(matches!(Checkpoint::from_bytes(&v2), Err(CheckpointError::Version(2))));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let ck = sample();
        assert!(ck.expect_shapes(&[vec![5, 4, 1], vec![3, 6, 7]]).is_ok());
        let err = ck.expect_shapes(&[vec![5, 4, 1], vec![4, 6, 7]]).unwrap_err();
        assert!(matches!(err, CheckpointError::Shape { index: 1, .. }));
        assert!(ck.expect_kind(ModelKind::Dqn).is_err());
    }
}
