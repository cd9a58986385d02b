//! Binary checkpoint format.
//!
//! Little-endian: magic `WREP`, version `u32`, network spec digest (32 bytes),
//! `n_classes` `u32`, then for each weight and bias tensor in layer order a
//! `u32` dims count, the dims as `u32`, and the `f32` payload. A trailing
//! block holds the epoch (`u32`) and the init, shuffle and dropout seeds (`u64` each).

use std::io::{Read, Write};

use crate::error::{Error, Result};

use super::{Network, NetworkSpec, Param, Tensor};

pub const MAGIC: &[u8; 4] = b"WREP";
pub const VERSION: u32 = 1;
const TRAILER_LEN: usize = 4 + 3 * 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CheckpointMeta {
    pub epoch: u32,
    pub init_seed: u64,
    pub shuffle_seed: u64,
    pub dropout_seed: u64,
}

/// Learned parameters tagged with the digest of the spec that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec_digest: [u8; 32],
    pub n_classes: u32,
    pub params: Vec<Param<f32>>,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn from_network(net: &Network<f32>, meta: CheckpointMeta) -> Result<Self> {
        Ok(Checkpoint {
            spec_digest: net.spec().digest(),
            n_classes: net.spec().n_classes()? as u32,
            params: net.params().to_vec(),
            meta,
        })
    }

    /// Rebuilds the network, refusing a spec whose digest differs.
    pub fn into_network(self, spec: NetworkSpec) -> Result<Network<f32>> {
        if spec.digest() != self.spec_digest {
            return Err(Error::Configuration(format!(
                "checkpoint was trained for network spec {} but {} was requested",
                hex::encode(self.spec_digest),
                hex::encode(spec.digest())
            )));
        }
        Network::from_params(spec, self.params)
    }

    pub fn digest_hex(&self) -> String {
        hex::encode(self.spec_digest)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&self.spec_digest)?;
        w.write_all(&self.n_classes.to_le_bytes())?;
        let mut buf = Vec::new();
        for p in &self.params {
            for t in p.tensors() {
                buf.clear();
                buf.extend_from_slice(&(t.dims().len() as u32).to_le_bytes());
                for &d in t.dims() {
                    buf.extend_from_slice(&(d as u32).to_le_bytes());
                }
                for v in t.data() {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
                w.write_all(&buf)?;
            }
        }
        w.write_all(&self.meta.epoch.to_le_bytes())?;
        for s in [self.meta.init_seed, self.meta.shuffle_seed, self.meta.dropout_seed] {
            w.write_all(&s.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let mut spec_digest = [0u8; 32];
        spec_digest.copy_from_slice(cur.take(32)?);
        let n_classes = cur.u32()?;

        let mut tensors = Vec::new();
        while bytes.len().saturating_sub(cur.pos) > TRAILER_LEN {
            let rank = cur.u32()? as usize;
            if rank == 0 || rank > 8 {
                return Err(Error::Format(format!("implausible tensor rank {rank}")));
            }
            let dims = (0..rank)
                .map(|_| cur.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let len = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let len = len.ok_or_else(|| Error::Format("tensor size overflows".into()))?;
            let payload = cur.take(len.checked_mul(4).ok_or_else(|| Error::Format("tensor size overflows".into()))?)?;
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(Tensor::new(dims, data).map_err(|e| Error::Format(e.to_string()))?);
        }
        if bytes.len() - cur.pos != TRAILER_LEN {
            return Err(Error::Format("truncated checkpoint trailer".into()));
        }
        if tensors.len() % 2 != 0 {
            return Err(Error::Format("odd number of parameter tensors".into()));
        }
        let meta = CheckpointMeta {
            epoch: cur.u32()?,
            init_seed: cur.u64()?,
            shuffle_seed: cur.u64()?,
            dropout_seed: cur.u64()?,
        };
        let mut it = tensors.into_iter();
        let mut params = Vec::new();
        while let (Some(weight), Some(bias)) = (it.next(), it.next()) {
            params.push(Param { weight, bias });
        }
        Ok(Checkpoint {
            spec_digest,
            n_classes,
            params,
            meta,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("unexpected end of checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_le_bytes(a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerSpec;

    fn small_spec() -> NetworkSpec {
        NetworkSpec {
            input: [1, 6, 6],
            layers: vec![
                LayerSpec::Conv { out_channels: 2, kernel: 3 },
                LayerSpec::Relu,
                LayerSpec::MaxPool2,
                LayerSpec::Flatten,
                LayerSpec::Dense { out: 3 },
            ],
        }
    }

    #[test]
    fn round_trip() {
        let net: Network<f32> = Network::init(small_spec(), 11).unwrap();
        let meta = CheckpointMeta {
            epoch: 4,
            init_seed: 11,
            shuffle_seed: 12,
            dropout_seed: 13,
        };
        let ck = Checkpoint::from_network(&net, meta).unwrap();
        let bytes = ck.to_bytes();
        assert_eq!(&bytes[..4], b"WREP");
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        let net2 = back.into_network(small_spec()).unwrap();
        assert_eq!(net2.params(), net.params());
    }

    #[test]
    fn rejects_wrong_spec_and_corruption() {
        let net: Network<f32> = Network::init(small_spec(), 1).unwrap();
        let ck = Checkpoint::from_network(&net, CheckpointMeta::default()).unwrap();
        let mut other = small_spec();
        other.layers[4] = LayerSpec::Dense { out: 4 };
        assert!(matches!(ck.clone().into_network(other), Err(Error::Configuration(_))));

        let bytes = ck.to_bytes();
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 5]), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Format(_))));
    }
}
