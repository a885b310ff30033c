//! Versioned little-endian binary checkpoint of one agent.
//!
//! ```text
//! magic      8 bytes  "IDRQNET\0"
//! version    u32
//! seed       u64      master seed
//! stream     u64      agent stream id
//! counters   u64 x 3  train steps, target syncs, episodes
//! online     network
//! target     network
//! network := layers u32, sizes u32 x (layers + 1),
//!            per layer: weights f64 x (out * in) row-major, biases f64 x out
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::network::{Dense, QNetwork};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"IDRQNET\0";
pub const VERSION: u32 = 1;
const MAX_LAYERS: usize = 16;
const MAX_WIDTH: usize = 4096;
const MAX_PARAMS: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentCheckpoint {
    pub master_seed: u64,
    pub stream: u64,
    pub train_steps: u64,
    pub syncs: u64,
    pub episodes: u64,
    pub online: QNetwork,
    pub target: QNetwork,
}

fn put_net(out: &mut Vec<u8>, net: &QNetwork) {
    let sizes = net.sizes();
    out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    for s in sizes {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    for l in net.layers() {
        for v in l.weights.iter().chain(&l.biases) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.buf.len() < n {
            return Err(Error::data("checkpoint is truncated"));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::data("checkpoint size overflow"))?)?;
        let v: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::data("checkpoint holds non-finite parameters"));
        }
        Ok(v)
    }

    fn net(&mut self) -> Result<QNetwork> {
        let layers = self.u32()? as usize;
        if layers == 0 || layers > MAX_LAYERS {
            return Err(Error::data(format!("checkpoint declares {layers} layers")));
        }
        let sizes = (0..=layers)
            .map(|_| self.u32().map(|s| s as usize))
            .collect::<Result<Vec<_>>>()?;
        if sizes.iter().any(|&s| s == 0 || s > MAX_WIDTH) {
            return Err(Error::data(format!("checkpoint layer sizes {sizes:?} out of range")));
        }
        let total: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if total > MAX_PARAMS {
            return Err(Error::data(format!("checkpoint declares {total} parameters")));
        }
        let dense = sizes
            .windows(2)
            .map(|w| {
                Ok(Dense {
                    inputs: w[0],
                    outputs: w[1],
                    weights: self.f64s(w[0] * w[1])?,
                    biases: self.f64s(w[1])?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        QNetwork::from_layers(dense)
    }
}

impl AgentCheckpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 16 * self.online.num_params());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for v in [self.master_seed, self.stream, self.train_steps, self.syncs, self.episodes] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        put_net(&mut out, &self.online);
        put_net(&mut out, &self.target);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes };
        if r.take(8)? != MAGIC {
            return Err(Error::data("not a checkpoint file (bad magic)"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::data(format!("unsupported checkpoint version {version}")));
        }
        let master_seed = r.u64()?;
        let stream = r.u64()?;
        let train_steps = r.u64()?;
        let syncs = r.u64()?;
        let episodes = r.u64()?;
        let online = r.net()?;
        let target = r.net()?;
        if online.sizes() != target.sizes() {
            return Err(Error::data("online and target networks differ in shape"));
        }
        if !r.buf.is_empty() {
            return Err(Error::data(format!("{} trailing bytes after checkpoint", r.buf.len())));
        }
        Ok(Self {
            master_seed,
            stream,
            train_steps,
            syncs,
            episodes,
            online,
            target,
        })
    }

    /// Writes through a temporary file and a rename, so an interrupted save
    /// never leaves a partial checkpoint behind.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.encode())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::decode(&bytes).map_err(|e| Error::data(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> AgentCheckpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let online = QNetwork::glorot(&[4, 8, 3], &mut rng).unwrap();
        let target = QNetwork::glorot(&[4, 8, 3], &mut rng).unwrap();
        AgentCheckpoint {
            master_seed: 7,
            stream: 2,
            train_steps: 123,
            syncs: 1,
            episodes: 9,
            online,
            target,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let back = AgentCheckpoint::decode(&ck.encode()).unwrap();
        assert_eq!(back, ck);
        let obs = [0.1, -0.2, 0.3, 0.4];
        let a = ck.online.forward(&obs).unwrap();
        let b = back.online.forward(&obs).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().encode();
        assert!(AgentCheckpoint::decode(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(AgentCheckpoint::decode(&extra).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(AgentCheckpoint::decode(&magic).is_err());
        let mut version = bytes.clone();
        version[8] = 9;
        assert!(AgentCheckpoint::decode(&version).is_err());
        // absurd layer count
        let mut layers = bytes;
        layers[52..56].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(AgentCheckpoint::decode(&layers).is_err());
        assert!(AgentCheckpoint::decode(&[]).is_err());
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.ckpt");
        let ck = sample();
        ck.save(&path).unwrap();
        assert_eq!(AgentCheckpoint::load(&path).unwrap(), ck);
        assert!(!path.with_extension("tmp").exists());
    }
}
