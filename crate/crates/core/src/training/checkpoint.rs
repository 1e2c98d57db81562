//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    4 bytes  "IDKP"
//! version  u32
//! records  until end of file:
//!   name_len u32, name (UTF-8), rank u32, dims u32 x rank, payload f64 x prod(dims)
//! ```
//!
//! A network is stored as one descriptor record per layer named
//! `<layer>#<kind>` (payload: stride or pooling window, empty otherwise),
//! followed by `<layer>.weight` and `<layer>.bias` for learnable layers.
//! Other record kinds (the boosted detector uses `BOOST`) can share the
//! same file; network decoding skips them.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::layers::{Conv2D, FullyConnected, Layer, LayerKind, MaxPool, Relu, Sigmoid, Softmax};
use crate::tensor::Tensor;

use super::network::Network;

pub const MAGIC: &[u8; 4] = b"IDKP";
pub const VERSION: u32 = 1;

const MAX_NAME_LEN: usize = 4096;
const MAX_RANK: usize = 8;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("record {0:?} not found")]
    Missing(String),
    #[error("shape mismatch for {name}: checkpoint has {found:?}, network expects {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Record {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self {
            name: name.into(),
            shape,
            data,
        }
    }

    pub fn from_tensor(name: impl Into<String>, t: &Tensor) -> Self {
        Self::new(name, t.shape().to_vec(), t.data().to_vec())
    }

    pub fn to_tensor(&self) -> Result<Tensor, CheckpointError> {
        Tensor::from_values(&self.shape, self.data.clone())
            .map_err(|e| CheckpointError::Corrupt(format!("{}: {e}", self.name)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub records: Vec<Record>,
}

impl Default for Checkpoint {
    fn default() -> Self {
        Self {
            version: VERSION,
            records: Vec::new(),
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return Err(CheckpointError::Truncated(what));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.name == name)
    }

    pub fn push(&mut self, record: Record) {
        self.records.push(record);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&(r.name.len() as u32).to_le_bytes());
            out.extend_from_slice(r.name.as_bytes());
            out.extend_from_slice(&(r.shape.len() as u32).to_le_bytes());
            for &d in &r.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &r.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4, "magic").map_err(|_| CheckpointError::BadMagic)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let mut records = Vec::new();
        while r.remaining() > 0 {
            let name_len = r.u32("name length")? as usize;
            if name_len > MAX_NAME_LEN {
                return Err(CheckpointError::Corrupt(format!("name length {name_len}")));
            }
            let name = std::str::from_utf8(r.take(name_len, "name")?)
                .map_err(|_| CheckpointError::Corrupt("record name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32("rank")? as usize;
            if rank > MAX_RANK {
                return Err(CheckpointError::Corrupt(format!("{name}: rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32("dimensions")? as usize);
            }
            let count = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|&c| c.checked_mul(8).is_some_and(|b| b <= r.remaining()))
                .ok_or(CheckpointError::Truncated("payload"))?;
            let data = r
                .take(count * 8, "payload")?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            records.push(Record { name, shape, data });
        }
        Ok(Self { version, records })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn from_network(net: &Network) -> Self {
        let mut ck = Checkpoint::default();
        ck.append_network(net);
        ck
    }

    pub fn append_network(&mut self, net: &Network) {
        for (layer, name) in net.layers().iter().zip(net.names()) {
            let hyper = layer.hyper_params();
            self.records.push(Record::new(
                format!("{name}#{}", layer.kind().tag()),
                vec![hyper.len()],
                hyper,
            ));
            for (pname, p) in layer.param_names().iter().zip(layer.params()) {
                self.records.push(Record::from_tensor(format!("{name}.{pname}"), p));
            }
        }
    }

    fn param(&self, layer: &str, pname: &str) -> Result<Tensor, CheckpointError> {
        let key = format!("{layer}.{pname}");
        self.get(&key)
            .ok_or(CheckpointError::Missing(key))?
            .to_tensor()
    }

    /// Rebuilds the network described by the layer descriptor records.
    pub fn to_network(&self) -> Result<Network, CheckpointError> {
        let mut net = Network::new();
        for rec in &self.records {
            let Some((name, tag)) = rec.name.split_once('#') else {
                continue;
            };
            let kind = LayerKind::from_tag(tag)
                .ok_or_else(|| CheckpointError::Corrupt(format!("unknown layer kind {tag:?}")))?;
            let hyper = |i: usize| -> Result<usize, CheckpointError> {
                rec.data
                    .get(i)
                    .filter(|v| v.fract() == 0.0 && **v >= 1.0 && **v <= u32::MAX as f64)
                    .map(|&v| v as usize)
                    .ok_or_else(|| CheckpointError::Corrupt(format!("{}: bad hyper-parameter", rec.name)))
            };
            let corrupt = |e: crate::layers::LayerError| CheckpointError::Corrupt(format!("{name}: {e}"));
            let layer: Layer = match kind {
                LayerKind::Conv => {
                    Conv2D::new(self.param(name, "weight")?, self.param(name, "bias")?, hyper(0)?)
                        .map_err(corrupt)?
                        .into()
                }
                LayerKind::Dense => FullyConnected::new(self.param(name, "weight")?, self.param(name, "bias")?)
                    .map_err(corrupt)?
                    .into(),
                LayerKind::MaxPool => MaxPool::new(hyper(0)?).map_err(corrupt)?.into(),
                LayerKind::Relu => Layer::Relu(Relu::default()),
                LayerKind::Sigmoid => Layer::Sigmoid(Sigmoid::default()),
                LayerKind::Softmax => Layer::Softmax(Softmax::default()),
            };
            net.push_named(name, layer);
        }
        if net.layers().is_empty() {
            return Err(CheckpointError::Corrupt("no layers in checkpoint".into()));
        }
        Ok(net)
    }
}

pub fn save_checkpoint(net: &Network, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    Checkpoint::from_network(net).save(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    Checkpoint::load(path)
}

/// Copies the parameters of every layer named in `layer_filter` from `ckpt`
/// into `net`. Layers outside the filter keep their current values. Returns
/// the number of parameter tensors copied.
pub fn fine_tune_init(
    net: &mut Network,
    ckpt: &Checkpoint,
    layer_filter: &[&str],
) -> Result<usize, CheckpointError> {
    // validate everything before mutating
    let mut updates = Vec::new();
    for &lname in layer_filter {
        let li = net
            .index_of(lname)
            .ok_or_else(|| CheckpointError::Missing(format!("layer {lname} in network")))?;
        let layer = &net.layers()[li];
        for (pi, (pname, p)) in layer.param_names().iter().zip(layer.params()).enumerate() {
            let key = format!("{lname}.{pname}");
            let rec = ckpt.get(&key).ok_or_else(|| CheckpointError::Missing(key.clone()))?;
            if rec.shape != p.shape() {
                return Err(CheckpointError::ShapeMismatch {
                    name: key,
                    expected: p.shape().to_vec(),
                    found: rec.shape.clone(),
                });
            }
            updates.push((li, pi, rec.to_tensor()?));
        }
    }
    let copied = updates.len();
    for (li, pi, t) in updates {
        *net.layers_mut()[li].params_mut()[pi] = t;
    }
    Ok(copied)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::templates;

    #[test]
    fn round_trip_is_bit_exact() {
        let net = templates::deep_cnn((1, 10, 10), 3, 7).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.idkp");
        save_checkpoint(&net, &path).unwrap();
        let ck = load_checkpoint(&path).unwrap();
        let back = ck.to_network().unwrap();
        assert_eq!(back.names(), net.names());
        for (a, b) in net.layers().iter().zip(back.layers()) {
            assert_eq!(a.kind(), b.kind());
            assert_eq!(a.hyper_params(), b.hyper_params());
            for (p, q) in a.params().iter().zip(b.params()) {
                let pb: Vec<u64> = p.data().iter().map(|v| v.to_bits()).collect();
                let qb: Vec<u64> = q.data().iter().map(|v| v.to_bits()).collect();
                assert_eq!(pb, qb);
            }
        }
        assert_eq!(&std::fs::read(&path).unwrap()[..4], b"IDKP");
    }

    #[test]
    fn corrupt_inputs_error() {
        assert!(matches!(Checkpoint::from_bytes(b"NOPE\x01\0\0\0"), Err(CheckpointError::BadMagic)));
        assert!(matches!(Checkpoint::from_bytes(b"ID"), Err(CheckpointError::BadMagic)));
        assert!(matches!(Checkpoint::from_bytes(b"IDKP\x02\0\0\0"), Err(CheckpointError::Version(2))));
        let good = Checkpoint::from_network(&templates::small_cnn((1, 6, 6), 2, 1).unwrap()).to_bytes();
        for cut in [9, 20, good.len() - 3] {
            assert!(Checkpoint::from_bytes(&good[..cut]).is_err(), "cut at {cut}");
        }
        let mut huge = b"IDKP\x01\0\0\0".to_vec();
        huge.extend_from_slice(&1u32.to_le_bytes());
        huge.push(b'x');
        huge.extend_from_slice(&2u32.to_le_bytes());
        huge.extend_from_slice(&u32::MAX.to_le_bytes());
        huge.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(Checkpoint::from_bytes(&huge), Err(CheckpointError::Truncated(_))));
        let empty = Checkpoint::default();
        assert!(empty.to_network().is_err());
    }

    #[test]
    fn fine_tune_copies_only_filtered_layers() {
        let pre = templates::small_cnn((1, 8, 8), 2, 1).unwrap();
        let ck = Checkpoint::from_network(&pre);
        let fresh = templates::small_cnn((1, 8, 8), 2, 2).unwrap();

        let mut net = fresh.clone();
        assert_eq!(fine_tune_init(&mut net, &ck, &[]).unwrap(), 0);
        for (a, b) in net.layers().iter().zip(fresh.layers()) {
            assert_eq!(a.params(), b.params());
        }

        assert_eq!(fine_tune_init(&mut net, &ck, &["conv0"]).unwrap(), 2);
        assert_eq!(net.layers()[0].params(), pre.layers()[0].params());
        assert_eq!(net.layers()[3].params(), fresh.layers()[3].params());

        let other = templates::small_cnn((1, 8, 8), 3, 1).unwrap();
        let ck3 = Checkpoint::from_network(&other);
        let mut net = fresh.clone();
        assert!(matches!(
            fine_tune_init(&mut net, &ck3, &["conv0", "fc3"]),
            Err(CheckpointError::ShapeMismatch { .. })
        ));
        // failed call leaves the network untouched
        assert_eq!(net.layers()[0].params(), fresh.layers()[0].params());
        assert!(fine_tune_init(&mut net, &ck, &["nope"]).is_err());
    }
}
