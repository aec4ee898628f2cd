//! Binary checkpoint, all integers little-endian:
//!
//! ```text
//! "SPPW" | u32 version | u64 model hash | u32 epoch | u32 flags | u64 count
//! count × f32 parameters
//! if flags & 1: f64 beta1 | f64 beta2 | f64 eps | u64 step | count × f32 m | count × f32 v
//! ```
//!
//! The model hash covers the network config and structure spec, so a
//! checkpoint cannot be loaded into a differently shaped model.

use std::path::Path;

use super::{AdamState, Network, NetworkConfig};
use crate::design::StructureSpec;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SPPW";
const VERSION: u32 = 1;
const FLAG_ADAM: u32 = 1;

/// FNV-1a over the canonical JSON of the config and spec.
pub fn model_hash(cfg: &NetworkConfig, spec: &StructureSpec) -> u64 {
    let text = serde_json::to_string(&(cfg, spec)).expect("config serializes");
    text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model_hash: u64,
    pub epoch: u32,
    pub params: Vec<f64>,
    pub adam: Option<AdamState>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::format(self.path, format!("truncated checkpoint while reading {what}"))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32s(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(count.saturating_mul(4), what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}

fn put_f32s(out: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

impl Checkpoint {
    pub fn capture(net: &Network, spec: &StructureSpec, epoch: u32, adam: Option<&AdamState>) -> Self {
        Self {
            model_hash: model_hash(net.config(), spec),
            epoch,
            params: net.params.values.clone(),
            adam: adam.cloned(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.params.len();
        let mut out = Vec::with_capacity(32 + 12 * n + 32);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.model_hash.to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        let flags = if self.adam.is_some() { FLAG_ADAM } else { 0 };
        out.extend_from_slice(&flags.to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        put_f32s(&mut out, &self.params);
        if let Some(a) = &self.adam {
            for x in [a.beta1, a.beta2, a.eps] {
                out.extend_from_slice(&x.to_le_bytes());
            }
            out.extend_from_slice(&a.t.to_le_bytes());
            put_f32s(&mut out, &a.m);
            put_f32s(&mut out, &a.v);
        }
        out
    }

    /// `path` is only used in error messages.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        if r.take(4, "magic")? != CHECKPOINT_MAGIC {
            return Err(Error::format(path, "bad magic, not a checkpoint"));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::format(path, format!("unsupported checkpoint version {version}")));
        }
        let model_hash = r.u64("model hash")?;
        let epoch = r.u32("epoch")?;
        let flags = r.u32("flags")?;
        let n = usize::try_from(r.u64("parameter count")?)
            .map_err(|_| Error::format(path, "parameter count too large"))?;
        let params = r.f32s(n, "parameters")?;
        let adam = if flags & FLAG_ADAM != 0 {
            let beta1 = r.f64("adam beta1")?;
            let beta2 = r.f64("adam beta2")?;
            let eps = r.f64("adam eps")?;
            let t = r.u64("adam step")?;
            let m = r.f32s(n, "adam first moments")?;
            let v = r.f32s(n, "adam second moments")?;
            Some(AdamState { m, v, t, beta1, beta2, eps })
        } else {
            None
        };
        if r.pos != bytes.len() {
            return Err(Error::format(path, format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            model_hash,
            epoch,
            params,
            adam,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// Rebuilds the network; fails with [`Error::CheckpointMismatch`] when the
    /// checkpoint was written for another config or spec.
    pub fn restore(self, cfg: NetworkConfig, spec: &StructureSpec) -> Result<(Network, Option<AdamState>)> {
        let expected = model_hash(&cfg, spec);
        if expected != self.model_hash {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint model hash {:016x}, current configuration {expected:016x}",
                self.model_hash
            )));
        }
        let mut net = Network::zeros(cfg)?;
        if self.params.len() != net.num_params() {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint has {} parameters, network has {}",
                self.params.len(),
                net.num_params()
            )));
        }
        net.set_values(self.params)?;
        Ok((net, self.adam))
    }
}
