//! Checkpoint files.
//!
//! Layout, all integers little-endian:
//! magic `VSRW` | version u32 | fingerprint (64 hex bytes) | config length u32 |
//! config JSON | parameter count u64 | parameters as f32, canonical order.

use std::path::Path;

use crate::error::{ensure, Error, Result};
use crate::model::{param_specs, ModelConfig, ModelWeights};
use crate::numerics::Tensor;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"VSRW";
const VERSION: u32 = 1;

pub fn encode_weights(cfg: &ModelConfig, weights: &ModelWeights<f32>) -> Result<Vec<u8>> {
    weights.check_config(cfg)?;
    let json = serde_json::to_vec(cfg).map_err(|e| Error::Config(e.to_string()))?;
    let flat = weights.flatten();
    let mut out = Vec::with_capacity(84 + json.len() + 4 * flat.len());
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(cfg.fingerprint().as_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(flat.len() as u64).to_le_bytes());
    for v in flat {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("weights file is truncated".into()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Decodes a checkpoint, returning the configuration stored in it.
pub fn decode_weights(bytes: &[u8]) -> Result<(ModelConfig, ModelWeights<f32>)> {
    let mut r = Reader { bytes, at: 0 };
    ensure!(r.take(4)? == WEIGHTS_MAGIC, Format, "not a weights file");
    let version = r.u32()?;
    ensure!(version == VERSION, Format, "unsupported weights version {}", version);
    let fingerprint = r.take(64)?.to_vec();
    let json_len = r.u32()? as usize;
    let cfg: ModelConfig =
        serde_json::from_slice(r.take(json_len)?).map_err(|e| Error::Format(format!("embedded config: {e}")))?;
    ensure!(fingerprint == cfg.fingerprint().as_bytes(), Format, "embedded config does not match its fingerprint");
    cfg.validate().map_err(|e| Error::Format(format!("embedded config: {e}")))?;
    let count = r.u64()?;
    let specs = param_specs(&cfg);
    let expected: usize = specs.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    ensure!(count == expected as u64, Format, "payload holds {} values, config needs {}", count, expected);
    let payload = r.take(expected * 4)?;
    ensure!(r.at == bytes.len(), Format, "trailing bytes after weights payload");
    let mut values = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
    let tensors = specs
        .iter()
        .map(|(_, shape)| {
            let n = shape.iter().product();
            Tensor::new(shape, values.by_ref().take(n).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let weights = ModelWeights::from_tensors(&cfg, tensors)?;
    Ok((cfg, weights))
}

pub fn save_weights(cfg: &ModelConfig, weights: &ModelWeights<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_weights(cfg, weights)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint and checks it was written for `cfg`.
pub fn load_weights(path: impl AsRef<Path>, cfg: &ModelConfig) -> Result<ModelWeights<f32>> {
    let (stored, weights) = load_checkpoint(path)?;
    ensure!(
        stored.fingerprint() == cfg.fingerprint(),
        Config,
        "checkpoint was written for a different model config"
    );
    Ok(weights)
}

/// Loads a checkpoint together with the configuration embedded in it.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelConfig, ModelWeights<f32>)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}
