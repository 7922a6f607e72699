//! Middlebury `.flo`: float32 tag 202021.25 ("PIEH"), u32 width, u32 height,
//! then row-major interleaved `(u, v)` float32 pairs, all little-endian.

use std::path::Path;

use super::FlowField;
use crate::error::{Error, Result};

pub const FLO_TAG: f32 = 202021.25;

pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * flow.u().len());
    out.extend_from_slice(&FLO_TAG.to_le_bytes());
    out.extend_from_slice(&(flow.width() as u32).to_le_bytes());
    out.extend_from_slice(&(flow.height() as u32).to_le_bytes());
    for (u, v) in flow.u().iter().zip(flow.v()) {
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_flo(bytes: &[u8]) -> Result<FlowField> {
    let word = |i: usize| -> Result<[u8; 4]> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| [b[0], b[1], b[2], b[3]])
            .ok_or_else(|| Error::Format("flo file truncated".into()))
    };
    let tag = f32::from_le_bytes(word(0)?);
    if tag != FLO_TAG {
        return Err(Error::Format(format!("bad flo tag {tag}")));
    }
    let width = u32::from_le_bytes(word(1)?) as usize;
    let height = u32::from_le_bytes(word(2)?) as usize;
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::Format("flo dimensions overflow".into()))?;
    if bytes.len() < 12 + 8 * n {
        return Err(Error::Format(format!("flo payload truncated: {width}×{height} needs {} bytes", 12 + 8 * n)));
    }
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for i in 0..n {
        u.push(f32::from_le_bytes(word(3 + 2 * i)?));
        v.push(f32::from_le_bytes(word(4 + 2 * i)?));
    }
    FlowField::new(height, width, u, v).map_err(|e| Error::Format(e.to_string()))
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flo(&bytes)
}

pub fn write_flo(flow: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_flo(flow)).map_err(|e| Error::io(path, e))
}
