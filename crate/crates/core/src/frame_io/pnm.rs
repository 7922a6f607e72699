//! Binary PGM (P5) and PPM (P6).

use std::path::Path;

use super::Image;
use crate::error::{Error, Result};

pub fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos)?;
    let channels = match magic.as_slice() {
        b"P5" => 1,
        b"P6" => 3,
        other => return Err(Error::Format(format!("unsupported PNM magic {:?}", String::from_utf8_lossy(other)))),
    };
    let width = parse_int(&next_token(bytes, &mut pos)?)?;
    let height = parse_int(&next_token(bytes, &mut pos)?)?;
    let maxval = parse_int(&next_token(bytes, &mut pos)?)?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("PNM maxval {maxval} out of range")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let sample_bytes = if maxval < 256 { 1 } else { 2 };
    let needed = width * height * channels * sample_bytes;
    let raster = bytes
        .get(pos..pos + needed)
        .ok_or_else(|| Error::Format(format!("PNM raster truncated: need {needed} bytes")))?;
    let scale = 1.0 / maxval as f64;
    let data = if sample_bytes == 1 {
        raster.iter().map(|&b| (b as f64 * scale) as f32).collect()
    } else {
        raster
            .chunks(2)
            .map(|p| ((u16::from_be_bytes([p[0], p[1]]) as f64 * scale).min(1.0)) as f32)
            .collect()
    };
    let mut img = Image::new(height, width, channels, data)?;
    for v in img.data_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(img)
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Result<Vec<u8>> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while let Some(&c) = bytes.get(*pos) {
                    *pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            }
            Some(c) if c.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(Error::Format("PNM header truncated".into())),
        }
    }
    let start = *pos;
    while let Some(c) = bytes.get(*pos) {
        if c.is_ascii_whitespace() {
            break;
        }
        *pos += 1;
    }
    Ok(bytes[start..*pos].to_vec())
}

fn parse_int(tok: &[u8]) -> Result<usize> {
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format(format!("bad PNM header field {:?}", String::from_utf8_lossy(tok))))
}

/// 8-bit P5/P6 encoding; values are clamped to [0, 1] and rounded.
pub fn encode_pnm(img: &Image) -> Result<Vec<u8>> {
    let magic = match img.channels() {
        1 => "P5",
        3 => "P6",
        c => return Err(Error::Dimension(format!("PNM holds 1 or 3 channels, not {c}"))),
    };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

pub fn read_pnm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes).map_err(|e| Error::io(path, e))
}

pub fn write_pnm(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pnm(img)?).map_err(|e| Error::io(path, e))
}
