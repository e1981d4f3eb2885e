//! Portable Float Map codec.
//!
//! `Pf` holds one channel, `PF` three. Rows are stored bottom to top and a
//! negative scale marks little-endian samples.

use std::path::Path;

use crate::error::IoError;

/// Decoded PFM raster with rows in top-to-bottom order.
#[derive(Debug, Clone, PartialEq)]
pub struct PfmImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl PfmImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self, IoError> {
        if channels != 1 && channels != 3 {
            return Err(IoError::UnsupportedFormat(format!("PFM with {channels} channels")));
        }
        if data.len() != width * height * channels {
            return Err(IoError::DimensionMismatch(format!(
                "{width}x{height}x{channels} PFM needs {} samples, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self { width, height, channels, data })
    }
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str, IoError> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos || *pos >= bytes.len() {
        return Err(IoError::CorruptHeader("truncated PFM header".into()));
    }
    let token = std::str::from_utf8(&bytes[start..*pos])
        .map_err(|_| IoError::CorruptHeader("non-ASCII PFM header".into()))?;
    // Consume the single delimiter that follows.
    *pos += 1;
    Ok(token)
}

pub fn decode(bytes: &[u8]) -> Result<PfmImage, IoError> {
    let mut pos = 0;
    let channels = match next_token(bytes, &mut pos)? {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(IoError::CorruptHeader(format!("bad PFM magic {other:?}"))),
    };
    let parse_dim = |s: &str| {
        s.parse::<usize>()
            .ok()
            .filter(|v| *v > 0)
            .ok_or_else(|| IoError::CorruptHeader(format!("bad PFM dimension {s:?}")))
    };
    let width = parse_dim(next_token(bytes, &mut pos)?)?;
    let height = parse_dim(next_token(bytes, &mut pos)?)?;
    let scale_token = next_token(bytes, &mut pos)?;
    let scale: f32 = scale_token
        .parse()
        .ok()
        .filter(|s: &f32| s.is_finite() && *s != 0.0)
        .ok_or_else(|| IoError::CorruptHeader(format!("bad PFM scale {scale_token:?}")))?;
    let little = scale < 0.0;
    let row_len = width * channels;
    let expected = row_len * height * 4;
    let body = &bytes[pos.min(bytes.len())..];
    if body.len() != expected {
        return Err(IoError::DimensionMismatch(format!(
            "PFM body has {} bytes, header implies {expected}",
            body.len()
        )));
    }
    let mut data = vec![0f32; row_len * height];
    for (i, chunk) in body.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let value = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (file_row, col) = (i / row_len, i % row_len);
        data[(height - 1 - file_row) * row_len + col] = value;
    }
    PfmImage::new(width, height, channels, data)
}

/// Encodes little-endian (scale `-1.0`).
pub fn encode(img: &PfmImage) -> Vec<u8> {
    let magic = if img.channels == 3 { "PF" } else { "Pf" };
    let mut out = format!("{magic}\n{} {}\n-1.0\n", img.width, img.height).into_bytes();
    let row_len = img.width * img.channels;
    out.reserve(img.data.len() * 4);
    for row in (0..img.height).rev() {
        for v in &img.data[row * row_len..(row + 1) * row_len] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read(path: &Path) -> Result<PfmImage, IoError> {
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    decode(&bytes)
}

pub fn write(path: &Path, img: &PfmImage) -> Result<(), IoError> {
    std::fs::write(path, encode(img)).map_err(|e| IoError::io(path, e))
}
