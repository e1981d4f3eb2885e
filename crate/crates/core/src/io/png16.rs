//! 16-bit grayscale PNG depth with a JSON sidecar holding the affine
//! dequantization `value = q * scale + offset`.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::IoError;
use crate::grid::Grid;

use super::meta;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantization {
    pub scale: f64,
    pub offset: f64,
}

impl Quantization {
    /// Maps `[min, max]` of the finite samples onto the full 16-bit range.
    pub fn fit(values: &[f64]) -> Self {
        let (lo, hi) = values
            .iter()
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        if !lo.is_finite() {
            return Self { scale: 1.0, offset: 0.0 };
        }
        let range = hi - lo;
        Self {
            scale: if range > 0.0 { range / 65535.0 } else { 1.0 },
            offset: lo,
        }
    }

    pub fn quantize(&self, v: f64) -> u16 {
        if !v.is_finite() {
            return 0;
        }
        ((v - self.offset) / self.scale).round().clamp(0.0, 65535.0) as u16
    }

    pub fn dequantize(&self, q: u16) -> f64 {
        q as f64 * self.scale + self.offset
    }
}

/// Decoded PNG samples normalized per channel, top-to-bottom.
pub(crate) struct RawPng {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub bit_depth: u8,
    pub samples: Vec<u16>,
}

pub(crate) fn decode_raw(path: &Path) -> Result<RawPng, IoError> {
    let file = File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut decoder = png::Decoder::new(std::io::BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| IoError::Png(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| IoError::Png("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| IoError::Png(e.to_string()))?;
    let channels = info.color_type.samples();
    let bit_depth = match info.bit_depth {
        png::BitDepth::Eight => 8,
        png::BitDepth::Sixteen => 16,
        other => return Err(IoError::UnsupportedFormat(format!("PNG bit depth {other:?}"))),
    };
    let bytes = &buf[..info.buffer_size()];
    let samples = if bit_depth == 16 {
        bytes.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    } else {
        bytes.iter().map(|b| *b as u16).collect()
    };
    Ok(RawPng {
        width: info.width as usize,
        height: info.height as usize,
        channels,
        bit_depth,
        samples,
    })
}

/// Reads a single-channel 16-bit PNG. Without a sidecar the samples are
/// normalized to `[0, 1]`.
pub fn read(path: &Path) -> Result<Grid<f64>, IoError> {
    let raw = decode_raw(path)?;
    if raw.channels != 1 || raw.bit_depth != 16 {
        return Err(IoError::UnsupportedFormat(format!(
            "{}: depth PNG must be 16-bit grayscale",
            path.display()
        )));
    }
    let quant = match meta::read_sidecar(path)? {
        Some(value) => serde_json::from_value::<Quantization>(value).map_err(|e| {
            IoError::validation(meta::sidecar_path(path).display().to_string(), e.to_string())
        })?,
        None => Quantization { scale: 1.0 / 65535.0, offset: 0.0 },
    };
    let data = raw.samples.iter().map(|q| quant.dequantize(*q)).collect();
    Grid::from_vec(raw.width, raw.height, data)
        .map_err(|e| IoError::DimensionMismatch(e.to_string()))
}

/// Writes `grid` quantized with `quant` and records it in the sidecar.
pub fn write_with(path: &Path, grid: &Grid<f64>, quant: Quantization) -> Result<(), IoError> {
    let file = File::create(path).map_err(|e| IoError::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), grid.width() as u32, grid.height() as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Sixteen);
    let mut writer = encoder.write_header().map_err(|e| IoError::Png(e.to_string()))?;
    let bytes: Vec<u8> = grid
        .data()
        .iter()
        .flat_map(|v| quant.quantize(*v).to_be_bytes())
        .collect();
    writer.write_image_data(&bytes).map_err(|e| IoError::Png(e.to_string()))?;
    writer.finish().map_err(|e| IoError::Png(e.to_string()))?;
    meta::merge_sidecar(path, &serde_json::to_value(quant).expect("plain struct"))
}

pub fn write(path: &Path, grid: &Grid<f64>) -> Result<Quantization, IoError> {
    let quant = Quantization::fit(grid.data());
    write_with(path, grid, quant)?;
    Ok(quant)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization_bound() {
        let q = Quantization::fit(&[0.0, 10.0]);
        assert!((q.scale - 10.0 / 65535.0).abs() < 1e-18);
        for i in 0..1000 {
            let v = i as f64 * 0.01;
            assert!((q.dequantize(q.quantize(v)) - v).abs() <= 0.5 * q.scale + 1e-12);
        }
        let flat = Quantization::fit(&[3.0, 3.0]);
        assert_eq!(flat.dequantize(flat.quantize(3.0)), 3.0);
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.png");
        let grid = Grid::from_fn(8, 4, |x, y| 0.5 + (x * 4 + y) as f64 * 0.3);
        let q = write(&path, &grid).unwrap();
        let back = read(&path).unwrap();
        assert_eq!(back.dims(), grid.dims());
        for (a, b) in back.data().iter().zip(grid.data()) {
            assert!((a - b).abs() <= q.scale);
        }
    }
}
