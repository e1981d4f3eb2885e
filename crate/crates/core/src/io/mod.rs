//! File interchange: depth and normal rasters (PFM, 16-bit PNG), point
//! clouds (PLY), configuration and manifest documents, and JSON sidecars.
//!
//! Depth formats are chosen by extension: `.pfm` stores float32 samples
//! losslessly, `.png` stores 16-bit samples dequantized through
//! `<file>.meta.json`. Normal maps are three-channel PFM with channels
//! ordered `(x, y, z)` in the frame declared by the manifest.

pub mod config;
pub mod manifest;
pub mod meta;
pub mod pfm;
pub mod ply;
pub mod png16;

use std::path::Path;

use nalgebra::Vector3;

use crate::error::IoError;
use crate::geometry::PointCloud;
use crate::grid::Grid;

pub use config::{load_config, parse_config, suggest_key, Strictness};
pub use manifest::{
    load_manifest, save_manifest, DepthEncoding, DepthUnit, FaceEntry, LoadedManifest, Manifest,
    NormalFrameSpec, NormalSign, MANIFEST_VERSION,
};
pub use meta::{sidecar_path, write_json, Provenance};
pub use pfm::PfmImage;
pub use png16::Quantization;

/// Normals deviating from unit length by more than this trigger a warning.
pub const NORMAL_TOLERANCE: f64 = 1e-3;

const UNIT_SLACK: f64 = 4.0 * f32::EPSILON as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Pfm,
    Png,
}

fn format_of(path: &Path) -> Result<Format, IoError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("pfm") => Ok(Format::Pfm),
        Some("png") => Ok(Format::Png),
        _ => Err(IoError::UnsupportedFormat(path.display().to_string())),
    }
}

fn to_f32(v: f64) -> f32 {
    v as f32
}

pub fn read_depth(path: &Path) -> Result<Grid<f64>, IoError> {
    match format_of(path)? {
        Format::Pfm => {
            let img = pfm::read(path)?;
            if img.channels != 1 {
                return Err(IoError::DimensionMismatch(format!(
                    "{}: depth PFM must have one channel",
                    path.display()
                )));
            }
            let data = img.data.iter().map(|v| *v as f64).collect();
            Ok(Grid::from_vec(img.width, img.height, data).expect("sizes checked by decoder"))
        }
        Format::Png => png16::read(path),
    }
}

/// Writes depth as float32 PFM or quantized PNG16 (range fit to the data).
pub fn write_depth(path: &Path, grid: &Grid<f64>) -> Result<(), IoError> {
    match format_of(path)? {
        Format::Pfm => {
            let data = grid.data().iter().map(|v| to_f32(*v)).collect();
            pfm::write(path, &PfmImage::new(grid.width(), grid.height(), 1, data)?)
        }
        Format::Png => png16::write(path, grid).map(|_| ()),
    }
}

/// A normal map as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    /// Unit normals; invalid pixels hold zero.
    pub normals: Grid<Vector3<f64>>,
    /// False where the stored vector was zero or non-finite.
    pub valid: Grid<bool>,
    /// Largest `| |n| - 1 |` over valid stored vectors.
    pub max_deviation: f64,
}

/// Reads a three-channel PFM, renormalizing each vector.
pub fn read_normals(path: &Path) -> Result<NormalMap, IoError> {
    if format_of(path)? != Format::Pfm {
        return Err(IoError::UnsupportedFormat(format!(
            "{}: normals must be PFM",
            path.display()
        )));
    }
    let img = pfm::read(path)?;
    if img.channels != 3 {
        return Err(IoError::DimensionMismatch(format!(
            "{}: normal PFM must have three channels",
            path.display()
        )));
    }
    let mut normals = Vec::with_capacity(img.width * img.height);
    let mut valid = Vec::with_capacity(img.width * img.height);
    let mut max_deviation: f64 = 0.0;
    for c in img.data.chunks_exact(3) {
        let n = Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64);
        let len = n.norm();
        if len > 0.0 && len.is_finite() {
            max_deviation = max_deviation.max((len - 1.0).abs());
            // Vectors already unit to float32 precision are kept bit-exact.
            normals.push(if (len - 1.0).abs() <= UNIT_SLACK { n } else { n / len });
            valid.push(true);
        } else {
            normals.push(Vector3::zeros());
            valid.push(false);
        }
    }
    if max_deviation > NORMAL_TOLERANCE {
        log::warn!(
            "{}: non-unit normals (max deviation {max_deviation:.3e}) renormalized",
            path.display()
        );
    }
    Ok(NormalMap {
        normals: Grid::from_vec(img.width, img.height, normals).expect("sizes checked"),
        valid: Grid::from_vec(img.width, img.height, valid).expect("sizes checked"),
        max_deviation,
    })
}

pub fn write_normals(path: &Path, grid: &Grid<Vector3<f64>>) -> Result<(), IoError> {
    if format_of(path)? != Format::Pfm {
        return Err(IoError::UnsupportedFormat(format!(
            "{}: normals must be PFM",
            path.display()
        )));
    }
    let data = grid
        .data()
        .iter()
        .flat_map(|n| [to_f32(n.x), to_f32(n.y), to_f32(n.z)])
        .collect();
    pfm::write(path, &PfmImage::new(grid.width(), grid.height(), 3, data)?)
}

/// Reads a grayscale intensity image in `[0, 1]`: one-channel PFM as is,
/// or an 8/16-bit PNG (color converted with Rec. 601 luma weights).
pub fn read_intensity(path: &Path) -> Result<Grid<f64>, IoError> {
    match format_of(path)? {
        Format::Pfm => read_depth(path),
        Format::Png => {
            let raw = png16::decode_raw(path)?;
            let max = if raw.bit_depth == 16 { 65535.0 } else { 255.0 };
            let norm = |v: u16| v as f64 / max;
            let data = raw
                .samples
                .chunks_exact(raw.channels)
                .map(|c| match raw.channels {
                    1 | 2 => norm(c[0]),
                    _ => 0.299 * norm(c[0]) + 0.587 * norm(c[1]) + 0.114 * norm(c[2]),
                })
                .collect();
            Grid::from_vec(raw.width, raw.height, data)
                .map_err(|e| IoError::DimensionMismatch(e.to_string()))
        }
    }
}

pub fn write_pointcloud(path: &Path, cloud: &PointCloud) -> Result<(), IoError> {
    ply::write(path, cloud)
}

pub fn read_pointcloud(path: &Path) -> Result<PointCloud, IoError> {
    ply::read(path)
}
