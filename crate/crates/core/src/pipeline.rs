//! Glue between per-face predictions and the optimizer.

use nalgebra::Vector3;

use crate::geometry::{to_column_frame, FACE_COUNT};
use crate::graphopt::OptInputs;
use crate::grid::ErpGrid;
use crate::oracle::{corrupt, render_scene, Corruption, SceneSpec};
use crate::resample::{merge_depth_to_erp, merge_normals_to_erp, CubemapFaces, NormalFrame};

/// Intensity used when no guidance image is supplied: every patch distance
/// is zero, so edge weights reduce to the spatial kernel.
pub const FLAT_INTENSITY: f64 = 0.5;

/// Merges face depth and normals into ERP optimizer inputs.
///
/// A pixel is valid when both its merged depth and its merged normal are.
/// Normals are returned in column frames.
pub fn merge_inputs(
    depth: &CubemapFaces<f64>,
    normals: &CubemapFaces<Vector3<f64>>,
    frame: NormalFrame,
    flip: bool,
    intensity: Option<ErpGrid<f64>>,
    height: usize,
) -> OptInputs {
    let merged = merge_depth_to_erp(depth, height);
    let (n, n_valid) = merge_normals_to_erp(normals, &merged.face_id, frame, flip);
    let mut valid = merged.valid;
    for (v, nv) in valid.data_mut().iter_mut().zip(n_valid.data()) {
        *v &= *nv;
    }
    let intensity = intensity.unwrap_or_else(|| ErpGrid::filled(height, FLAT_INTENSITY));
    OptInputs {
        depth: merged.depth,
        normals: to_column_frame(&n),
        intensity,
        face_id: merged.face_id,
        valid,
    }
}

/// Synthetic scene rendered, corrupted per face, and merged.
#[derive(Debug, Clone)]
pub struct OracleCase {
    pub spec: SceneSpec,
    pub corruption: Corruption,
    pub gt_depth: ErpGrid<f64>,
    pub inputs: OptInputs,
}

impl OracleCase {
    pub fn new(spec: SceneSpec, corruption: Corruption, face_size: usize, seed: u64) -> Self {
        let rendered = render_scene(&spec);
        let cam = crate::geometry::CameraModel::new(face_size);
        let faces = corrupt(&spec, &cam, &corruption, seed);
        let inputs = merge_inputs(
            &faces.depth,
            &faces.normals,
            NormalFrame::FaceCamera,
            false,
            Some(rendered.intensity),
            spec.height,
        );
        Self {
            spec,
            corruption,
            gt_depth: rendered.depth,
            inputs,
        }
    }

    /// Default box room at `height` with the given per-face scales.
    pub fn box_room(height: usize, scales: [f64; FACE_COUNT]) -> Self {
        Self::new(SceneSpec::default_box(height), Corruption::scales(scales), height / 2, 0)
    }
}
