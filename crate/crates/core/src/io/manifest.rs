//! Manifests binding six per-face prediction files to the cubemap model.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::IoError;
use crate::geometry::{CameraModel, FACE_COUNT, FACE_NAMES};
use crate::grid::{ErpGrid, Grid};
use crate::resample::{CubemapFaces, NormalFrame};

use super::{meta, read_depth, read_normals};

pub const MANIFEST_VERSION: &str = "panoalign-manifest/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaceEntry {
    pub name: String,
    pub depth: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normals: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DepthUnit {
    #[default]
    Meters,
    /// Up to an unknown scale, as monocular predictors emit.
    Relative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DepthEncoding {
    /// Distance along each face's optical axis.
    #[default]
    ZDepth,
    /// Euclidean distance from the camera center.
    Radial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormalFrameSpec {
    #[default]
    FaceCamera,
    World,
}

impl From<NormalFrameSpec> for NormalFrame {
    fn from(f: NormalFrameSpec) -> Self {
        match f {
            NormalFrameSpec::FaceCamera => NormalFrame::FaceCamera,
            NormalFrameSpec::World => NormalFrame::World,
        }
    }
}

/// Orientation of stored normals relative to the viewing ray.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormalSign {
    #[default]
    TowardCamera,
    AwayFromCamera,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: String,
    pub erp_width: usize,
    pub erp_height: usize,
    pub face_size: usize,
    pub face_order: Vec<String>,
    pub faces: Vec<FaceEntry>,
    #[serde(default)]
    pub depth_unit: DepthUnit,
    #[serde(default)]
    pub depth_encoding: DepthEncoding,
    #[serde(default)]
    pub normal_frame: NormalFrameSpec,
    #[serde(default)]
    pub normal_sign: NormalSign,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_depth: Option<PathBuf>,
}

impl Manifest {
    /// Manifest with files named `<prefix><face>_depth.pfm` and
    /// `<prefix><face>_normals.pfm`.
    pub fn with_default_names(erp_height: usize, face_size: usize, with_normals: bool) -> Self {
        Self {
            version: MANIFEST_VERSION.into(),
            erp_width: 2 * erp_height,
            erp_height,
            face_size,
            face_order: FACE_NAMES.iter().map(|s| s.to_string()).collect(),
            faces: FACE_NAMES
                .iter()
                .map(|n| FaceEntry {
                    name: n.to_string(),
                    depth: format!("{n}_depth.pfm").into(),
                    normals: with_normals.then(|| format!("{n}_normals.pfm").into()),
                })
                .collect(),
            depth_unit: DepthUnit::Relative,
            depth_encoding: DepthEncoding::ZDepth,
            normal_frame: NormalFrameSpec::FaceCamera,
            normal_sign: NormalSign::TowardCamera,
            intensity: None,
            gt_depth: None,
        }
    }

    /// Structural checks that do not touch the filesystem.
    pub fn validate(&self) -> Result<(), IoError> {
        if self.version != MANIFEST_VERSION {
            return Err(IoError::validation(
                "version",
                format!("unrecognized version {:?}, expected {MANIFEST_VERSION:?}", self.version),
            ));
        }
        if self.erp_height == 0 || self.erp_width != 2 * self.erp_height {
            return Err(IoError::validation(
                "erp_width",
                format!("ERP size {}x{} is not 2:1", self.erp_width, self.erp_height),
            ));
        }
        if self.face_size == 0 {
            return Err(IoError::validation("face_size", "must be positive"));
        }
        if self.face_order != FACE_NAMES {
            return Err(IoError::validation(
                "face_order",
                format!("must be {FACE_NAMES:?}"),
            ));
        }
        if self.faces.len() != FACE_COUNT {
            return Err(IoError::validation(
                "faces",
                format!("exactly six faces required, found {}", self.faces.len()),
            ));
        }
        let mut seen = HashSet::new();
        for f in &self.faces {
            if !FACE_NAMES.contains(&f.name.as_str()) {
                return Err(IoError::validation("faces", format!("unknown face name {:?}", f.name)));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(IoError::validation("faces", format!("duplicate face name {:?}", f.name)));
            }
        }
        let with_normals = self.faces.iter().filter(|f| f.normals.is_some()).count();
        if with_normals != 0 && with_normals != FACE_COUNT {
            return Err(IoError::validation("faces", "normals must be given for all faces or none"));
        }
        Ok(())
    }

    /// Face entries in the fixed cubemap order.
    pub fn ordered_faces(&self) -> Vec<&FaceEntry> {
        FACE_NAMES
            .iter()
            .map(|n| self.faces.iter().find(|f| f.name == *n).expect("validated"))
            .collect()
    }

    pub fn has_normals(&self) -> bool {
        self.faces.iter().all(|f| f.normals.is_some())
    }
}

/// A validated manifest together with its location and content digest.
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub manifest: Manifest,
    pub base_dir: PathBuf,
    /// SHA-256 of the manifest bytes, hex encoded.
    pub digest: String,
}

pub fn load_manifest(path: &Path) -> Result<LoadedManifest, IoError> {
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    let manifest: Manifest = serde_json::from_slice(&bytes).map_err(|e| IoError::Parse {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    manifest.validate()?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let loaded = LoadedManifest {
        manifest,
        base_dir,
        digest: meta::sha256_hex(&bytes),
    };
    loaded.check_files()?;
    Ok(loaded)
}

pub fn save_manifest(path: &Path, manifest: &Manifest) -> Result<String, IoError> {
    manifest.validate()?;
    meta::write_json(path, manifest)?;
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    Ok(meta::sha256_hex(&bytes))
}

impl LoadedManifest {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn check_files(&self) -> Result<(), IoError> {
        let m = &self.manifest;
        let mut paths: Vec<(&str, &Path)> = Vec::new();
        for f in &m.faces {
            paths.push(("faces.depth", &f.depth));
            if let Some(n) = &f.normals {
                paths.push(("faces.normals", n));
            }
        }
        if let Some(p) = &m.intensity {
            paths.push(("intensity", p));
        }
        if let Some(p) = &m.gt_depth {
            paths.push(("gt_depth", p));
        }
        for (field, p) in paths {
            let full = self.resolve(p);
            if !full.is_file() {
                return Err(IoError::validation(field, format!("missing file {}", full.display())));
            }
        }
        Ok(())
    }

    pub fn camera(&self) -> CameraModel {
        CameraModel::new(self.manifest.face_size)
    }

    fn check_face<T>(&self, name: &str, g: &Grid<T>) -> Result<(), IoError> {
        let n = self.manifest.face_size;
        if g.dims() != (n, n) {
            return Err(IoError::DimensionMismatch(format!(
                "face {name} is {}x{}, manifest says {n}x{n}",
                g.width(),
                g.height()
            )));
        }
        Ok(())
    }

    /// Per-face z-depth maps (radial inputs are converted).
    pub fn load_depth_faces(&self) -> Result<CubemapFaces<f64>, IoError> {
        let cam = self.camera();
        let mut faces = Vec::with_capacity(FACE_COUNT);
        for entry in self.manifest.ordered_faces() {
            let mut g = read_depth(&self.resolve(&entry.depth))?;
            self.check_face(&entry.name, &g)?;
            if self.manifest.depth_encoding == DepthEncoding::Radial {
                let n = cam.face_size();
                for row in 0..n {
                    for col in 0..n {
                        let (u, v) = cam.pixel_center(col, row);
                        *g.get_mut(col, row) /= cam.rho_factor(u, v);
                    }
                }
            }
            faces.push(g);
        }
        CubemapFaces::new(faces, cam).map_err(|e| IoError::DimensionMismatch(e.to_string()))
    }

    /// Per-face normal maps, or `None` when the manifest lists none.
    pub fn load_normal_faces(&self) -> Result<Option<CubemapFaces<Vector3<f64>>>, IoError> {
        if !self.manifest.has_normals() {
            return Ok(None);
        }
        let mut faces = Vec::with_capacity(FACE_COUNT);
        for entry in self.manifest.ordered_faces() {
            let path = self.resolve(entry.normals.as_ref().expect("checked"));
            let map = read_normals(&path)?;
            self.check_face(&entry.name, &map.normals)?;
            faces.push(map.normals);
        }
        CubemapFaces::new(faces, self.camera())
            .map(Some)
            .map_err(|e| IoError::DimensionMismatch(e.to_string()))
    }

    fn load_erp(&self, p: &Path, what: &str, intensity: bool) -> Result<ErpGrid<f64>, IoError> {
        let path = self.resolve(p);
        let g = if intensity {
            super::read_intensity(&path)?
        } else {
            read_depth(&path)?
        };
        let (w, h) = (self.manifest.erp_width, self.manifest.erp_height);
        if g.dims() != (w, h) {
            return Err(IoError::DimensionMismatch(format!(
                "{what} is {}x{}, manifest says {w}x{h}",
                g.width(),
                g.height()
            )));
        }
        ErpGrid::new(g).map_err(|e| IoError::DimensionMismatch(e.to_string()))
    }

    pub fn load_intensity(&self) -> Result<Option<ErpGrid<f64>>, IoError> {
        self.manifest
            .intensity
            .as_ref()
            .map(|p| self.load_erp(p, "intensity", true))
            .transpose()
    }

    pub fn load_gt(&self) -> Result<Option<ErpGrid<f64>>, IoError> {
        self.manifest
            .gt_depth
            .as_ref()
            .map(|p| self.load_erp(p, "gt_depth", false))
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_faces_rejected() {
        let mut m = Manifest::with_default_names(8, 4, true);
        m.faces.pop();
        let err = m.validate().unwrap_err();
        assert!(err.to_string().contains("exactly six faces"), "{err}");
    }

    #[test]
    fn structural_checks() {
        let good = Manifest::with_default_names(8, 4, false);
        good.validate().unwrap();
        let mut m = good.clone();
        m.version = "2".into();
        assert!(m.validate().is_err());
        let mut m = good.clone();
        m.faces[1].name = "front".into();
        assert!(m.validate().unwrap_err().to_string().contains("duplicate"));
        let mut m = good.clone();
        m.face_order.swap(0, 1);
        assert!(m.validate().is_err());
        let mut m = good;
        m.erp_width = 10;
        assert!(m.validate().is_err());
    }

    #[test]
    fn missing_files_fail_at_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_manifest(&path, &Manifest::with_default_names(8, 4, false)).unwrap();
        let err = load_manifest(&path).unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("missing file"));
    }
}
