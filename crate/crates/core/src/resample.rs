//! Warping between the equirectangular and cubemap domains, plus the image
//! pyramid used by the coarse-to-fine optimizer.
//!
//! Sampling always wraps horizontally (azimuth is periodic) and clamps
//! vertically (poles).

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::GeometryError;
use crate::geometry::{
    column_offset, erp_pixel_ray, ray_to_spherical, rotate_yaw, spherical_to_erp_pixel,
    CameraModel, UnitRay, FACE_COUNT,
};
use crate::grid::{ErpGrid, Grid};

/// Per-ERP-pixel owning face index in `0..6`.
pub type FaceIdMap = ErpGrid<u8>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interp {
    Nearest,
    Bilinear,
}

/// Pixel types that can be averaged and interpolated.
pub trait Sample: Copy + Send + Sync {
    /// Combines samples with non-negative weights summing to one.
    fn blend(samples: &[(Self, f64)]) -> Self;
}

impl Sample for f64 {
    fn blend(samples: &[(Self, f64)]) -> Self {
        samples.iter().map(|(v, w)| v * w).sum()
    }
}

impl Sample for f32 {
    fn blend(samples: &[(Self, f64)]) -> Self {
        samples.iter().map(|(v, w)| *v as f64 * w).sum::<f64>() as f32
    }
}

/// Vectors are treated as unit normals: blended then renormalized.
impl Sample for Vector3<f64> {
    fn blend(samples: &[(Self, f64)]) -> Self {
        let v: Vector3<f64> = samples.iter().map(|(v, w)| v * *w).sum();
        let n = v.norm();
        if n > 0.0 {
            v / n
        } else {
            v
        }
    }
}

/// Validity flags: true only if every contributing sample is true.
impl Sample for bool {
    fn blend(samples: &[(Self, f64)]) -> Self {
        samples.iter().filter(|(_, w)| *w > 0.0).all(|(v, _)| *v)
    }
}

/// Labels: the value with the largest total weight, ties to the smallest label.
impl Sample for u8 {
    fn blend(samples: &[(Self, f64)]) -> Self {
        let mut best: Option<(u8, f64)> = None;
        for (label, _) in samples {
            let total: f64 = samples
                .iter()
                .filter(|(l, _)| l == label)
                .map(|(_, w)| w)
                .sum();
            best = match best {
                Some((bl, bw)) if bw > total || (bw == total && bl <= *label) => Some((bl, bw)),
                _ => Some((*label, total)),
            };
        }
        best.map(|(l, _)| l).unwrap_or(0)
    }
}

/// Six square face images sharing one camera model.
#[derive(Debug, Clone, PartialEq)]
pub struct CubemapFaces<T> {
    pub faces: Vec<Grid<T>>,
    pub cam: CameraModel,
}

impl<T> CubemapFaces<T> {
    pub fn new(faces: Vec<Grid<T>>, cam: CameraModel) -> Result<Self, GeometryError> {
        let n = cam.face_size();
        if faces.len() != FACE_COUNT {
            return Err(GeometryError::DimensionMismatch {
                expected: (FACE_COUNT, 1),
                actual: (faces.len(), 1),
            });
        }
        for f in &faces {
            if f.dims() != (n, n) {
                return Err(GeometryError::DimensionMismatch {
                    expected: (n, n),
                    actual: f.dims(),
                });
            }
        }
        Ok(Self { faces, cam })
    }

    pub fn face_size(&self) -> usize {
        self.cam.face_size()
    }
}

/// Samples an ERP grid at a continuous pixel position (pixel centers at integers).
pub fn sample_erp<T: Sample>(erp: &Grid<T>, u: f64, v: f64, interp: Interp) -> T {
    let (w, h) = erp.dims();
    let wrap = |x: isize| x.rem_euclid(w as isize) as usize;
    let clamp = |y: isize| y.clamp(0, h as isize - 1) as usize;
    match interp {
        Interp::Nearest => {
            let x = wrap((u + 0.5).floor() as isize);
            let y = clamp((v + 0.5).floor() as isize);
            *erp.get(x, y)
        }
        Interp::Bilinear => {
            let x0 = u.floor();
            let y0 = v.floor();
            let fx = u - x0;
            let fy = v - y0;
            let (x0, y0) = (x0 as isize, y0 as isize);
            let (xa, xb) = (wrap(x0), wrap(x0 + 1));
            let (ya, yb) = (clamp(y0), clamp(y0 + 1));
            T::blend(&[
                (*erp.get(xa, ya), (1.0 - fx) * (1.0 - fy)),
                (*erp.get(xb, ya), fx * (1.0 - fy)),
                (*erp.get(xa, yb), (1.0 - fx) * fy),
                (*erp.get(xb, yb), fx * fy),
            ])
        }
    }
}

/// Renders the six cube faces from an ERP grid.
pub fn erp_to_faces<T: Sample>(
    erp: &ErpGrid<T>,
    cam: &CameraModel,
    interp: Interp,
) -> CubemapFaces<T> {
    let n = cam.face_size();
    let (w, h) = erp.dims();
    let faces = (0..FACE_COUNT)
        .map(|face| {
            let data: Vec<T> = (0..n * n)
                .into_par_iter()
                .map(|idx| {
                    let (col, row) = (idx % n, idx / n);
                    let (u, v) = cam.pixel_center(col, row);
                    let ray = cam.face_ray(face, u, v);
                    let (eu, ev) = spherical_to_erp_pixel(ray_to_spherical(&ray), w, h);
                    sample_erp(erp, eu, ev, interp)
                })
                .collect();
            Grid::from_vec(n, n, data).expect("face dimensions")
        })
        .collect();
    CubemapFaces {
        faces,
        cam: cam.clone(),
    }
}

/// Face index owning each ERP pixel center (largest optical-axis alignment).
pub fn face_id_map(cam: &CameraModel, height: usize) -> FaceIdMap {
    ErpGrid::from_fn(height, |x, y| {
        cam.select_face(&erp_pixel_ray(x, y, 2 * height, height)) as u8
    })
}

/// Nearest stored face pixel for the center of ERP pixel `(x, y)`.
#[inline]
fn erp_lookup(cam: &CameraModel, x: usize, y: usize, w: usize, h: usize) -> (usize, usize, usize) {
    let ray = UnitRay::new_unchecked(erp_pixel_ray(x, y, w, h));
    let p = cam
        .ray_to_face_pixel(&ray)
        .expect("cube faces partition the sphere");
    let (col, row) = p.storage_index(cam.face_size());
    (p.face, col, row)
}

/// Nearest-neighbor assembly of an ERP grid from face images, no depth correction.
pub fn faces_to_erp<T: Sample>(faces: &CubemapFaces<T>, height: usize) -> ErpGrid<T> {
    let w = 2 * height;
    let data: Vec<T> = (0..w * height)
        .into_par_iter()
        .map(|idx| {
            let (face, col, row) = erp_lookup(&faces.cam, idx % w, idx / w, w, height);
            *faces.faces[face].get(col, row)
        })
        .collect();
    ErpGrid::new(Grid::from_vec(w, height, data).expect("erp dims")).expect("2:1 layout")
}

/// Result of merging per-face z-depth into one radial ERP depth map.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedDepth {
    /// Radial depth; `0.0` where `valid` is false.
    pub depth: ErpGrid<f64>,
    pub face_id: FaceIdMap,
    pub valid: ErpGrid<bool>,
}

impl MergedDepth {
    pub fn invalid_count(&self) -> usize {
        self.valid.data().iter().filter(|v| !**v).count()
    }
}

/// Converts per-face perspective z-depth into radial ERP depth:
/// nearest face pixel times the `rho` factor of that pixel's center.
///
/// Non-finite or non-positive samples are flagged in `valid` and stored as 0.
pub fn merge_depth_to_erp(faces: &CubemapFaces<f64>, height: usize) -> MergedDepth {
    let w = 2 * height;
    let cam = &faces.cam;
    let samples: Vec<(f64, u8, bool)> = (0..w * height)
        .into_par_iter()
        .map(|idx| {
            let (face, col, row) = erp_lookup(cam, idx % w, idx / w, w, height);
            let z = *faces.faces[face].get(col, row);
            let (u, v) = cam.pixel_center(col, row);
            let d = cam.rho_factor(u, v) * z;
            if z.is_finite() && z > 0.0 && d.is_finite() {
                (d, face as u8, true)
            } else {
                (0.0, face as u8, false)
            }
        })
        .collect();
    fn erp<T>(w: usize, h: usize, data: Vec<T>) -> ErpGrid<T> {
        ErpGrid::new(Grid::from_vec(w, h, data).unwrap()).unwrap()
    }
    MergedDepth {
        depth: erp(w, height, samples.iter().map(|s| s.0).collect()),
        face_id: erp(w, height, samples.iter().map(|s| s.1).collect()),
        valid: erp(w, height, samples.iter().map(|s| s.2).collect()),
    }
}

/// Frame in which face normal maps are expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalFrame {
    /// Face-camera coordinates; rotated into the world with `R_c`.
    FaceCamera,
    World,
}

/// Merges per-face normals into one world-frame ERP normal map.
///
/// Zero or non-finite samples are flagged invalid and replaced by `-S`.
pub fn merge_normals_to_erp(
    faces: &CubemapFaces<Vector3<f64>>,
    face_id: &FaceIdMap,
    frame: NormalFrame,
    flip: bool,
) -> (ErpGrid<Vector3<f64>>, ErpGrid<bool>) {
    let (w, h) = face_id.dims();
    let cam = &faces.cam;
    let samples: Vec<(Vector3<f64>, bool)> = (0..w * h)
        .into_par_iter()
        .map(|idx| {
            let (x, y) = (idx % w, idx / w);
            let face = *face_id.get(x, y) as usize;
            let ray = erp_pixel_ray(x, y, w, h);
            let p = cam
                .ray_to_face_pixel(&UnitRay::new_unchecked(ray))
                .expect("cube faces partition the sphere");
            // Honor the supplied ownership map even where it disagrees with geometry.
            let q = cam.rotation(face).transpose() * ray;
            let (col, row) = if p.face == face || q.z <= 0.0 {
                p.storage_index(cam.face_size())
            } else {
                let pk = cam.k() * (q / q.z);
                crate::geometry::FacePixel {
                    face,
                    u: pk.x,
                    v: pk.y,
                }
                .storage_index(cam.face_size())
            };
            let local = *faces.faces[face].get(col, row);
            let mut n = match frame {
                NormalFrame::FaceCamera => cam.rotation(face) * local,
                NormalFrame::World => local,
            };
            if flip {
                n = -n;
            }
            let len = n.norm();
            if len > 0.0 && len.is_finite() {
                (n / len, true)
            } else {
                (-ray, false)
            }
        })
        .collect();
    let normals = samples.iter().map(|s| s.0).collect();
    let valid = samples.iter().map(|s| s.1).collect();
    (
        ErpGrid::new(Grid::from_vec(w, h, normals).unwrap()).unwrap(),
        ErpGrid::new(Grid::from_vec(w, h, valid).unwrap()).unwrap(),
    )
}

/// Per-pixel scale map `lambda[face_id(pixel)]`.
pub fn expand_scale_map(lambda: &[f64; FACE_COUNT], face_id: &FaceIdMap) -> ErpGrid<f64> {
    face_id.map(|&c| lambda[c as usize])
}

/// Output dimensions after downsampling an ERP grid by `factor`.
pub fn downsampled_height(height: usize, factor: usize) -> usize {
    height / factor
}

/// Box-filter downsampling by an integer `factor`.
///
/// The output is `floor(h / factor)` rows by twice as many columns; each
/// output pixel averages its `factor x factor` source block.
pub fn downsample<T: Sample>(erp: &ErpGrid<T>, factor: usize) -> ErpGrid<T> {
    assert!(factor >= 1);
    if factor == 1 {
        return erp.clone();
    }
    let oh = downsampled_height(erp.height(), factor);
    assert!(oh > 0, "downsampling by {factor} leaves no rows");
    let ow = 2 * oh;
    let weight = 1.0 / (factor * factor) as f64;
    let data: Vec<T> = (0..ow * oh)
        .into_par_iter()
        .map_init(Vec::new, |buf, idx| {
            let (ox, oy) = (idx % ow, idx / ow);
            buf.clear();
            for dy in 0..factor {
                for dx in 0..factor {
                    buf.push((*erp.get(ox * factor + dx, oy * factor + dy), weight));
                }
            }
            T::blend(buf)
        })
        .collect();
    ErpGrid::new(Grid::from_vec(ow, oh, data).unwrap()).unwrap()
}

/// Bilinear upsampling to `height` rows with horizontal wrap.
pub fn upsample<T: Sample>(erp: &ErpGrid<T>, height: usize) -> ErpGrid<T> {
    let (sw, sh) = erp.dims();
    assert!(height >= sh, "upsample target smaller than source");
    let ow = 2 * height;
    let (rx, ry) = (sw as f64 / ow as f64, sh as f64 / height as f64);
    let data: Vec<T> = (0..ow * height)
        .into_par_iter()
        .map(|idx| {
            let (x, y) = (idx % ow, idx / ow);
            let u = (x as f64 + 0.5) * rx - 0.5;
            let v = (y as f64 + 0.5) * ry - 0.5;
            sample_erp(erp, u, v, Interp::Bilinear)
        })
        .collect();
    ErpGrid::new(Grid::from_vec(ow, height, data).unwrap()).unwrap()
}

/// [`downsample`] for unit vectors held in column frames: each source
/// vector is turned into the frame of its output column before averaging.
pub fn downsample_column_normals(
    erp: &ErpGrid<Vector3<f64>>,
    factor: usize,
) -> ErpGrid<Vector3<f64>> {
    if factor == 1 {
        return erp.clone();
    }
    let sw = erp.width();
    let center = (factor as f64 - 1.0) / 2.0;
    let turns: Vec<_> = (0..factor)
        .map(|dx| column_offset(dx as f64 - center, sw))
        .collect();
    let turned = ErpGrid::from_fn(erp.height(), |x, y| rotate_yaw(*erp.get(x, y), turns[x % factor]));
    downsample(&turned, factor)
}

/// [`upsample`] for unit vectors held in column frames.
pub fn upsample_column_normals(erp: &ErpGrid<Vector3<f64>>, height: usize) -> ErpGrid<Vector3<f64>> {
    let (sw, sh) = erp.dims();
    assert!(height >= sh, "upsample target smaller than source");
    let ow = 2 * height;
    let (rx, ry) = (sw as f64 / ow as f64, sh as f64 / height as f64);
    let wrap = |x: isize| x.rem_euclid(sw as isize) as usize;
    let clamp = |y: isize| y.clamp(0, sh as isize - 1) as usize;
    let data: Vec<Vector3<f64>> = (0..ow * height)
        .into_par_iter()
        .map(|idx| {
            let (x, y) = (idx % ow, idx / ow);
            let u = (x as f64 + 0.5) * rx - 0.5;
            let v = (y as f64 + 0.5) * ry - 0.5;
            let (x0, y0) = (u.floor(), v.floor());
            let (fx, fy) = (u - x0, v - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            // Source columns sit -fx and 1-fx source columns away.
            let ta = column_offset(-fx, sw);
            let tb = column_offset(1.0 - fx, sw);
            let at = |cx: isize, cy: isize, t| rotate_yaw(*erp.get(wrap(cx), clamp(cy)), t);
            Vector3::blend(&[
                (at(x0, y0, ta), (1.0 - fx) * (1.0 - fy)),
                (at(x0 + 1, y0, tb), fx * (1.0 - fy)),
                (at(x0, y0 + 1, ta), (1.0 - fx) * fy),
                (at(x0 + 1, y0 + 1, tb), fx * fy),
            ])
        })
        .collect();
    ErpGrid::new(Grid::from_vec(ow, height, data).unwrap()).unwrap()
}
