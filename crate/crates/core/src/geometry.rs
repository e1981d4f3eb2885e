//! Spherical, equirectangular and cubemap coordinate math.
//!
//! World frame: `x` right, `y` up, `z` forward. A unit ray for azimuth `theta`
//! and elevation `phi` is `(sin theta cos phi, sin phi, cos theta cos phi)`.
//!
//! Cube faces are pinhole cameras with a 90 degree field of view sharing one
//! intrinsic matrix `K` (focal length and principal point both `face_size / 2`)
//! and differing only by their rotation `R_c`, which maps face-camera
//! coordinates to world coordinates. Face-camera axes follow the world
//! convention (`y` up), so a face pixel in `K` coordinates `(u, v)` has `v`
//! growing upwards; stored face images keep row 0 at the top, i.e.
//! `row = face_size - v`.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::GeometryError;
use crate::grid::{ErpGrid, Grid};

/// Canonical face order.
pub const FACE_NAMES: [&str; 6] = ["front", "right", "back", "left", "up", "down"];

pub const FACE_COUNT: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalCoord {
    /// Azimuth in `[-pi, pi]`.
    pub theta: f64,
    /// Elevation in `[-pi/2, pi/2]`.
    pub phi: f64,
}

impl SphericalCoord {
    /// Wraps `theta` into `[-pi, pi]` and clamps `phi` into `[-pi/2, pi/2]`.
    pub fn canonical(theta: f64, phi: f64) -> Self {
        let mut theta = (theta + PI).rem_euclid(2.0 * PI) - PI;
        if theta < -PI {
            theta = -PI;
        }
        Self {
            theta,
            phi: phi.clamp(-FRAC_PI_2, FRAC_PI_2),
        }
    }
}

/// A unit-length direction in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitRay(Vector3<f64>);

impl UnitRay {
    /// Normalizes `v`. Returns `None` for zero or non-finite input.
    pub fn new(v: Vector3<f64>) -> Option<Self> {
        let n = v.norm();
        if n > 0.0 && n.is_finite() {
            Some(Self(v / n))
        } else {
            None
        }
    }

    /// Wraps a vector that is already unit length.
    pub fn new_unchecked(v: Vector3<f64>) -> Self {
        debug_assert!((v.norm() - 1.0).abs() < 1e-9);
        Self(v)
    }

    #[inline]
    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }

    #[inline]
    pub fn into_vector(self) -> Vector3<f64> {
        self.0
    }
}

/// Maps a (fractional) ERP pixel position to spherical coordinates.
///
/// Pixel centers sit at integer `+ 0.5`; the accepted domain is the closed
/// pixel footprint `[-0.5, w - 0.5] x [-0.5, h - 0.5]`.
pub fn erp_pixel_to_spherical(
    u: f64,
    v: f64,
    width: usize,
    height: usize,
) -> Result<SphericalCoord, GeometryError> {
    let (w, h) = (width as f64, height as f64);
    let in_range = |x: f64, n: f64| x.is_finite() && (-0.5..=n - 0.5).contains(&x);
    if width == 0 || height == 0 || !in_range(u, w) || !in_range(v, h) {
        return Err(GeometryError::PixelOutOfRange {
            u,
            v,
            width,
            height,
        });
    }
    Ok(pixel_to_spherical_unchecked(u, v, w, h))
}

#[inline]
fn pixel_to_spherical_unchecked(u: f64, v: f64, w: f64, h: f64) -> SphericalCoord {
    SphericalCoord {
        theta: ((u + 0.5) / w - 0.5) * 2.0 * PI,
        phi: (0.5 - (v + 0.5) / h) * PI,
    }
}

/// Inverse of [`erp_pixel_to_spherical`].
pub fn spherical_to_erp_pixel(xi: SphericalCoord, width: usize, height: usize) -> (f64, f64) {
    let u = (xi.theta / (2.0 * PI) + 0.5) * width as f64 - 0.5;
    let v = (0.5 - xi.phi / PI) * height as f64 - 0.5;
    (u, v)
}

pub fn spherical_to_ray(xi: SphericalCoord) -> UnitRay {
    let (st, ct) = xi.theta.sin_cos();
    let (sp, cp) = xi.phi.sin_cos();
    UnitRay(Vector3::new(st * cp, sp, ct * cp))
}

pub fn ray_to_spherical(s: &UnitRay) -> SphericalCoord {
    let v = s.as_vector();
    SphericalCoord {
        theta: v.x.atan2(v.z),
        phi: v.y.clamp(-1.0, 1.0).asin(),
    }
}

/// Unit ray through the center of ERP pixel `(x, y)`.
#[inline]
pub fn erp_pixel_ray(x: usize, y: usize, width: usize, height: usize) -> Vector3<f64> {
    let xi = pixel_to_spherical_unchecked(x as f64, y as f64, width as f64, height as f64);
    spherical_to_ray(xi).into_vector()
}

/// Rays through every pixel center of a `width x height` ERP image.
pub fn erp_rays(width: usize, height: usize) -> Grid<Vector3<f64>> {
    Grid::from_fn(width, height, |x, y| erp_pixel_ray(x, y, width, height))
}

/// A face index together with a continuous position in `K` coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FacePixel {
    pub face: usize,
    pub u: f64,
    pub v: f64,
}

impl FacePixel {
    /// Column and row (row 0 at the top) of the stored face pixel that
    /// contains this position.
    pub fn storage_index(&self, face_size: usize) -> (usize, usize) {
        let n = face_size as f64;
        let col = self.u.floor().clamp(0.0, n - 1.0) as usize;
        let row = (n - self.v).floor().clamp(0.0, n - 1.0) as usize;
        (col, row)
    }
}

/// Shared cubemap camera: one intrinsic matrix, six face rotations.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    face_size: usize,
    k: Matrix3<f64>,
    k_inv: Matrix3<f64>,
    rotations: [Matrix3<f64>; FACE_COUNT],
}

impl CameraModel {
    pub fn new(face_size: usize) -> Self {
        assert!(face_size > 0, "face size must be positive");
        let half = face_size as f64 / 2.0;
        let k = Matrix3::new(half, 0.0, half, 0.0, half, half, 0.0, 0.0, 1.0);
        let k_inv = Matrix3::new(
            1.0 / half,
            0.0,
            -1.0,
            0.0,
            1.0 / half,
            -1.0,
            0.0,
            0.0,
            1.0,
        );
        Self {
            face_size,
            k,
            k_inv,
            rotations: face_rotations(),
        }
    }

    #[inline]
    pub fn face_size(&self) -> usize {
        self.face_size
    }

    pub fn k(&self) -> &Matrix3<f64> {
        &self.k
    }

    pub fn k_inv(&self) -> &Matrix3<f64> {
        &self.k_inv
    }

    pub fn rotation(&self, face: usize) -> &Matrix3<f64> {
        &self.rotations[face]
    }

    pub fn rotations(&self) -> &[Matrix3<f64>; FACE_COUNT] {
        &self.rotations
    }

    /// Face whose optical axis has the largest dot product with `s`.
    /// Ties go to the lowest face index.
    #[inline]
    pub fn select_face(&self, s: &Vector3<f64>) -> usize {
        let scores = [s.z, s.x, -s.z, -s.x, s.y, -s.y];
        let mut best = 0;
        for (c, &score) in scores.iter().enumerate().skip(1) {
            if score > scores[best] {
                best = c;
            }
        }
        best
    }

    pub fn ray_to_face_pixel(&self, s: &UnitRay) -> Result<FacePixel, GeometryError> {
        let face = self.select_face(s.as_vector());
        let q = self.rotations[face].transpose() * s.as_vector();
        if q.z <= 0.0 {
            return Err(GeometryError::DegenerateRay { face, z: q.z });
        }
        let p = self.k * (q / q.z);
        Ok(FacePixel { face, u: p.x, v: p.y })
    }

    /// World ray through `K`-coordinate position `(u, v)` of `face`.
    #[inline]
    pub fn face_ray(&self, face: usize, u: f64, v: f64) -> UnitRay {
        let local = self.k_inv * Vector3::new(u, v, 1.0);
        UnitRay((self.rotations[face] * local).normalize())
    }

    /// `K` coordinates of the center of stored pixel `(col, row)`.
    #[inline]
    pub fn pixel_center(&self, col: usize, row: usize) -> (f64, f64) {
        (col as f64 + 0.5, self.face_size as f64 - (row as f64 + 0.5))
    }

    /// Ratio between radial distance and z-depth at `K`-coordinate `(u, v)`.
    #[inline]
    pub fn rho_factor(&self, u: f64, v: f64) -> f64 {
        (self.k_inv * Vector3::new(u, v, 1.0)).norm()
    }
}

/// Rotations for front, right, back, left, up, down (columns are the face
/// camera axes expressed in world coordinates).
fn face_rotations() -> [Matrix3<f64>; FACE_COUNT] {
    let yaw = |t: f64| {
        let (s, c) = t.sin_cos();
        Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
    };
    let pitch = |a: f64| {
        let (s, c) = a.sin_cos();
        Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
    };
    let snap = |m: Matrix3<f64>| m.map(|x: f64| x.round());
    [
        Matrix3::identity(),
        snap(yaw(FRAC_PI_2)),
        snap(yaw(PI)),
        snap(yaw(-FRAC_PI_2)),
        snap(pitch(-FRAC_PI_2)),
        snap(pitch(FRAC_PI_2)),
    ]
}

/// Free function form of [`CameraModel::rho_factor`].
pub fn rho_factor(u: f64, v: f64, cam: &CameraModel) -> f64 {
    cam.rho_factor(u, v)
}

/// 3D points in meters with optional RGB colors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub colors: Option<Vec<[u8; 3]>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        Self {
            points,
            colors: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Lifts radial depth to 3D points `P = D * S`, one per unmasked pixel.
///
/// Pixels excluded by `mask` are skipped. Any included pixel whose depth is
/// non-finite or non-positive is an error.
pub fn lift_points(
    depth: &ErpGrid<f64>,
    mask: Option<&ErpGrid<bool>>,
) -> Result<PointCloud, GeometryError> {
    if let Some(m) = mask {
        depth.same_dims(m)?;
    }
    let (w, h) = depth.dims();
    let mut points = Vec::with_capacity(depth.len());
    for y in 0..h {
        for x in 0..w {
            if let Some(m) = mask {
                if !*m.get(x, y) {
                    continue;
                }
            }
            let d = *depth.get(x, y);
            if !(d.is_finite() && d > 0.0) {
                return Err(GeometryError::InvalidDepth { x, y, value: d });
            }
            points.push(erp_pixel_ray(x, y, w, h) * d);
        }
    }
    Ok(PointCloud::new(points))
}

/// Rotation by `angle` about the vertical axis, towards increasing azimuth.
pub fn yaw_rotation(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// `(cos, sin)` of the azimuth spanned by `dx` columns of a `width`-wide ERP image.
#[inline]
pub fn column_offset(dx: f64, width: usize) -> (f64, f64) {
    let (s, c) = (dx * 2.0 * PI / width as f64).sin_cos();
    (c, s)
}

/// Applies the yaw rotation with the given `(cos, sin)`.
#[inline]
pub fn rotate_yaw(v: Vector3<f64>, (c, s): (f64, f64)) -> Vector3<f64> {
    Vector3::new(c * v.x + s * v.z, v.y, c * v.z - s * v.x)
}

/// Inverse of [`rotate_yaw`].
#[inline]
pub fn unrotate_yaw(v: Vector3<f64>, (c, s): (f64, f64)) -> Vector3<f64> {
    Vector3::new(c * v.x - s * v.z, v.y, c * v.z + s * v.x)
}

/// Signed column offset from `from` to `to` on a ring of `width` columns,
/// in `[-width/2, width/2)`.
#[inline]
pub fn wrapped_offset(from: usize, to: usize, width: usize) -> isize {
    let w = width as isize;
    let d = (to as isize - from as isize).rem_euclid(w);
    if d >= w - w / 2 {
        d - w
    } else {
        d
    }
}

/// Ray through row `y`, expressed in the frame of its own column.
///
/// A column frame is the world frame turned about the vertical axis by the
/// column's azimuth, so that the column looks along `+z`. Quantities held in
/// column frames are unchanged by a horizontal roll of the image.
#[inline]
pub fn row_ray(y: usize, height: usize) -> Vector3<f64> {
    let phi = (0.5 - (y as f64 + 0.5) / height as f64) * PI;
    let (s, c) = phi.sin_cos();
    Vector3::new(0.0, s, c)
}

/// Ray of the pixel `dx` columns away on row `y`, in the reference column's frame.
#[inline]
pub fn column_ray(dx: isize, y: usize, width: usize, height: usize) -> Vector3<f64> {
    rotate_yaw(row_ray(y, height), column_offset(dx as f64, width))
}

fn column_azimuth(x: usize, width: usize) -> (f64, f64) {
    column_offset(x as f64 + 0.5 - width as f64 / 2.0, width)
}

/// Re-expresses world-frame vectors in the frame of each pixel's column.
pub fn to_column_frame(v: &ErpGrid<Vector3<f64>>) -> ErpGrid<Vector3<f64>> {
    let w = v.width();
    let turns: Vec<_> = (0..w).map(|x| column_azimuth(x, w)).collect();
    ErpGrid::from_fn(v.height(), |x, y| unrotate_yaw(*v.get(x, y), turns[x]))
}

/// Inverse of [`to_column_frame`].
pub fn to_world_frame(v: &ErpGrid<Vector3<f64>>) -> ErpGrid<Vector3<f64>> {
    let w = v.width();
    let turns: Vec<_> = (0..w).map(|x| column_azimuth(x, w)).collect();
    ErpGrid::from_fn(v.height(), |x, y| rotate_yaw(*v.get(x, y), turns[x]))
}

/// Normals of the surface described by a radial depth map, in world frame.
///
/// Each pixel's normal is the average of the unit normals of the eight
/// triangles formed with its ring of neighbors, oriented towards the camera.
/// Collapsed triangles are skipped. Columns wrap; rows clamp at the poles.
/// Pixels where every triangle collapses get `-S` and a `false` entry in the
/// returned validity grid.
pub fn normals_from_depth(depth: &ErpGrid<f64>) -> (ErpGrid<Vector3<f64>>, ErpGrid<bool>) {
    let (normals, valid) = column_normals_from_depth(depth);
    (to_world_frame(&normals), valid)
}

/// [`normals_from_depth`] with each normal in its pixel's column frame.
///
/// Every pixel is computed from relative offsets only, so rolling the depth
/// map horizontally rolls the result bit for bit.
pub fn column_normals_from_depth(depth: &ErpGrid<f64>) -> (ErpGrid<Vector3<f64>>, ErpGrid<bool>) {
    let (w, h) = depth.dims();
    let rows: Vec<Vector3<f64>> = (0..h).map(|y| row_ray(y, h)).collect();
    let turns = [column_offset(-1.0, w), column_offset(1.0, w)];
    let ray = |dx: isize, y: usize| match dx {
        0 => rows[y],
        -1 => rotate_yaw(rows[y], turns[0]),
        _ => rotate_yaw(rows[y], turns[1]),
    };

    // Counter-clockwise ring starting east (image rows grow downwards).
    const RING: [(isize, isize); 8] = [
        (1, 0),
        (1, -1),
        (0, -1),
        (-1, -1),
        (-1, 0),
        (-1, 1),
        (0, 1),
        (1, 1),
    ];

    let mut out = vec![(Vector3::zeros(), true); w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, slot) in row.iter_mut().enumerate() {
            let s = rows[y];
            let p = s * *depth.get(x, y);
            let mut diffs = [Vector3::zeros(); 8];
            for (k, (dx, dy)) in RING.iter().enumerate() {
                let jx = (x as isize + dx).rem_euclid(w as isize) as usize;
                let jy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                diffs[k] = ray(*dx, jy) * *depth.get(jx, jy) - p;
            }
            let scale = p.norm_squared().max(f64::MIN_POSITIVE);
            let mut n = Vector3::zeros();
            for k in 0..8 {
                let c = diffs[k].cross(&diffs[(k + 1) % 8]);
                let len = c.norm();
                if len > 1e-14 * scale {
                    n += c / len;
                }
            }
            let norm = n.norm();
            if !(norm.is_finite() && norm > 1e-9) {
                *slot = (-s, false);
                continue;
            }
            n /= norm;
            if n.dot(&s) > 0.0 {
                n = -n;
            }
            *slot = (n, true);
        }
    });

    let normals = Grid::from_vec(w, h, out.iter().map(|(n, _)| *n).collect())
        .expect("dimensions preserved");
    let valid =
        Grid::from_vec(w, h, out.iter().map(|(_, v)| *v).collect()).expect("dimensions preserved");
    (
        ErpGrid::new(normals).expect("dimensions preserved"),
        ErpGrid::new(valid).expect("dimensions preserved"),
    )
}
