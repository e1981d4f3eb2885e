//! Synthetic ground truth and brute-force checkers.
//!
//! Scenes are traced analytically from a camera inside a box room or a
//! sphere shell. Per-face renders mimic a perspective predictor: z-depth
//! with an arbitrary per-face scale, optional multiplicative depth noise and
//! angular normal noise. Noise comes from `ChaCha8Rng` seeded with the
//! caller's seed and drawn in a fixed pixel order.

use nalgebra::{Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::OptError;
use crate::geometry::{erp_pixel_ray, CameraModel, FACE_COUNT};
use crate::graphopt::{
    build_graph, gradients, pixel_loss, ConfidenceMask, OptConfig, OptInputs,
    OptState, Problem,
};
use crate::grid::{ErpGrid, Grid};
use crate::resample::{face_id_map, CubemapFaces};

/// Name of the noise generator recorded in output metadata.
pub const RNG_NAME: &str = "chacha8";

/// Gray level of each box wall, indexed `+x, -x, +y, -y, +z, -z`.
pub const BOX_ALBEDO: [f64; 6] = [0.25, 0.85, 0.55, 0.1, 0.7, 0.4];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SceneKind {
    /// Axis-aligned box centered at the origin.
    Box { half_extents: [f64; 3] },
    /// Sphere centered at the origin.
    Sphere { radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    #[serde(flatten)]
    pub kind: SceneKind,
    /// Camera center in scene coordinates (meters).
    pub camera: [f64; 3],
    /// ERP height in pixels; width is twice this.
    pub height: usize,
}

impl SceneSpec {
    /// Off-center box room whose cube-face seams cut through walls.
    pub fn default_box(height: usize) -> Self {
        Self {
            kind: SceneKind::Box {
                half_extents: [2.0, 1.5, 3.0],
            },
            camera: [0.4, -0.3, 0.6],
            height,
        }
    }

    pub fn default_sphere(height: usize) -> Self {
        Self {
            kind: SceneKind::Sphere { radius: 3.0 },
            camera: [0.0; 3],
            height,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.height == 0 {
            return Err("height must be positive".into());
        }
        let c = Vector3::from(self.camera);
        let inside = match self.kind {
            SceneKind::Box { half_extents } => (0..3).all(|k| {
                half_extents[k] > 0.0 && c[k].abs() < half_extents[k]
            }),
            SceneKind::Sphere { radius } => radius > 0.0 && c.norm() < radius,
        };
        if !inside {
            return Err("camera must lie strictly inside the scene".into());
        }
        Ok(())
    }

    /// Distance along unit direction `dir`, facing normal and albedo of the hit.
    pub fn trace(&self, dir: &Vector3<f64>) -> (f64, Vector3<f64>, f64) {
        let c = Vector3::from(self.camera);
        match self.kind {
            SceneKind::Box { half_extents } => {
                let mut best = (f64::INFINITY, Vector3::zeros(), 0.0);
                for k in 0..3 {
                    if dir[k] == 0.0 {
                        continue;
                    }
                    let side = dir[k].signum();
                    let t = (side * half_extents[k] - c[k]) / dir[k];
                    if t < best.0 {
                        let mut n = Vector3::zeros();
                        n[k] = -side;
                        let wall = 2 * k + usize::from(side < 0.0);
                        best = (t, n, BOX_ALBEDO[wall]);
                    }
                }
                best
            }
            SceneKind::Sphere { radius } => {
                let b = c.dot(dir);
                let t = -b + (b * b - (c.norm_squared() - radius * radius)).sqrt();
                let p = c + dir * t;
                (t, -p / radius, 0.5)
            }
        }
    }
}

/// Analytic ERP ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedScene {
    pub depth: ErpGrid<f64>,
    pub normals: ErpGrid<Vector3<f64>>,
    pub intensity: ErpGrid<f64>,
}

pub fn render_scene(spec: &SceneSpec) -> RenderedScene {
    let h = spec.height;
    let hits = ErpGrid::from_fn(h, |x, y| spec.trace(&erp_pixel_ray(x, y, 2 * h, h)));
    RenderedScene {
        depth: hits.map(|h| h.0),
        normals: hits.map(|h| h.1),
        intensity: hits.map(|h| h.2),
    }
}

/// Per-face inconsistencies applied to the face renders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corruption {
    pub scales: [f64; FACE_COUNT],
    /// Standard deviation of the normal perturbation angle, degrees.
    pub normal_noise_deg: f64,
    /// Relative standard deviation of multiplicative depth noise.
    pub depth_noise: f64,
}

impl Corruption {
    pub fn identity() -> Self {
        Self::scales([1.0; FACE_COUNT])
    }

    pub fn scales(scales: [f64; FACE_COUNT]) -> Self {
        Self {
            scales,
            normal_noise_deg: 0.0,
            depth_noise: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if let Some(s) = self.scales.iter().find(|s| !(0.5..=2.0).contains(*s)) {
            return Err(format!("face scale {s} outside [0.5, 2.0]"));
        }
        if !(self.normal_noise_deg >= 0.0 && self.depth_noise >= 0.0) {
            return Err("noise levels must be non-negative".into());
        }
        Ok(())
    }
}

/// Per-face predictions as a perspective model would emit them.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceRenders {
    /// z-depth (radial distance over `rho`), scaled per face.
    pub depth: CubemapFaces<f64>,
    /// Unit normals in each face's camera frame.
    pub normals: CubemapFaces<Vector3<f64>>,
}

fn perturb_normal(n: &Vector3<f64>, angle_deg: f64, rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let angle: f64 = rng.sample::<f64, _>(StandardNormal) * angle_deg.to_radians();
    let azimuth: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let helper = if n.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let u = n.cross(&helper).normalize();
    let v = n.cross(&u);
    let axis = Unit::new_normalize(u * azimuth.cos() + v * azimuth.sin());
    Rotation3::from_axis_angle(&axis, angle) * n
}

/// Renders the six faces of `spec` and applies `corruption`.
pub fn corrupt(
    spec: &SceneSpec,
    cam: &CameraModel,
    corruption: &Corruption,
    seed: u64,
) -> FaceRenders {
    let n = cam.face_size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noisy = corruption.depth_noise > 0.0 || corruption.normal_noise_deg > 0.0;
    let mut depth_faces = Vec::with_capacity(FACE_COUNT);
    let mut normal_faces = Vec::with_capacity(FACE_COUNT);
    for face in 0..FACE_COUNT {
        let r_t = cam.rotation(face).transpose();
        let mut depth = Vec::with_capacity(n * n);
        let mut normals = Vec::with_capacity(n * n);
        for row in 0..n {
            for col in 0..n {
                let (u, v) = cam.pixel_center(col, row);
                let ray = cam.face_ray(face, u, v);
                let (t, normal, _) = spec.trace(ray.as_vector());
                let mut z = t / cam.rho_factor(u, v) * corruption.scales[face];
                let mut local = r_t * normal;
                if noisy {
                    let e: f64 = rng.sample(StandardNormal);
                    z *= (1.0 + corruption.depth_noise * e).max(0.05);
                    local = perturb_normal(&local, corruption.normal_noise_deg, &mut rng);
                }
                depth.push(z);
                normals.push(local);
            }
        }
        depth_faces.push(Grid::from_vec(n, n, depth).unwrap());
        normal_faces.push(Grid::from_vec(n, n, normals).unwrap());
    }
    FaceRenders {
        depth: CubemapFaces::new(depth_faces, cam.clone()).unwrap(),
        normals: CubemapFaces::new(normal_faces, cam.clone()).unwrap(),
    }
}

/// Central-difference gradient of `f` at `x`.
pub fn central_differences(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + h;
            let plus = f(&probe);
            probe[k] = x[k] - h;
            let minus = f(&probe);
            probe[k] = x[k];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// `max_k |a_k - b_k| / max(|a_k|, |b_k|, floor)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// A small optimization problem with a state to differentiate at.
#[derive(Debug, Clone)]
pub struct GradcheckInstance {
    pub problem: Problem,
    pub state: OptState,
    pub cfg: OptConfig,
}

/// Smallest magnitude of any smoothed-absolute-value argument in the loss.
///
/// Central differences straddling one of these kinks do not approximate the
/// derivative, so random instances are drawn away from them.
pub fn min_kink_distance(instance: &GradcheckInstance) -> f64 {
    kink_scan(instance, f64::INFINITY).0
}

/// Minimum kink distance and the pixels owning arguments below `guard`.
fn kink_scan(instance: &GradcheckInstance, guard: f64) -> (f64, Vec<usize>) {
    let GradcheckInstance {
        problem,
        state,
        ..
    } = instance;
    let d = state.depth.data();
    let n = state.normals.data();
    let inputs = &problem.inputs;
    let mut best = f64::INFINITY;
    let mut offenders = Vec::new();
    for i in 0..problem.pixel_count() {
        if !inputs.valid.data()[i] {
            continue;
        }
        let mut pixel_best = f64::INFINITY;
        let mut normal_gap = f64::INFINITY;
        for (j, _) in problem.graph.neighbors(i) {
            if inputs.valid.data()[j] {
                let diff = problem.point_in_frame(j, d[j], i) - problem.point_in_frame(i, d[i], i);
                pixel_best = pixel_best.min(n[i].dot(&diff).abs());
                normal_gap = normal_gap.min((problem.vector_in_frame(n[j], j, i) - n[i]).norm());
            }
        }
        if problem.mask.get(i) {
            let c = inputs.face_id.data()[i] as usize;
            pixel_best = pixel_best.min((d[i] - state.lambda[c] * inputs.depth.data()[i]).abs());
            for k in 0..3 {
                pixel_best = pixel_best.min((n[i][k] - inputs.normals.data()[i][k]).abs());
            }
        }
        if pixel_best < guard || normal_gap < guard.max(NORMAL_GAP_GUARD) {
            offenders.push(i);
        }
        best = best.min(pixel_best).min(normal_gap);
    }
    (best, offenders)
}

#[derive(Debug, Clone, Copy)]
struct PixelDraw {
    depth: f64,
    depth_in: f64,
    normal: Vector3<f64>,
    normal_in: Vector3<f64>,
    intensity: f64,
    masked: bool,
}

fn draw_pixel(rng: &mut ChaCha8Rng, s: Vector3<f64>) -> PixelDraw {
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let mut jitter =
        || (-s + Vector3::new(u(-0.6, 0.6), u(-0.6, 0.6), u(-0.6, 0.6))).normalize();
    let normal = jitter();
    let normal_in = jitter();
    let depth = u(1.5, 3.0);
    PixelDraw {
        depth,
        depth_in: depth * u(0.7, 1.3),
        normal,
        normal_in,
        intensity: 0.5 + u(-0.04, 0.04),
        masked: u(0.0, 1.0) < 0.8,
    }
}

/// Random instance of `width x height` (at most 32x16) in general position:
/// every kink argument is at least `guard` away from zero, neighbor normals
/// differ by at least [`NORMAL_GAP_GUARD`] and no per-pixel gradient
/// component is smaller than [`MIN_GRADIENT`]. Offending pixels are redrawn
/// until none remain.
pub fn random_instance(
    seed: u64,
    width: usize,
    height: usize,
    cfg: &OptConfig,
    guard: f64,
) -> Result<GradcheckInstance, OptError> {
    if width != 2 * height || height < 2 || width > 32 || height > 16 {
        return Err(OptError::InvalidConfig(format!(
            "gradient check instances are 2:1 and at most 32x16, got {width}x{height}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let face_id = face_id_map(&CameraModel::new((height / 2).max(1)), height);
    let rays: Vec<Vector3<f64>> = (0..width * height)
        .map(|i| erp_pixel_ray(i % width, i / width, width, height))
        .collect();
    let mut pixels: Vec<PixelDraw> = rays.iter().map(|s| draw_pixel(&mut rng, *s)).collect();
    let lambda: [f64; FACE_COUNT] = std::array::from_fn(|_| rng.random_range(0.8..1.25));
    let erp = |v: Vec<f64>| ErpGrid::new(Grid::from_vec(width, height, v).unwrap()).unwrap();
    let erp3 =
        |v: Vec<Vector3<f64>>| ErpGrid::new(Grid::from_vec(width, height, v).unwrap()).unwrap();
    for _ in 0..1_000 {
        let inputs = OptInputs {
            depth: erp(pixels.iter().map(|p| p.depth_in).collect()),
            normals: erp3(pixels.iter().map(|p| p.normal_in).collect()),
            intensity: erp(pixels.iter().map(|p| p.intensity).collect()),
            face_id: face_id.clone(),
            valid: ErpGrid::filled(height, true),
        };
        let graph = build_graph(&inputs.intensity, cfg);
        let masked = pixels.iter().map(|p| p.masked).collect();
        let mask = ConfidenceMask(ErpGrid::new(Grid::from_vec(width, height, masked).unwrap()).unwrap());
        let instance = GradcheckInstance {
            problem: Problem::with_parts(inputs, graph, mask),
            state: OptState::new(
                erp(pixels.iter().map(|p| p.depth).collect()),
                erp3(pixels.iter().map(|p| p.normal).collect()),
                lambda,
            ),
            cfg: cfg.clone(),
        };
        let (_, mut offenders) = kink_scan(&instance, guard);
        let g = gradients(&instance.state, &instance.problem, cfg)?;
        offenders.extend((0..width * height).filter(|&i| {
            g.depth[i].abs() < MIN_GRADIENT || g.normals[i].iter().any(|c| c.abs() < MIN_GRADIENT)
        }));
        if offenders.is_empty() {
            return Ok(instance);
        }
        offenders.sort_unstable();
        offenders.dedup();
        for i in offenders {
            pixels[i] = draw_pixel(&mut rng, rays[i]);
        }
    }
    Err(OptError::InvalidConfig(format!(
        "no instance with kink distance >= {guard} found"
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub max_relative_error: f64,
    pub depth_error: f64,
    pub normal_error: f64,
    pub lambda_error: f64,
    pub parameters: usize,
}

fn param_mut(state: &mut OptState, k: usize) -> &mut f64 {
    let n = state.depth.len();
    if k < n {
        &mut state.depth.data_mut()[k]
    } else if k < 4 * n {
        let v = &mut state.normals.data_mut()[(k - n) / 3];
        &mut v[(k - n) % 3]
    } else {
        &mut state.lambda[k - 4 * n]
    }
}

/// Pixels whose anchored loss terms read pixel `k`: `k` itself and every
/// pixel with an edge to `k`.
fn pixel_support(problem: &Problem) -> Vec<Vec<usize>> {
    let mut support: Vec<Vec<usize>> = (0..problem.pixel_count()).map(|i| vec![i]).collect();
    for i in 0..problem.pixel_count() {
        for (j, _) in problem.graph.neighbors(i) {
            if j != i {
                support[j].push(i);
            }
        }
    }
    for s in &mut support {
        s.sort_unstable();
        s.dedup();
    }
    support
}

/// Central differences of the total loss, one parameter at a time.
///
/// Only the per-pixel terms that read the perturbed parameter change, so
/// the difference is accumulated over those terms alone. This equals the
/// difference of totals in exact arithmetic and keeps the rounding error
/// proportional to the local loss instead of the whole sum.
pub fn local_central_differences(instance: &GradcheckInstance, h: f64) -> Vec<f64> {
    let GradcheckInstance {
        problem,
        state,
        cfg,
    } = instance;
    let n = state.depth.len();
    let support = pixel_support(problem);
    let face_pixels: Vec<Vec<usize>> = (0..FACE_COUNT)
        .map(|c| {
            (0..n)
                .filter(|&i| problem.inputs.face_id.data()[i] as usize == c)
                .collect()
        })
        .collect();
    let mut scratch = state.clone();
    (0..4 * n + FACE_COUNT)
        .map(|k| {
            let pixels = if k < n {
                &support[k]
            } else if k < 4 * n {
                &support[(k - n) / 3]
            } else {
                &face_pixels[k - 4 * n]
            };
            let x = *param_mut(&mut scratch, k);
            *param_mut(&mut scratch, k) = x + h;
            let plus: Vec<f64> = pixels.iter().map(|&i| pixel_loss(&scratch, problem, cfg, i)).collect();
            *param_mut(&mut scratch, k) = x - h;
            let minus: Vec<f64> = pixels.iter().map(|&i| pixel_loss(&scratch, problem, cfg, i)).collect();
            *param_mut(&mut scratch, k) = x;
            let diff: f64 = plus.iter().zip(&minus).map(|(p, m)| p - m).sum();
            diff / (2.0 * h)
        })
        .collect()
}

/// Compares analytic gradients against central differences of the total loss.
///
/// Normals are differentiated as free 3-vectors, matching the optimizer's
/// parameterization (projection happens after each step, not in the loss).
pub fn finite_diff_gradcheck(
    instance: &GradcheckInstance,
    h: f64,
) -> Result<GradcheckReport, OptError> {
    let GradcheckInstance {
        problem,
        state,
        cfg,
    } = instance;
    let analytic = gradients(state, problem, cfg)?;
    let numeric = local_central_differences(instance, h);
    let n = state.depth.len();
    let a_normals: Vec<f64> = analytic
        .normals
        .iter()
        .flat_map(|v| v.iter().copied())
        .collect();
    let floor = 1e-6;
    let depth_error = max_relative_error(&analytic.depth, &numeric[..n], floor);
    let normal_error = max_relative_error(&a_normals, &numeric[n..4 * n], floor);
    let lambda_error = max_relative_error(&analytic.lambda, &numeric[4 * n..], floor);
    Ok(GradcheckReport {
        max_relative_error: depth_error.max(normal_error).max(lambda_error),
        depth_error,
        normal_error,
        lambda_error,
        parameters: numeric.len(),
    })
}

/// Default check: a random instance in general position at `h = 1e-4`.
pub fn gradcheck(seed: u64, width: usize, height: usize) -> Result<GradcheckReport, OptError> {
    let cfg = OptConfig::default();
    let instance = random_instance(seed, width, height, &cfg, DEFAULT_KINK_GUARD)?;
    finite_diff_gradcheck(&instance, DEFAULT_FD_STEP)
}

pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// Minimum distance of every kink argument from zero in random instances.
/// Perturbing one parameter by `h` moves an argument by at most about
/// `3h` here (depths below 3 m, unit rays and normals).
pub const DEFAULT_KINK_GUARD: f64 = 1e-3;

/// Minimum length of neighbor normal differences in random instances. The
/// Euclidean norm curves at scale `1 / |v|`, so central differences with
/// step `h` are accurate only for `|v|` well above `h`.
pub const NORMAL_GAP_GUARD: f64 = 0.1;

/// Smallest per-pixel gradient component in random instances. Central
/// differences carry an absolute truncation error of order `h^2`, which
/// only a component well away from zero keeps below the relative tolerance.
pub const MIN_GRADIENT: f64 = 0.5;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{lift_points, normals_from_depth};
    use crate::resample::merge_depth_to_erp;
    use crate::graphopt::loss_terms;

    fn flatten(state: &OptState) -> Vec<f64> {
        let mut x: Vec<f64> = state.depth.data().to_vec();
        x.extend(state.normals.data().iter().flat_map(|n| n.iter().copied()));
        x.extend(state.lambda);
        x
    }

    fn unflatten(x: &[f64], into: &mut OptState) {
        let n = into.depth.len();
        into.depth.data_mut().copy_from_slice(&x[..n]);
        for (i, v) in into.normals.data_mut().iter_mut().enumerate() {
            *v = Vector3::new(x[n + 3 * i], x[n + 3 * i + 1], x[n + 3 * i + 2]);
        }
        into.lambda.copy_from_slice(&x[4 * n..4 * n + FACE_COUNT]);
    }

    #[test]
    fn local_differences_match_total_differences() {
        let cfg = OptConfig::default();
        let inst = random_instance(5, 16, 8, &cfg, DEFAULT_KINK_GUARD).unwrap();
        let local = local_central_differences(&inst, 1e-4);
        let x0 = flatten(&inst.state);
        let scratch = std::cell::RefCell::new(inst.state.clone());
        let total = central_differences(
            |x| {
                let mut s = scratch.borrow_mut();
                unflatten(x, &mut s);
                loss_terms(&s, &inst.problem, &cfg).total
            },
            &x0,
            1e-4,
        );
        let sum: f64 = (0..inst.problem.pixel_count())
            .map(|i| pixel_loss(&inst.state, &inst.problem, &cfg, i))
            .sum();
        let full = loss_terms(&inst.state, &inst.problem, &cfg).total;
        assert!((sum - full).abs() <= 1e-12 * full);
        for (a, b) in local.iter().zip(&total) {
            assert!((a - b).abs() < 1e-5 * a.abs().max(1.0), "{a} {b}");
        }
    }

    #[test]
    fn sphere_from_center() {
        let spec = SceneSpec {
            kind: SceneKind::Sphere { radius: 1.0 },
            camera: [0.0; 3],
            height: 16,
        };
        let r = render_scene(&spec);
        for (i, d) in r.depth.data().iter().enumerate() {
            assert!((d - 1.0).abs() < 1e-12);
            let (x, y) = (i % 32, i / 32);
            let s = erp_pixel_ray(x, y, 32, 16);
            assert!((r.normals.data()[i] + s).norm() < 1e-12);
        }
    }

    #[test]
    fn box_forward_ray() {
        let spec = SceneSpec {
            kind: SceneKind::Box {
                half_extents: [2.0, 2.0, 2.0],
            },
            camera: [0.0; 3],
            height: 8,
        };
        let (t, n, _) = spec.trace(&Vector3::z());
        assert_eq!(t, 2.0);
        assert_eq!(n, Vector3::new(0.0, 0.0, -1.0));
    }

    #[test]
    fn box_points_satisfy_plane_equations() {
        let spec = SceneSpec::default_box(32);
        let r = render_scene(&spec);
        let cloud = lift_points(&r.depth, None).unwrap();
        let c = Vector3::from(spec.camera);
        let SceneKind::Box { half_extents } = spec.kind else {
            unreachable!()
        };
        for (p, n) in cloud.points.iter().zip(r.normals.data()) {
            // The wall through the hit has outward normal -n at distance a_k.
            let k = n.iamax();
            let world = p + c;
            let p0 = -n * half_extents[k];
            assert!(n.dot(&(world - p0)).abs() < 1e-9);
        }
    }

    #[test]
    fn box_normals_face_camera_and_match_derived() {
        let spec = SceneSpec::default_box(64);
        let r = render_scene(&spec);
        let (derived, _) = normals_from_depth(&r.depth);
        let mut errs = Vec::new();
        for i in 0..r.depth.len() {
            let (x, y) = (i % 128, i / 128);
            let s = erp_pixel_ray(x, y, 128, 64);
            assert!(r.normals.data()[i].dot(&s) < 0.0);
            let cos = derived.data()[i].dot(&r.normals.data()[i]).clamp(-1.0, 1.0);
            errs.push(cos.acos().to_degrees());
        }
        errs.sort_by(f64::total_cmp);
        assert!(errs[errs.len() / 2] < 1.0);
    }

    #[test]
    fn identity_corruption_merges_to_ground_truth() {
        let spec = SceneSpec::default_box(64);
        let cam = CameraModel::new(32);
        let gt = render_scene(&spec);
        let faces = corrupt(&spec, &cam, &Corruption::identity(), 0);
        let merged = merge_depth_to_erp(&faces.depth, 64);
        let mut rel: Vec<f64> = merged
            .depth
            .data()
            .iter()
            .zip(gt.depth.data())
            .map(|(a, b)| (a - b).abs() / b)
            .collect();
        rel.sort_by(f64::total_cmp);
        assert!(rel[rel.len() / 2] < 0.01);
    }

    #[test]
    fn face_scale_doubles_face_pixels() {
        let spec = SceneSpec::default_box(32);
        let cam = CameraModel::new(16);
        let a = merge_depth_to_erp(&corrupt(&spec, &cam, &Corruption::identity(), 0).depth, 32);
        let scaled = Corruption::scales([2.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let b = merge_depth_to_erp(&corrupt(&spec, &cam, &scaled, 0).depth, 32);
        for i in 0..a.depth.len() {
            let k = if a.face_id.data()[i] == 0 { 2.0 } else { 1.0 };
            assert_eq!(b.depth.data()[i], k * a.depth.data()[i]);
        }
    }

    #[test]
    fn noise_is_reproducible() {
        let spec = SceneSpec::default_box(16);
        let cam = CameraModel::new(8);
        let c = Corruption {
            scales: [1.0, 1.1, 0.9, 1.0, 1.0, 1.0],
            normal_noise_deg: 5.0,
            depth_noise: 0.02,
        };
        assert_eq!(corrupt(&spec, &cam, &c, 9), corrupt(&spec, &cam, &c, 9));
        assert_ne!(corrupt(&spec, &cam, &c, 9), corrupt(&spec, &cam, &c, 10));
    }

    #[test]
    fn corruption_bounds() {
        assert!(Corruption::scales([0.4, 1.0, 1.0, 1.0, 1.0, 1.0]).validate().is_err());
        assert!(Corruption::scales([2.0, 0.5, 1.0, 1.0, 1.0, 1.0]).validate().is_ok());
    }

    #[test]
    fn camera_must_be_inside() {
        let mut spec = SceneSpec::default_box(8);
        spec.camera = [5.0, 0.0, 0.0];
        assert!(spec.validate().is_err());
        assert!(SceneSpec::default_sphere(8).validate().is_ok());
    }

    #[test]
    fn quadratic_gradient_is_exact() {
        let coeffs = [3.0, -1.5, 0.25, 8.0];
        let f = |x: &[f64]| x.iter().zip(coeffs).map(|(v, c)| c * v * v + v).sum::<f64>();
        let x = [0.3, -1.2, 2.0, 0.01];
        let analytic: Vec<f64> = x.iter().zip(coeffs).map(|(v, c)| 2.0 * c * v + 1.0).collect();
        let numeric = central_differences(f, &x, 1e-3);
        assert!(max_relative_error(&analytic, &numeric, 1e-6) < 1e-8);
    }

    #[test]
    fn default_instance_passes() {
        let report = gradcheck(1, 16, 8).unwrap();
        assert!(report.max_relative_error < 1e-4, "{report:?}");
        assert_eq!(report.parameters, 128 * 4 + 6);
    }

    #[test]
    fn non_smooth_loss_fails_at_kinks() {
        // With eps = 0 the loss has true kinks; a state sitting exactly on one
        // either yields a NaN derivative or a large finite-difference error.
        let cfg = OptConfig {
            charbonnier_eps: 0.0,
            ..Default::default()
        };
        let mut instance = random_instance(2, 16, 8, &cfg, 0.0).unwrap();
        let i = instance
            .problem
            .mask
            .0
            .data()
            .iter()
            .position(|m| *m)
            .unwrap();
        let c = instance.problem.inputs.face_id.data()[i] as usize;
        instance.state.depth.data_mut()[i] =
            instance.state.lambda[c] * instance.problem.inputs.depth.data()[i];
        match finite_diff_gradcheck(&instance, DEFAULT_FD_STEP) {
            Err(OptError::NonFiniteGradient { .. }) => {}
            Ok(report) => assert!(report.max_relative_error > 1e-4),
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn oversized_instance_rejected() {
        assert!(random_instance(0, 64, 32, &OptConfig::default(), 0.0).is_err());
    }
}
