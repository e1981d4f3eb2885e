//! Planar-consistency and fidelity objectives with their analytic gradients.
//!
//! With `phi(x) = sqrt(x^2 + eps^2)` and `P_i = D_i S_i`:
//!
//! ```text
//! L_p = sum_i sum_{j~i} w_ij phi(n_i . (P_j - P_i)) + alpha sum_i sum_{j~i} w_ij phi(|n_j - n_i|)
//! L_d = sum_i m_i phi(D_i - lambda_{c(i)} Dbar_i)
//! L_n = sum_i m_i sum_k phi(n_ik - nbar_ik)
//! L   = eta_p L_p + eta_d L_d + eta_n L_n
//! ```
//!
//! Normals are held in column frames (see [`crate::geometry::row_ray`]), so
//! the componentwise residual of `L_n` turns with the column and every edge
//! is evaluated in the frame of the pixel it starts from. Sums are raw (no
//! averaging). Pixels flagged invalid at ingestion take no part in any term.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::OptError;
use crate::geometry::{
    column_normals_from_depth, column_offset, rotate_yaw, row_ray, wrapped_offset, FACE_COUNT,
};
use crate::graphopt::{NeighborGraph, OptConfig};
use crate::grid::{ErpGrid, Grid};
use crate::resample::FaceIdMap;

/// Smoothed absolute value.
#[inline]
pub fn charbonnier(x: f64, eps: f64) -> f64 {
    (x * x + eps * eps).sqrt()
}

/// Derivative of [`charbonnier`]. At `eps = 0` this is `x / |x|`, which is
/// NaN at the kink.
#[inline]
pub fn charbonnier_grad(x: f64, eps: f64) -> f64 {
    x / charbonnier(x, eps)
}

/// Merged observations the optimizer is anchored to.
#[derive(Debug, Clone, PartialEq)]
pub struct OptInputs {
    /// Merged radial depth.
    pub depth: ErpGrid<f64>,
    /// Merged unit normals facing the camera, each in its pixel's column frame.
    pub normals: ErpGrid<Vector3<f64>>,
    /// Grayscale guidance image in `[0, 1]`.
    pub intensity: ErpGrid<f64>,
    pub face_id: FaceIdMap,
    /// Pixels usable at all (finite positive depth, non-degenerate normal).
    pub valid: ErpGrid<bool>,
}

impl OptInputs {
    pub fn check(&self) -> Result<(), OptError> {
        self.depth.same_dims(&self.normals)?;
        self.depth.same_dims(&self.intensity)?;
        self.depth.same_dims(&self.face_id)?;
        self.depth.same_dims(&self.valid)?;
        if let Some(c) = self.face_id.data().iter().find(|c| **c as usize >= FACE_COUNT) {
            return Err(OptError::InvalidConfig(format!("face id {c} out of range")));
        }
        Ok(())
    }

    /// Rolls every grid by `shift` columns: the same scene after a camera yaw.
    pub fn roll_x(&self, shift: isize) -> Self {
        Self {
            depth: self.depth.roll_x(shift),
            normals: self.normals.roll_x(shift),
            intensity: self.intensity.roll_x(shift),
            face_id: self.face_id.roll_x(shift),
            valid: self.valid.roll_x(shift),
        }
    }
}

/// Binary per-pixel weight of the fidelity terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMask(pub ErpGrid<bool>);

impl ConfidenceMask {
    pub fn all(height: usize, value: bool) -> Self {
        Self(ErpGrid::filled(height, value))
    }

    pub fn get(&self, i: usize) -> bool {
        self.0.data()[i]
    }

    pub fn count(&self) -> usize {
        self.0.data().iter().filter(|m| **m).count()
    }
}

/// `m_i = 1` iff the pixel is valid and the cosine between the input normal
/// and the normal derived from the input depth reaches `cfg.mask_threshold`.
/// `normals` are in column frames.
pub fn compute_mask(
    depth: &ErpGrid<f64>,
    normals: &ErpGrid<Vector3<f64>>,
    valid: Option<&ErpGrid<bool>>,
    cfg: &OptConfig,
) -> ConfidenceMask {
    let (derived, derived_ok) = column_normals_from_depth(depth);
    let data = (0..depth.len())
        .map(|i| {
            let ok = valid.is_none_or(|v| v.data()[i]) && derived_ok.data()[i];
            let a = normals.data()[i];
            let b = derived.data()[i];
            let denom = a.norm() * b.norm();
            ok && denom > 0.0 && a.dot(&b) / denom >= cfg.mask_threshold
        })
        .collect();
    let (w, h) = depth.dims();
    ConfidenceMask(ErpGrid::new(Grid::from_vec(w, h, data).unwrap()).unwrap())
}

/// Optimization variables and their Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub depth: ErpGrid<f64>,
    pub normals: ErpGrid<Vector3<f64>>,
    pub lambda: [f64; FACE_COUNT],
    pub moments: Moments,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Moments {
    pub depth_m: Vec<f64>,
    pub depth_v: Vec<f64>,
    pub normals_m: Vec<Vector3<f64>>,
    pub normals_v: Vec<Vector3<f64>>,
    pub lambda_m: [f64; FACE_COUNT],
    pub lambda_v: [f64; FACE_COUNT],
    pub step: u64,
}

impl OptState {
    /// Starts from the observations with unit per-face scales and zero moments.
    pub fn from_inputs(inputs: &OptInputs) -> Self {
        Self::new(inputs.depth.clone(), inputs.normals.clone(), [1.0; FACE_COUNT])
    }

    pub fn new(
        depth: ErpGrid<f64>,
        normals: ErpGrid<Vector3<f64>>,
        lambda: [f64; FACE_COUNT],
    ) -> Self {
        let n = depth.len();
        Self {
            depth,
            normals,
            lambda,
            moments: Moments {
                depth_m: vec![0.0; n],
                depth_v: vec![0.0; n],
                normals_m: vec![Vector3::zeros(); n],
                normals_v: vec![Vector3::zeros(); n],
                ..Default::default()
            },
        }
    }
}

/// Everything held fixed while iterating at one resolution.
#[derive(Debug, Clone)]
pub struct Problem {
    pub inputs: OptInputs,
    pub graph: NeighborGraph,
    pub mask: ConfidenceMask,
    width: usize,
    height: usize,
    /// Ray of each row in its own column frame.
    rows: Vec<Vector3<f64>>,
    /// Yaw between columns, indexed by the offset modulo the width.
    turns: Vec<(f64, f64)>,
}

impl Problem {
    /// Builds graph and mask for `inputs` at their own resolution.
    pub fn new(inputs: OptInputs, cfg: &OptConfig) -> Result<Self, OptError> {
        inputs.check()?;
        let graph = super::build_graph(&inputs.intensity, cfg);
        let mask = compute_mask(&inputs.depth, &inputs.normals, Some(&inputs.valid), cfg);
        Ok(Self::with_parts(inputs, graph, mask))
    }

    pub fn with_parts(inputs: OptInputs, graph: NeighborGraph, mask: ConfidenceMask) -> Self {
        let (w, h) = inputs.depth.dims();
        let turns = (0..w)
            .map(|d| column_offset(wrapped_offset(0, d, w) as f64, w))
            .collect();
        Self {
            width: w,
            height: h,
            rows: (0..h).map(|y| row_ray(y, h)).collect(),
            turns,
            inputs,
            graph,
            mask,
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Point of pixel `j` at depth `d`, in the column frame of pixel `i`.
    pub fn point_in_frame(&self, j: usize, d: f64, i: usize) -> Vector3<f64> {
        rotate_yaw(self.rows[j / self.width], self.turn(i, j)) * d
    }

    /// Column-frame vector `v` of pixel `j`, re-expressed in pixel `i`'s frame.
    pub fn vector_in_frame(&self, v: Vector3<f64>, j: usize, i: usize) -> Vector3<f64> {
        rotate_yaw(v, self.turn(i, j))
    }

    /// Yaw from pixel `i`'s column to pixel `j`'s.
    #[inline]
    fn turn(&self, i: usize, j: usize) -> (f64, f64) {
        let w = self.width;
        self.turns[(j % w + w - i % w) % w]
    }
}

/// Individual loss terms (unweighted) and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct LossTerms {
    /// First planar term: point-to-tangent-plane residuals.
    pub planar_point: f64,
    /// Second planar term before multiplying by `alpha`.
    pub planar_normal: f64,
    /// `planar_point + alpha * planar_normal`.
    pub planar: f64,
    pub depth: f64,
    pub normal: f64,
    pub total: f64,
}

/// `eta_p L_p + eta_d L_d + eta_n L_n`.
pub fn total_loss(planar: f64, depth: f64, normal: f64, cfg: &OptConfig) -> f64 {
    cfg.eta_p * planar + cfg.eta_d * depth + cfg.eta_n * normal
}

/// Gradients of the total loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub depth: Vec<f64>,
    pub normals: Vec<Vector3<f64>>,
    pub lambda: [f64; FACE_COUNT],
}

impl Gradients {
    pub fn check_finite(&self) -> Result<(), OptError> {
        if let Some(i) = self.depth.iter().position(|g| !g.is_finite()) {
            return Err(OptError::NonFiniteGradient {
                parameter: "depth",
                index: i,
            });
        }
        if let Some(i) = self
            .normals
            .iter()
            .position(|g| !g.iter().all(|c| c.is_finite()))
        {
            return Err(OptError::NonFiniteGradient {
                parameter: "normals",
                index: i,
            });
        }
        if let Some(i) = self.lambda.iter().position(|g| !g.is_finite()) {
            return Err(OptError::NonFiniteGradient {
                parameter: "lambda",
                index: i,
            });
        }
        Ok(())
    }
}

#[derive(Default, Clone, Copy)]
struct RowSums {
    point: f64,
    normal: f64,
    depth: f64,
    norm_fid: f64,
}

impl RowSums {
    fn add(&mut self, o: &RowSums) {
        self.point += o.point;
        self.normal += o.normal;
        self.depth += o.depth;
        self.norm_fid += o.norm_fid;
    }
}

/// Terms anchored at pixel `i`: its outgoing edges and its fidelity terms.
fn pixel_sums(state: &OptState, problem: &Problem, eps: f64, i: usize) -> RowSums {
    let mut s = RowSums::default();
    let inputs = &problem.inputs;
    let valid = inputs.valid.data();
    if !valid[i] {
        return s;
    }
    let w = problem.width;
    let depth = state.depth.data();
    let normals = state.normals.data();
    let p_i = problem.rows[i / w] * depth[i];
    let n_i = normals[i];
    for (j, wij) in problem.graph.neighbors(i) {
        if !valid[j] {
            continue;
        }
        let turn = problem.turn(i, j);
        let p_j = rotate_yaw(problem.rows[j / w], turn) * depth[j];
        let n_j = rotate_yaw(normals[j], turn);
        s.point += wij * charbonnier(n_i.dot(&(p_j - p_i)), eps);
        s.normal += wij * charbonnier((n_j - n_i).norm(), eps);
    }
    if problem.mask.get(i) {
        let lam = state.lambda[inputs.face_id.data()[i] as usize];
        s.depth += charbonnier(depth[i] - lam * inputs.depth.data()[i], eps);
        let d = n_i - inputs.normals.data()[i];
        s.norm_fid += d.iter().map(|c| charbonnier(*c, eps)).sum::<f64>();
    }
    s
}

/// Weighted total of the terms anchored at pixel `i`; summing over all
/// pixels gives the total loss.
pub fn pixel_loss(state: &OptState, problem: &Problem, cfg: &OptConfig, i: usize) -> f64 {
    let s = pixel_sums(state, problem, cfg.charbonnier_eps, i);
    total_loss(s.point + cfg.alpha * s.normal, s.depth, s.norm_fid, cfg)
}

/// Evaluates every loss term.
pub fn loss_terms(state: &OptState, problem: &Problem, cfg: &OptConfig) -> LossTerms {
    let w = problem.width;
    let eps = cfg.charbonnier_eps;

    let rows: Vec<RowSums> = (0..problem.height)
        .into_par_iter()
        .map(|y| {
            let mut s = RowSums::default();
            for i in y * w..(y + 1) * w {
                s.add(&pixel_sums(state, problem, eps, i));
            }
            s
        })
        .collect();

    let mut acc = RowSums::default();
    for r in &rows {
        acc.add(r);
    }
    let planar = acc.point + cfg.alpha * acc.normal;
    LossTerms {
        planar_point: acc.point,
        planar_normal: acc.normal,
        planar,
        depth: acc.depth,
        normal: acc.norm_fid,
        total: total_loss(planar, acc.depth, acc.norm_fid, cfg),
    }
}

/// Planar loss alone.
pub fn loss_planar(state: &OptState, problem: &Problem, cfg: &OptConfig) -> f64 {
    loss_terms(state, problem, cfg).planar
}

/// Fidelity terms `(L_d, L_n)`.
pub fn loss_fidelity(state: &OptState, problem: &Problem, cfg: &OptConfig) -> (f64, f64) {
    let t = loss_terms(state, problem, cfg);
    (t.depth, t.normal)
}

/// Analytic gradient of the total loss with respect to depth, normals and
/// per-face scales.
///
/// Each pixel gathers its own gradient from both roles it plays on every
/// edge, relying on the graph's symmetry, so rows are processed
/// independently. Per-face scale gradients are summed in sorted order,
/// which makes them invariant to pixel permutations such as horizontal rolls.
pub fn gradients(
    state: &OptState,
    problem: &Problem,
    cfg: &OptConfig,
) -> Result<Gradients, OptError> {
    let n = problem.pixel_count();
    let w = problem.width;
    let eps = cfg.charbonnier_eps;
    let depth = state.depth.data();
    let normals = state.normals.data();
    let inputs = &problem.inputs;
    let valid = inputs.valid.data();
    let face_id = inputs.face_id.data();
    let dbar = inputs.depth.data();
    let nbar = inputs.normals.data();
    let point_w = cfg.eta_p;
    let normal_w = 2.0 * cfg.eta_p * cfg.alpha;

    let mut g_depth = vec![0.0; n];
    let mut g_normals = vec![Vector3::zeros(); n];
    let mut lambda_parts = vec![0.0; n];

    g_depth
        .par_chunks_mut(w)
        .zip(g_normals.par_chunks_mut(w))
        .zip(lambda_parts.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, ((gd_row, gn_row), gl_row))| {
            for x in 0..w {
                let i = y * w + x;
                if !valid[i] {
                    continue;
                }
                let s_i = problem.rows[y];
                let p_i = s_i * depth[i];
                let n_i = normals[i];
                let n_dot_s = n_i.dot(&s_i);
                let mut gd = 0.0;
                let mut gn = Vector3::zeros();
                for (j, wij) in problem.graph.neighbors(i) {
                    if !valid[j] {
                        continue;
                    }
                    let s_j = problem.rows[j / w];
                    let n_j = normals[j];
                    // Edge i -> j in i's frame: residual n_i . (P_j - P_i).
                    let to_j = problem.turn(i, j);
                    let diff = rotate_yaw(s_j, to_j) * depth[j] - p_i;
                    let g1 = point_w * wij * charbonnier_grad(n_i.dot(&diff), eps);
                    gd -= g1 * n_dot_s;
                    gn += diff * g1;
                    // Edge j -> i in j's frame: residual n_j . (P_i - P_j).
                    let s_i_in_j = rotate_yaw(s_i, problem.turn(j, i));
                    let r2 = n_j.dot(&(s_i_in_j * depth[i] - s_j * depth[j]));
                    let g2 = point_w * wij * charbonnier_grad(r2, eps);
                    gd += g2 * n_j.dot(&s_i_in_j);
                    // Normal smoothness appears once per direction.
                    let dn = n_i - rotate_yaw(n_j, to_j);
                    gn += dn * (normal_w * wij / charbonnier(dn.norm(), eps));
                }
                if problem.mask.get(i) {
                    let c = face_id[i] as usize;
                    let g = cfg.eta_d * charbonnier_grad(depth[i] - state.lambda[c] * dbar[i], eps);
                    gd += g;
                    gl_row[x] = -g * dbar[i];
                    let d = n_i - nbar[i];
                    gn += d.map(|c| cfg.eta_n * charbonnier_grad(c, eps));
                }
                gd_row[x] = gd;
                gn_row[x] = gn;
            }
        });

    let mut per_face: [Vec<f64>; FACE_COUNT] = Default::default();
    for (i, part) in lambda_parts.iter().enumerate() {
        if *part != 0.0 {
            per_face[face_id[i] as usize].push(*part);
        }
    }
    let mut g_lambda = [0.0; FACE_COUNT];
    for (c, parts) in per_face.iter_mut().enumerate() {
        parts.sort_by(f64::total_cmp);
        g_lambda[c] = parts.iter().sum();
    }

    let grads = Gradients {
        depth: g_depth,
        normals: g_normals,
        lambda: g_lambda,
    };
    grads.check_finite()?;
    Ok(grads)
}
