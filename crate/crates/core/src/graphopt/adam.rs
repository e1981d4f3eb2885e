use nalgebra::Vector3;
use rayon::prelude::*;

use crate::geometry::FACE_COUNT;
use crate::graphopt::{Gradients, OptConfig, OptState};
use crate::resample::FaceIdMap;

#[inline]
fn adam_update(
    x: &mut f64,
    m: &mut f64,
    v: &mut f64,
    g: f64,
    lr: f64,
    b1: f64,
    b2: f64,
    c1: f64,
    c2: f64,
    eps: f64,
) {
    *m = b1 * *m + (1.0 - b1) * g;
    *v = b2 * *v + (1.0 - b2) * g * g;
    let m_hat = *m / c1;
    let v_hat = *v / c2;
    *x -= lr * m_hat / (v_hat.sqrt() + eps);
}

/// One bias-corrected Adam step on every parameter group, followed by the
/// constraint projections: unit normals, and depth and scales floored at
/// `cfg.min_value`.
pub fn adam_step(state: &mut OptState, grads: &Gradients, lr: f64, cfg: &OptConfig) {
    adam_with_rates(state, grads, [lr; 3], cfg, None);
}

/// Sum of per-face contributions, each face's terms added in sorted order
/// so the result does not depend on pixel order.
pub(crate) fn sorted_face_sums(face_id: &FaceIdMap, terms: impl Iterator<Item = f64>) -> [f64; FACE_COUNT] {
    let mut per_face: [Vec<f64>; FACE_COUNT] = Default::default();
    for (c, t) in face_id.data().iter().zip(terms) {
        if t != 0.0 {
            per_face[*c as usize].push(t);
        }
    }
    let mut out = [0.0; FACE_COUNT];
    for (o, v) in out.iter_mut().zip(per_face.iter_mut()) {
        v.sort_unstable_by(f64::total_cmp);
        *o = v.iter().sum();
    }
    out
}

/// The optimizer's update: Adam in normalized units with optional
/// face-coupled depth and gauge fixing (see [`OptConfig`]).
///
/// With `couple_scales`, depth is represented as `D_i = lambda_c(i) * x_i`;
/// Adam acts on `x` and `lambda` with the chain-rule gradients
/// `dL/dx_i = lambda_c dL/dD_i` and
/// `dL/dlambda_c = dL/dlambda_c + sum_{i in c} x_i dL/dD_i`.
pub fn scaled_step(
    state: &mut OptState,
    grads: &Gradients,
    face_id: &FaceIdMap,
    lr: f64,
    depth_ref: f64,
    cfg: &OptConfig,
) {
    let unit = cfg.step_unit;
    let rates = [lr * unit * depth_ref, lr * unit, lr * unit * cfg.scale_rate];
    if !cfg.couple_scales {
        adam_with_rates(state, grads, rates, cfg, None);
    } else {
        let lam = state.lambda;
        let fid = face_id.data();
        let x: Vec<f64> = state
            .depth
            .data()
            .iter()
            .zip(fid)
            .map(|(d, c)| d / lam[*c as usize])
            .collect();
        let extra = sorted_face_sums(
            face_id,
            grads.depth.iter().zip(&x).map(|(g, xi)| g * xi),
        );
        let mut coupled = grads.clone();
        for (g, c) in coupled.depth.iter_mut().zip(fid) {
            *g *= lam[*c as usize];
        }
        for c in 0..FACE_COUNT {
            coupled.lambda[c] += extra[c];
        }
        adam_with_rates(state, &coupled, rates, cfg, Some((&x, fid)));
    }
}

/// Adam with per-group rates `[depth, normals, lambda]`. When `coupled` is
/// given, the depth group updates `x` and depth is rebuilt as `lambda * x`
/// after the scales have been updated and projected; the gauge is fixed
/// only in that mode, where rescaling the scales rescales depth with them.
fn adam_with_rates(
    state: &mut OptState,
    grads: &Gradients,
    rates: [f64; 3],
    cfg: &OptConfig,
    coupled: Option<(&[f64], &[u8])>,
) {
    let (b1, b2, eps) = (cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    state.moments.step += 1;
    let t = state.moments.step as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let floor = cfg.min_value;
    let mom = &mut state.moments;

    for c in 0..FACE_COUNT {
        let (m, v) = (&mut mom.lambda_m[c], &mut mom.lambda_v[c]);
        if grads.lambda[c] == 0.0 && *m == 0.0 {
            continue;
        }
        adam_update(&mut state.lambda[c], m, v, grads.lambda[c], rates[2], b1, b2, c1, c2, eps);
        state.lambda[c] = state.lambda[c].max(floor);
    }
    if cfg.fix_gauge && coupled.is_some() {
        let mean_log = state.lambda.iter().map(|l| l.ln()).sum::<f64>() / FACE_COUNT as f64;
        let g = mean_log.exp();
        for l in state.lambda.iter_mut() {
            *l = (*l / g).max(floor);
        }
    }

    let lam = state.lambda;
    let depth_rate = rates[0];
    match coupled {
        None => state
            .depth
            .data_mut()
            .par_iter_mut()
            .zip(mom.depth_m.par_iter_mut())
            .zip(mom.depth_v.par_iter_mut())
            .zip(grads.depth.par_iter())
            .for_each(|(((d, m), v), g)| {
                if *g != 0.0 || *m != 0.0 {
                    adam_update(d, m, v, *g, depth_rate, b1, b2, c1, c2, eps);
                }
                *d = d.max(floor);
            }),
        Some((x, fid)) => state
            .depth
            .data_mut()
            .par_iter_mut()
            .zip(mom.depth_m.par_iter_mut())
            .zip(mom.depth_v.par_iter_mut())
            .zip(grads.depth.par_iter())
            .zip(x.par_iter().zip(fid.par_iter()))
            .for_each(|((((d, m), v), g), (x, c))| {
                let mut xi = *x;
                if *g != 0.0 || *m != 0.0 {
                    adam_update(&mut xi, m, v, *g, depth_rate, b1, b2, c1, c2, eps);
                }
                *d = (lam[*c as usize] * xi).max(floor);
            }),
    }

    let normal_rate = rates[1];
    state
        .normals
        .data_mut()
        .par_iter_mut()
        .zip(mom.normals_m.par_iter_mut())
        .zip(mom.normals_v.par_iter_mut())
        .zip(grads.normals.par_iter())
        .for_each(|(((n, m), v), g)| {
            if *g == Vector3::zeros() && *m == Vector3::zeros() {
                return;
            }
            for k in 0..3 {
                adam_update(&mut n[k], &mut m[k], &mut v[k], g[k], normal_rate, b1, b2, c1, c2, eps);
            }
            let len = n.norm();
            if len > 0.0 {
                *n /= len;
            }
        });
}
