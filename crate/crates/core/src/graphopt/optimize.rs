//! Coarse-to-fine driver.

use std::time::Instant;

use nalgebra::Vector3;
use serde::Serialize;

use crate::error::OptError;
use crate::geometry::FACE_COUNT;
use crate::graphopt::{
    gradients, loss_terms, scaled_step, LossTerms, OptConfig, OptInputs, OptState, Problem,
};
use crate::grid::ErpGrid;
use crate::geometry::to_world_frame;
use crate::resample::{downsample, downsample_column_normals, upsample, upsample_column_normals};

/// Resolution, iteration budget and step size of one pyramid level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelPlan {
    /// 0 is full resolution.
    pub level: usize,
    pub factor: usize,
    pub width: usize,
    pub height: usize,
    pub iterations: usize,
    pub learning_rate: f64,
}

/// Levels for an ERP input of `height` rows, coarsest first.
pub fn level_plan(height: usize, cfg: &OptConfig) -> Result<Vec<LevelPlan>, OptError> {
    cfg.validate()?;
    (0..cfg.levels)
        .rev()
        .map(|level| {
            let factor = 1usize << level;
            let h = height / factor;
            if h == 0 {
                return Err(OptError::InvalidConfig(format!(
                    "{} rows cannot be downsampled by {factor}",
                    height
                )));
            }
            Ok(LevelPlan {
                level,
                factor,
                width: 2 * h,
                height: h,
                iterations: cfg.iterations_at(level),
                learning_rate: cfg.learning_rate(level),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelReport {
    pub plan: LevelPlan,
    pub initial: LossTerms,
    pub final_terms: LossTerms,
    /// Total loss before each iteration, then after the last one.
    pub trace: Vec<f64>,
    pub lambda: [f64; FACE_COUNT],
    pub mask_fraction: f64,
    pub edge_count: usize,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptOutput {
    pub depth: ErpGrid<f64>,
    /// Refined normals in column frames; see [`OptOutput::world_normals`].
    pub normals: ErpGrid<Vector3<f64>>,
    pub lambda: [f64; FACE_COUNT],
    pub levels: Vec<LevelReport>,
    /// Columns the inputs were rolled by before building the pyramid.
    pub pyramid_phase: usize,
}

impl OptOutput {
    pub fn world_normals(&self) -> ErpGrid<Vector3<f64>> {
        to_world_frame(&self.normals)
    }

    /// Loss at the start of the coarsest level.
    pub fn initial_total(&self) -> f64 {
        self.levels.first().map_or(0.0, |l| l.initial.total)
    }
}

/// Downsamples every input grid by `factor`.
pub fn downsample_inputs(inputs: &OptInputs, factor: usize) -> OptInputs {
    // Invalid depth never leaks into valid averages: blocks touching an
    // invalid pixel are themselves invalid.
    OptInputs {
        depth: downsample(&inputs.depth, factor),
        normals: downsample_column_normals(&inputs.normals, factor),
        intensity: downsample(&inputs.intensity, factor),
        face_id: downsample(&inputs.face_id, factor),
        valid: downsample(&inputs.valid, factor),
    }
}

/// Runs `iterations` Adam steps on one level. Returns the loss trace.
///
/// `depth_ref` is the typical depth that sets the size of depth steps.
pub fn run_level(
    state: &mut OptState,
    problem: &Problem,
    iterations: usize,
    lr: f64,
    depth_ref: f64,
    cfg: &OptConfig,
) -> Result<Vec<f64>, OptError> {
    let mut trace = Vec::with_capacity(iterations + 1);
    for _ in 0..iterations {
        trace.push(loss_terms(state, problem, cfg).total);
        let grads = gradients(state, problem, cfg)?;
        scaled_step(state, &grads, &problem.inputs.face_id, lr, depth_ref, cfg);
    }
    trace.push(loss_terms(state, problem, cfg).total);
    Ok(trace)
}

/// Median of the valid observed depths, or 1 when there are none.
pub fn reference_depth(inputs: &OptInputs) -> f64 {
    let mut v: Vec<f64> = inputs
        .depth
        .data()
        .iter()
        .zip(inputs.valid.data())
        .filter(|(d, ok)| **ok && d.is_finite() && **d > 0.0)
        .map(|(d, _)| *d)
        .collect();
    if v.is_empty() {
        return 1.0;
    }
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Column phase in `0..period` whose columns carry the largest valid depth
/// sum. Rolling the inputs by `k` moves the phase by `k` modulo `period`,
/// barring exact ties, which resolve to the smallest phase.
pub fn pyramid_phase(inputs: &OptInputs, period: usize) -> usize {
    if period <= 1 {
        return 0;
    }
    let w = inputs.depth.width();
    let mut sums = vec![Vec::new(); period];
    for (i, (d, ok)) in inputs.depth.data().iter().zip(inputs.valid.data()).enumerate() {
        if *ok && d.is_finite() {
            sums[(i % w) % period].push(*d);
        }
    }
    let totals: Vec<f64> = sums
        .iter_mut()
        .map(|v| {
            v.sort_by(f64::total_cmp);
            v.iter().sum()
        })
        .collect();
    (0..period).fold(0, |best, p| if totals[p] > totals[best] { p } else { best })
}

/// Jointly refines depth, normals and per-face scales, coarse to fine.
///
/// At the coarsest level depth and normals start from the observations and
/// all scales from 1. Each finer level starts from the upsampled result of
/// the previous one (scales carry over); its graph and confidence mask are
/// rebuilt from the inputs downsampled to that level. Fails with
/// [`OptError::Diverged`] if a level ends with a higher loss than it began.
///
/// Block averaging only commutes with horizontal rolls by multiples of the
/// block width, so the pyramid is anchored to [`pyramid_phase`]: the result
/// of rolled inputs is the rolled result.
pub fn optimize(inputs: &OptInputs, cfg: &OptConfig) -> Result<OptOutput, OptError> {
    inputs.check()?;
    let plan = level_plan(inputs.depth.height(), cfg)?;
    let depth_ref = reference_depth(inputs);
    let phase = pyramid_phase(inputs, 1 << (cfg.levels - 1));
    let anchored = inputs.roll_x(-(phase as isize));
    let inputs = &anchored;
    let mut reports = Vec::with_capacity(plan.len());
    let mut carried: Option<(ErpGrid<f64>, ErpGrid<Vector3<f64>>, [f64; FACE_COUNT])> = None;

    for lp in plan {
        let started = Instant::now();
        let level_inputs = downsample_inputs(inputs, lp.factor);
        let problem = Problem::new(level_inputs, cfg)?;
        let inputs_l = &problem.inputs;

        let mut state = match carried.take() {
            None => OptState::from_inputs(inputs_l),
            Some((depth, normals, lambda)) => {
                let mut depth = upsample(&depth, lp.height);
                let normals = upsample_column_normals(&normals, lp.height);
                for (i, d) in depth.data_mut().iter_mut().enumerate() {
                    if !(d.is_finite() && *d > 0.0) {
                        let c = inputs_l.face_id.data()[i] as usize;
                        *d = (lambda[c] * inputs_l.depth.data()[i]).max(cfg.min_value);
                    }
                }
                OptState::new(depth, normals, lambda)
            }
        };

        let initial = loss_terms(&state, &problem, cfg);
        let trace = run_level(
            &mut state,
            &problem,
            lp.iterations,
            lp.learning_rate,
            depth_ref,
            cfg,
        )?;
        let final_terms = loss_terms(&state, &problem, cfg);
        log::info!(
            "level {} ({}x{}): loss {:.6e} -> {:.6e}, lambda {:?}",
            lp.level,
            lp.width,
            lp.height,
            initial.total,
            final_terms.total,
            state.lambda
        );
        reports.push(LevelReport {
            plan: lp,
            initial,
            final_terms,
            trace,
            lambda: state.lambda,
            mask_fraction: problem.mask.count() as f64 / problem.pixel_count() as f64,
            edge_count: problem.graph.edge_count(),
            elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        if final_terms.total > initial.total {
            return Err(OptError::Diverged {
                level: lp.level,
                initial_loss: initial.total,
                final_loss: final_terms.total,
            });
        }
        carried = Some((state.depth, state.normals, state.lambda));
    }

    let (depth, normals, lambda) = carried.expect("at least one level");
    Ok(OptOutput {
        depth: depth.roll_x(phase as isize),
        normals: normals.roll_x(phase as isize),
        lambda,
        levels: reports,
        pyramid_phase: phase,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_for_1024_by_512() {
        let plan = level_plan(512, &OptConfig::default()).unwrap();
        let sizes: Vec<_> = plan.iter().map(|p| (p.width, p.height)).collect();
        assert_eq!(sizes, vec![(256, 128), (512, 256), (1024, 512)]);
        let iters: Vec<_> = plan.iter().map(|p| p.iterations).collect();
        assert_eq!(iters, vec![300, 150, 30]);
        let lrs: Vec<_> = plan.iter().map(|p| p.learning_rate).collect();
        for (a, b) in lrs.iter().zip([0.5, 0.05, 0.005]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn plan_rejects_too_many_levels() {
        let cfg = OptConfig {
            levels: 5,
            iterations: vec![1; 5],
            ..Default::default()
        };
        assert!(level_plan(8, &cfg).is_err());
    }
}
