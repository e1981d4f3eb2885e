//! Depth evaluation: median scale alignment, 2D error statistics and 3D
//! point-cloud metrics (Chamfer distance, F-score, voxel IoU).

mod kdtree;

use std::collections::HashSet;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use kdtree::KdTree;

use crate::error::MetricsError;
use crate::geometry::{lift_points, PointCloud};
use crate::grid::ErpGrid;

/// Chamfer convention recorded in every report.
pub const CHAMFER_CONVENTION: &str = "sum_of_directed_means";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// F-score distance threshold, meters.
    pub fscore_tau: f64,
    /// Voxel edge length for IoU, meters.
    pub voxel_size: f64,
    /// Clouds larger than this are uniformly subsampled.
    pub max_points: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            fscore_tau: 0.1,
            voxel_size: 0.1,
            max_points: 100_000,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.fscore_tau.is_finite() && self.fscore_tau > 0.0) {
            return Err(MetricsError::InvalidConfig("fscore_tau must be positive".into()));
        }
        if !(self.voxel_size.is_finite() && self.voxel_size > 0.0) {
            return Err(MetricsError::InvalidConfig("voxel_size must be positive".into()));
        }
        if self.max_points == 0 {
            return Err(MetricsError::InvalidConfig("max_points must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics2d {
    pub abs_rel: f64,
    pub rmse: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics3d {
    /// Meters.
    pub chamfer: f64,
    /// Percent.
    pub fscore: f64,
    /// Percent.
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(flatten)]
    pub metrics_2d: Option<Metrics2d>,
    #[serde(flatten)]
    pub metrics_3d: Option<Metrics3d>,
    pub aligned_scale: f64,
    pub valid_pixel_count: usize,
    pub fscore_tau: f64,
    pub voxel_size: f64,
    pub max_points: usize,
    pub seed: u64,
    pub chamfer_convention: String,
}

fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (_, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Pixels where both maps hold finite positive depth (and `mask` allows).
pub fn valid_overlap(
    pred: &ErpGrid<f64>,
    gt: &ErpGrid<f64>,
    mask: Option<&ErpGrid<bool>>,
) -> Result<ErpGrid<bool>, MetricsError> {
    pred.same_dims(gt)?;
    if let Some(m) = mask {
        pred.same_dims(m)?;
    }
    let ok = |d: f64| d.is_finite() && d > 0.0;
    let mut out = pred.map(|_| false);
    for i in 0..pred.len() {
        out.data_mut()[i] =
            ok(pred.data()[i]) && ok(gt.data()[i]) && mask.is_none_or(|m| m.data()[i]);
    }
    Ok(out)
}

/// Rescales `pred` by `median(gt) / median(pred)` over the valid overlap.
pub fn median_align(
    pred: &ErpGrid<f64>,
    gt: &ErpGrid<f64>,
    mask: &ErpGrid<bool>,
) -> Result<(ErpGrid<f64>, f64), MetricsError> {
    pred.same_dims(gt)?;
    pred.same_dims(mask)?;
    let mut p = Vec::new();
    let mut g = Vec::new();
    for i in 0..pred.len() {
        if mask.data()[i] {
            p.push(pred.data()[i]);
            g.push(gt.data()[i]);
        }
    }
    if p.is_empty() {
        return Err(MetricsError::EmptyOverlap);
    }
    let scale = median(&mut g) / median(&mut p);
    Ok((pred.map(|d| d * scale), scale))
}

/// AbsRel, RMSE and the `1.25^k` threshold accuracies over `mask`.
pub fn metrics_2d(
    pred: &ErpGrid<f64>,
    gt: &ErpGrid<f64>,
    mask: &ErpGrid<bool>,
) -> Result<Metrics2d, MetricsError> {
    pred.same_dims(gt)?;
    pred.same_dims(mask)?;
    let mut n = 0usize;
    let (mut abs_rel, mut sq) = (0.0, 0.0);
    let mut hits = [0usize; 3];
    for i in 0..pred.len() {
        let (p, g) = (pred.data()[i], gt.data()[i]);
        if !mask.data()[i] || !(g > 0.0) {
            continue;
        }
        n += 1;
        abs_rel += (p - g).abs() / g;
        sq += (p - g) * (p - g);
        let ratio = (p / g).max(g / p);
        for (k, hit) in hits.iter_mut().enumerate() {
            if ratio < 1.25f64.powi(k as i32 + 1) {
                *hit += 1;
            }
        }
    }
    if n == 0 {
        return Err(MetricsError::EmptyOverlap);
    }
    let nf = n as f64;
    Ok(Metrics2d {
        abs_rel: abs_rel / nf,
        rmse: (sq / nf).sqrt(),
        delta1: hits[0] as f64 / nf,
        delta2: hits[1] as f64 / nf,
        delta3: hits[2] as f64 / nf,
    })
}

/// Distance from every point of `from` to its nearest neighbor in `to`.
pub fn nearest_distances(from: &[Vector3<f64>], to: &[Vector3<f64>]) -> Vec<f64> {
    let tree = KdTree::new(to);
    from.par_iter()
        .map(|p| tree.nearest_dist2(p).sqrt())
        .collect()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn non_empty(a: &PointCloud, b: &PointCloud) -> Result<(), MetricsError> {
    if a.is_empty() || b.is_empty() {
        Err(MetricsError::EmptyCloud)
    } else {
        Ok(())
    }
}

/// Mean nearest-neighbor distance from `a` to `b` plus that from `b` to `a`.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64, MetricsError> {
    non_empty(a, b)?;
    Ok(mean(&nearest_distances(&a.points, &b.points))
        + mean(&nearest_distances(&b.points, &a.points)))
}

/// Harmonic mean of precision and recall at distance `tau`, in percent.
pub fn fscore(a: &PointCloud, b: &PointCloud, tau: f64) -> Result<f64, MetricsError> {
    non_empty(a, b)?;
    let frac = |d: Vec<f64>| d.iter().filter(|v| **v < tau).count() as f64 / d.len() as f64;
    let precision = frac(nearest_distances(&a.points, &b.points));
    let recall = frac(nearest_distances(&b.points, &a.points));
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(200.0 * precision * recall / (precision + recall))
}

fn voxels(cloud: &PointCloud, voxel: f64) -> HashSet<[i64; 3]> {
    cloud
        .points
        .iter()
        .map(|p| {
            [
                (p.x / voxel).floor() as i64,
                (p.y / voxel).floor() as i64,
                (p.z / voxel).floor() as i64,
            ]
        })
        .collect()
}

/// Intersection over union of occupied voxels (origin-anchored grid), percent.
pub fn voxel_iou(a: &PointCloud, b: &PointCloud, voxel: f64) -> Result<f64, MetricsError> {
    non_empty(a, b)?;
    let va = voxels(a, voxel);
    let vb = voxels(b, voxel);
    let inter = va.intersection(&vb).count();
    let union = va.len() + vb.len() - inter;
    Ok(100.0 * inter as f64 / union as f64)
}

/// Seeded uniform subsample of at most `max_points`, preserving order.
pub fn subsample(cloud: &PointCloud, max_points: usize, seed: u64) -> PointCloud {
    if cloud.len() <= max_points {
        return cloud.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, cloud.len(), max_points).into_vec();
    idx.sort_unstable();
    PointCloud {
        points: idx.iter().map(|&i| cloud.points[i]).collect(),
        colors: cloud
            .colors
            .as_ref()
            .map(|c| idx.iter().map(|&i| c[i]).collect()),
    }
}

/// Chamfer, F-score and IoU after seeded subsampling.
pub fn metrics_3d(
    pred: &PointCloud,
    gt: &PointCloud,
    cfg: &EvalConfig,
) -> Result<Metrics3d, MetricsError> {
    cfg.validate()?;
    let a = subsample(pred, cfg.max_points, cfg.seed);
    let b = subsample(gt, cfg.max_points, cfg.seed.wrapping_add(1));
    Ok(Metrics3d {
        chamfer: chamfer(&a, &b)?,
        fscore: fscore(&a, &b, cfg.fscore_tau)?,
        iou: voxel_iou(&a, &b, cfg.voxel_size)?,
    })
}

/// Full protocol: median-align `pred` to `gt`, then compute the requested
/// metric groups on the aligned prediction.
pub fn evaluate(
    pred: &ErpGrid<f64>,
    gt: &ErpGrid<f64>,
    mask: Option<&ErpGrid<bool>>,
    cfg: &EvalConfig,
    with_2d: bool,
    with_3d: bool,
) -> Result<MetricReport, MetricsError> {
    cfg.validate()?;
    let valid = valid_overlap(pred, gt, mask)?;
    let (aligned, scale) = median_align(pred, gt, &valid)?;
    let metrics_2d = if with_2d {
        Some(metrics_2d(&aligned, gt, &valid)?)
    } else {
        None
    };
    let metrics_3d = if with_3d {
        let a = lift_points(&aligned, Some(&valid))?;
        let b = lift_points(gt, Some(&valid))?;
        Some(metrics_3d(&a, &b, cfg)?)
    } else {
        None
    };
    Ok(MetricReport {
        metrics_2d,
        metrics_3d,
        aligned_scale: scale,
        valid_pixel_count: valid.data().iter().filter(|v| **v).count(),
        fscore_tau: cfg.fscore_tau,
        voxel_size: cfg.voxel_size,
        max_points: cfg.max_points,
        seed: cfg.seed,
        chamfer_convention: CHAMFER_CONVENTION.to_string(),
    })
}
