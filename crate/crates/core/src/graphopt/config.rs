use serde::{Deserialize, Serialize};

use crate::error::OptError;

/// Hyperparameters for the graph optimizer. Defaults reproduce the published
/// settings; the remaining knobs are local implementation choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptConfig {
    /// Weight of the normal-smoothness term inside the planar loss.
    pub alpha: f64,
    /// Patch-intensity bandwidth of the edge weights.
    pub sigma_int: f64,
    /// Spatial bandwidth of the edge weights, in pixels.
    pub sigma_spa: f64,
    pub eta_p: f64,
    pub eta_d: f64,
    pub eta_n: f64,
    /// Number of pyramid levels.
    pub levels: usize,
    /// Iterations per level, coarsest level first.
    pub iterations: Vec<usize>,
    /// Learning rate at level `l` is `lr_scale * lr_base^(l - levels)`.
    pub lr_scale: f64,
    pub lr_base: f64,
    /// Smoothing of the absolute value, `sqrt(x^2 + eps^2)`.
    pub charbonnier_eps: f64,
    /// Neighbors lie in a `(2r+1)^2` window around each pixel.
    pub window_radius: usize,
    /// Side of the square intensity patch compared by the edge weights (odd).
    pub patch_size: usize,
    /// Minimum cosine between input and depth-derived normals for a pixel to
    /// take part in the fidelity terms.
    pub mask_threshold: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Lower bound enforced on depth and per-face scales after every step.
    pub min_value: f64,
    /// Adam steps are taken in units of `step_unit` times a reference
    /// magnitude: the median valid input depth for depth, 1 for normals and
    /// scales.
    pub step_unit: f64,
    /// Multiplier on the step size of the per-face scales.
    pub scale_rate: f64,
    /// Optimize depth as `lambda_c * x` so a scale update moves every point
    /// of its face together.
    pub couple_scales: bool,
    /// Rescale the per-face scales to unit geometric mean after every step.
    pub fix_gauge: bool,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            sigma_int: 0.07,
            sigma_spa: 3.0,
            eta_p: 50.0,
            eta_d: 0.5,
            eta_n: 10.0,
            levels: 3,
            iterations: vec![300, 150, 30],
            lr_scale: 5.0,
            lr_base: 10.0,
            charbonnier_eps: 1e-6,
            window_radius: 2,
            patch_size: 3,
            mask_threshold: 0.7,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            min_value: 1e-4,
            step_unit: 0.01,
            scale_rate: 10.0,
            couple_scales: true,
            fix_gauge: true,
        }
    }
}

/// Field names accepted in configuration documents.
pub const OPT_CONFIG_KEYS: &[&str] = &[
    "alpha",
    "sigma_int",
    "sigma_spa",
    "eta_p",
    "eta_d",
    "eta_n",
    "levels",
    "iterations",
    "lr_scale",
    "lr_base",
    "charbonnier_eps",
    "window_radius",
    "patch_size",
    "mask_threshold",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "min_value",
    "step_unit",
    "scale_rate",
    "couple_scales",
    "fix_gauge",
];

impl OptConfig {
    /// Learning rate for pyramid level `level` (0 is full resolution).
    pub fn learning_rate(&self, level: usize) -> f64 {
        self.lr_scale * self.lr_base.powi(level as i32 - self.levels as i32)
    }

    /// Iteration count for pyramid level `level` (0 is full resolution).
    pub fn iterations_at(&self, level: usize) -> usize {
        self.iterations[self.levels - 1 - level]
    }

    pub fn validate(&self) -> Result<(), OptError> {
        let bad = |m: String| Err(OptError::InvalidConfig(m));
        let positive = [
            ("sigma_int", self.sigma_int),
            ("sigma_spa", self.sigma_spa),
            ("lr_scale", self.lr_scale),
            ("lr_base", self.lr_base),
            ("adam_eps", self.adam_eps),
            ("min_value", self.min_value),
            ("step_unit", self.step_unit),
            ("scale_rate", self.scale_rate),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        let non_negative = [
            ("alpha", self.alpha),
            ("eta_p", self.eta_p),
            ("eta_d", self.eta_d),
            ("eta_n", self.eta_n),
            ("charbonnier_eps", self.charbonnier_eps),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if self.levels == 0 {
            return bad("levels must be at least 1".into());
        }
        if self.iterations.len() != self.levels {
            return bad(format!(
                "iterations lists {} levels but levels = {}",
                self.iterations.len(),
                self.levels
            ));
        }
        if self.window_radius == 0 {
            return bad("window_radius must be at least 1".into());
        }
        if self.patch_size.is_multiple_of(2) {
            return bad(format!("patch_size must be odd, got {}", self.patch_size));
        }
        if !(-1.0..=1.0).contains(&self.mask_threshold) {
            return bad(format!(
                "mask_threshold must lie in [-1, 1], got {}",
                self.mask_threshold
            ));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        Ok(())
    }
}
