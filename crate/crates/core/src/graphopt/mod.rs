//! Joint refinement of depth, normals and per-face scales under a
//! graph-based local planarity objective.

mod adam;
mod config;
mod graph;
mod loss;
mod optimize;

pub use adam::{adam_step, scaled_step};
pub use config::{OptConfig, OPT_CONFIG_KEYS};
pub use graph::{build_graph, NeighborGraph};
pub use loss::{
    charbonnier, charbonnier_grad, compute_mask, gradients, loss_fidelity, loss_planar,
    loss_terms, pixel_loss, total_loss, ConfidenceMask, Gradients, LossTerms, Moments, OptInputs, OptState,
    Problem,
};
pub use optimize::{
    downsample_inputs, level_plan, optimize, pyramid_phase, reference_depth, run_level, LevelPlan, LevelReport, OptOutput,
};
