//! Scale-consistent omnidirectional depth from independently predicted
//! cubemap faces.
//!
//! Per-face perspective depth and normal maps are merged into an
//! equirectangular (ERP) layout, then depth, normals and six per-face scale
//! factors are refined jointly by minimizing a local-planarity objective over
//! a bilateral pixel graph, coarse to fine, with Adam.

pub mod error;
pub mod geometry;
pub mod graphopt;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod resample;

pub use error::{GeometryError, IoError, MetricsError, OptError};
pub use geometry::{CameraModel, PointCloud, SphericalCoord, UnitRay, FACE_COUNT, FACE_NAMES};
pub use graphopt::{optimize, OptConfig, OptInputs, OptOutput};
pub use grid::{ErpGrid, Grid};
pub use resample::{CubemapFaces, FaceIdMap};
