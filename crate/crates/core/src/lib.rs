//! Blendshape rig personalization and dynamic facial textures.

pub mod dyntex;
pub mod error;
pub mod mesh;
pub mod personalize;
pub mod pipeline;
pub mod raster;
pub mod rig;
pub mod solver;

pub use error::{Error, Result};
pub use mesh::{load_mesh, one_ring_avg_edge_length, save_mesh, Mesh, VertexScalarField};
pub use personalize::{
    estimation_stage, personalize, tuning_stage, OptimConfig, SubjectScans,
};
pub use raster::{GeometryImage, Mask, Raster};
pub use rig::{
    apply_offsets, drive_secondary, synthesize_expression, BlendshapeRig, FacsSpec, OffsetSet, WeightVector,
};
pub use solver::{fit_sequence, reconstruction_error, solve_weights, FitResult};
