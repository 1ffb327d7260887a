//! Plane-map refinement: culling of non-planar points, merging of
//! near-duplicate planes, expansion, projection and joint refinement of
//! cameras, points and planes.

mod bundle;
mod landmarks;
mod refine;

pub use bundle::{Bundle, Intrinsics, Observation};
pub use landmarks::{
    cull_nonplanar, expand_plane, merge_planes, merge_sweep, project_onto_plane, remove_weak, should_merge, MergeOutcome,
    PlaneLandmark,
};
pub use refine::{
    joint_refine, plane_jacobians, plane_residual, refine_structure, reprojection_jacobians, reprojection_residual,
    residual_rms, RefineReport, PIXEL_SCALE,
};
