//! Sequential Graph-Cut RANSAC for homographies and 3-D planes, with plane
//! map refinement.
//!
//! Points carry optional instance labels from an external segmenter. Every
//! instance becomes a model proposal; [`seqfit::fit_sequential`] fits them
//! one by one with a graph-cut locally optimized RANSAC that corrects the
//! labels it was seeded with, and [`planemap`] cleans the resulting plane
//! map and jointly refines it with the cameras.

pub mod config;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod mincut;
pub mod neighbors;
pub mod planemap;
pub mod seqfit;

pub use config::{scale_thresholds_mono, scale_thresholds_rgbd, FitConfig};
pub use error::{Error, Result};
pub use geometry::{
    plane_to_spherical, spherical_to_plane, Correspondence, Homography, Labeling, MapPoint, Plane, SegmentationPrior,
    SphericalPlane,
};
pub use seqfit::{
    baseline_ransac, fit_one, fit_sequential, propose_models, sequential_baseline, Family, FitResult, FitStatus,
    HomographyFamily, ModelFamily, ModelProposal, PlaneFamily,
};
