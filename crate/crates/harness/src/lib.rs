//! Synthetic scenes, ingestion, pipeline orchestration, evaluation and the
//! `seqgc` command-line tool.

pub mod cli;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod pipeline;
pub mod synth;

use rayon::prelude::*;
use seqgc::FitConfig;

pub use error::{HarnessError, HarnessResult};
pub use eval::{evaluate_homographies, evaluate_planes, EvalReport, ModelEval};
pub use pipeline::{run_homographies, run_planes, HomographyFitOutput, Mode, PlaneFitOutput};
pub use synth::{synth_bundle, synth_homographies, synth_planes, BundleSpec, PlaneSceneSpec, SceneSpec, Truth};

/// Generates, fits and scores independent plane scenes in parallel. Each
/// scene is fitted with its own spec seed.
pub fn run_plane_batch(specs: &[PlaneSceneSpec], cfg: &FitConfig, mode: Mode) -> HarnessResult<Vec<(PlaneFitOutput, EvalReport)>> {
    specs
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let scene = synth_planes(spec).map_err(|e| e.context(format!("scene {i}")))?;
            let out = run_planes(&scene.points, cfg, mode, spec.seed, false).map_err(|e| e.context(format!("scene {i}")))?;
            let report = evaluate_planes(&out, &scene.truth())?;
            Ok((out, report))
        })
        .collect()
}
