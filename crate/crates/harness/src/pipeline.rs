//! Orchestration of proposal, fitting and map maintenance for one scene.

use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use seqgc::estimators::fit_plane_lsq;
use seqgc::planemap::{cull_nonplanar, expand_plane, merge_sweep, remove_weak, PlaneLandmark};
use seqgc::{
    fit_sequential, propose_models, Correspondence, Family, FitConfig, FitResult, FitStatus, HomographyFamily, MapPoint,
    PlaneFamily, SegmentationPrior,
};

use crate::error::{HarnessError, HarnessResult};
use crate::synth::row_major;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Sequential graph-cut RANSAC followed by map maintenance.
    Gc,
    /// The same with the spatial term and local optimization switched off.
    Seq,
    /// One least-squares plane per mask instance.
    Lsq,
}

impl Mode {
    pub fn parse(s: &str) -> HarnessResult<Self> {
        match s {
            "gc" => Ok(Mode::Gc),
            "seq" => Ok(Mode::Seq),
            "lsq" => Ok(Mode::Lsq),
            _ => Err(HarnessError::Usage(format!("unknown mode `{s}` (expected gc, seq or lsq)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub ms: f64,
}

struct Stopwatch {
    enabled: bool,
    stages: Vec<StageTiming>,
}

impl Stopwatch {
    fn new(enabled: bool) -> Self {
        Self {
            enabled,
            stages: Vec::new(),
        }
    }

    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        if self.enabled {
            self.stages.push(StageTiming {
                stage: stage.to_string(),
                ms: start.elapsed().as_secs_f64() * 1e3,
            });
        }
        out
    }

    fn finish(self) -> Option<Vec<StageTiming>> {
        self.enabled.then_some(self.stages)
    }
}

/// Outcome of fitting one proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalReport {
    /// Instance label in the input mask.
    pub label: u32,
    pub points: usize,
    pub status: FitStatus,
    pub support: usize,
    /// `None` when no model reached the inlier threshold.
    pub residual: Option<f64>,
    pub iterations: usize,
    pub lo_invocations: usize,
}

impl ProposalReport {
    fn new<M>(label: u32, r: &FitResult<M>) -> Self {
        Self {
            label,
            points: r.point_ids.len(),
            status: r.status,
            support: r.support,
            residual: r.residual.is_finite().then_some(r.residual),
            iterations: r.iterations,
            lo_invocations: r.lo_invocations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneModel {
    pub id: usize,
    /// Mask label of the proposal the plane came from.
    pub label: u32,
    pub normal: [f64; 3],
    pub offset: f64,
    pub support: usize,
    /// Mean point-plane distance over the inliers.
    pub residual: f64,
    /// Point ids.
    pub inliers: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneFitOutput {
    pub mode: Mode,
    pub seed: u64,
    pub models: Vec<PlaneModel>,
    pub proposals: Vec<ProposalReport>,
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stages: Option<Vec<StageTiming>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomographyModel {
    pub id: usize,
    pub label: u32,
    /// Row-major, normalized to unit Frobenius norm.
    pub matrix: [f64; 9],
    pub support: usize,
    /// Mean symmetric transfer error over the inliers (px).
    pub residual: f64,
    pub inliers: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomographyFitOutput {
    pub seed: u64,
    pub models: Vec<HomographyModel>,
    pub proposals: Vec<ProposalReport>,
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stages: Option<Vec<StageTiming>>,
}

/// Dense prior plus the original label of every dense id.
fn prior_of(labels: &[Option<u32>]) -> (SegmentationPrior, Vec<u32>) {
    let originals: Vec<u32> = labels.iter().flatten().copied().collect::<BTreeSet<_>>().into_iter().collect();
    (SegmentationPrior::from_sparse(labels), originals)
}

/// Configuration of a mode: `seq` disables the spatial term and local
/// optimization.
pub fn mode_config(cfg: &FitConfig, mode: Mode) -> FitConfig {
    match mode {
        Mode::Seq => FitConfig {
            lambda_prime: 0.0,
            local_optimization: false,
            ..cfg.clone()
        },
        _ => cfg.clone(),
    }
}

fn plane_model(id: usize, label: u32, lm: &PlaneLandmark, points: &[MapPoint]) -> PlaneModel {
    let residual = if lm.points.is_empty() {
        0.0
    } else {
        lm.points.iter().map(|&i| lm.plane.distance(&points[i].position)).sum::<f64>() / lm.points.len() as f64
    };
    PlaneModel {
        id,
        label,
        normal: [lm.plane.normal.x, lm.plane.normal.y, lm.plane.normal.z],
        offset: lm.plane.offset,
        support: lm.points.len(),
        residual,
        inliers: lm.points.iter().map(|&i| points[i].id).collect(),
    }
}

/// Fits planes to `points` using their prior labels.
pub fn run_planes(points: &[MapPoint], cfg: &FitConfig, mode: Mode, seed: u64, timings: bool) -> HarnessResult<PlaneFitOutput> {
    cfg.validate()?;
    let mut clock = Stopwatch::new(timings);
    let labels: Vec<Option<u32>> = points.iter().map(|p| p.prior_label).collect();
    let (prior, originals) = prior_of(&labels);
    let proposals = clock.time("propose", || propose_models(&prior, Family::Plane));
    let mut notes = Vec::new();
    if proposals.is_empty() {
        notes.push("no proposals: the segmentation mask labels no points".to_string());
    }

    if mode == Mode::Lsq {
        let mut models = Vec::new();
        let mut reports = Vec::new();
        clock.time("fit", || {
            for p in &proposals {
                let label = originals[p.id];
                let data: Vec<&MapPoint> = p.points.iter().map(|&i| &points[i]).collect();
                let (status, support) = match fit_plane_lsq(&data) {
                    Ok(plane) => {
                        let lm = PlaneLandmark::new(p.id, plane, p.points.clone());
                        models.push(plane_model(models.len(), label, &lm, points));
                        (FitStatus::Accepted, p.points.len())
                    }
                    Err(e) => {
                        notes.push(format!("mask label {label}: {e}"));
                        (FitStatus::Degenerate, 0)
                    }
                };
                reports.push(ProposalReport {
                    label,
                    points: p.points.len(),
                    status,
                    support,
                    residual: None,
                    iterations: 0,
                    lo_invocations: 0,
                });
            }
        });
        for (r, m) in reports.iter_mut().filter(|r| r.status == FitStatus::Accepted).zip(&models) {
            r.residual = Some(m.residual);
        }
        return Ok(PlaneFitOutput {
            mode,
            seed,
            models,
            proposals: reports,
            notes,
            stages: clock.finish(),
        });
    }

    let cfg = mode_config(cfg, mode);
    let results = clock
        .time("fit", || fit_sequential(&PlaneFamily, points, &proposals, &cfg, seed))
        .map_err(|e| HarnessError::from(e).context("fitting planes"))?;
    let reports: Vec<ProposalReport> = results.iter().map(|r| ProposalReport::new(originals[r.proposal_id], r)).collect();

    // accepted inlier sets are disjoint; weak planes keep only unclaimed points
    let mut taken = vec![false; points.len()];
    let mut map = Vec::new();
    let mut sources = Vec::new();
    for pass in [FitStatus::Accepted, FitStatus::RejectedWeak] {
        for r in results.iter().filter(|r| r.status == pass) {
            let Some(plane) = r.model else { continue };
            let ids: Vec<usize> = r.inlier_ids().filter(|&i| !taken[i]).collect();
            for &i in &ids {
                taken[i] = true;
            }
            sources.push(originals[r.proposal_id]);
            map.push(PlaneLandmark::new(map.len(), plane, ids));
        }
    }
    for r in &results {
        if r.status != FitStatus::Accepted && r.status != FitStatus::RejectedWeak {
            notes.push(format!(
                "mask label {}: {}",
                originals[r.proposal_id],
                match r.status {
                    FitStatus::Degenerate => "degenerate proposal",
                    _ => "residual above threshold",
                }
            ));
        }
    }

    let culled = clock.time("cull", || cull_nonplanar(&mut map, points, cfg.eps_d));
    let merges = clock.time("merge", || merge_sweep(&mut map, points, &cfg, seed));
    let expanded = clock.time("expand", || {
        let mut assigned = vec![false; points.len()];
        for lm in map.iter().filter(|l| l.alive) {
            for &i in &lm.points {
                assigned[i] = true;
            }
        }
        map.iter_mut().map(|lm| expand_plane(lm, points, &mut assigned, cfg.eps_d)).sum::<usize>()
    });
    let removed = clock.time("remove_weak", || remove_weak(&mut map, cfg.min_plane_support));
    if !culled.is_empty() {
        notes.push(format!("culled {} non-planar associations", culled.len()));
    }
    if merges > 0 {
        notes.push(format!("merged {merges} plane pairs"));
    }
    if expanded > 0 {
        notes.push(format!("expansion associated {expanded} points"));
    }
    if !removed.is_empty() {
        notes.push(format!("removed {} weak planes", removed.len()));
    }
    let models = map
        .iter()
        .zip(&sources)
        .filter(|(lm, _)| lm.alive)
        .enumerate()
        .map(|(id, (lm, &label))| plane_model(id, label, lm, points))
        .collect();
    Ok(PlaneFitOutput {
        mode,
        seed,
        models,
        proposals: reports,
        notes,
        stages: clock.finish(),
    })
}

/// Fits homographies to `matches` using their prior labels.
pub fn run_homographies(
    matches: &[Correspondence],
    image_size: (f64, f64),
    cfg: &FitConfig,
    seed: u64,
    timings: bool,
) -> HarnessResult<HomographyFitOutput> {
    cfg.validate()?;
    let mut clock = Stopwatch::new(timings);
    let labels: Vec<Option<u32>> = matches.iter().map(|c| c.prior_label).collect();
    let (prior, originals) = prior_of(&labels);
    let proposals = clock.time("propose", || propose_models(&prior, Family::Homography));
    let mut notes = Vec::new();
    if proposals.is_empty() {
        notes.push("no proposals: the segmentation mask labels no correspondences".to_string());
    }
    let family = HomographyFamily { image_size };
    let results = clock
        .time("fit", || fit_sequential(&family, matches, &proposals, cfg, seed))
        .map_err(|e| HarnessError::from(e).context("fitting homographies"))?;
    let mut models = Vec::new();
    for r in &results {
        let label = originals[r.proposal_id];
        match (r.status, &r.model) {
            (FitStatus::Accepted, Some(h)) => models.push(HomographyModel {
                id: models.len(),
                label,
                matrix: row_major(h.matrix()),
                support: r.support,
                residual: r.residual,
                inliers: r.inlier_ids().map(|i| matches[i].id).collect(),
            }),
            (status, _) => notes.push(format!("mask label {label}: {}", serde_json::to_string(&status)?.trim_matches('"'))),
        }
    }
    Ok(HomographyFitOutput {
        seed,
        models,
        proposals: results.iter().map(|r| ProposalReport::new(originals[r.proposal_id], r)).collect(),
        notes,
        stages: clock.finish(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_planes, two_plane_spec};
    use nalgebra::Vector3;
    use seqgc::Plane;

    fn angle(m: &PlaneModel, truth: &Plane) -> f64 {
        Plane::new(Vector3::from(m.normal), m.offset).unwrap().normal_angle_deg(truth)
    }

    #[test]
    fn clean_scene_all_modes_recover_planes() {
        let scene = synth_planes(&two_plane_spec(300, 0.002, 0.0, 0.0, 11)).unwrap();
        for mode in [Mode::Gc, Mode::Seq, Mode::Lsq] {
            let out = run_planes(&scene.points, &FitConfig::default(), mode, 1, false).unwrap();
            assert_eq!(out.models.len(), 2, "{mode:?}: {:?}", out.notes);
            for (m, truth) in out.models.iter().zip(&scene.planes) {
                let a = angle(m, &scene.planes[m.label as usize]);
                assert!(a < 0.5, "{mode:?}: {a} ({truth:?})");
            }
        }
    }

    #[test]
    fn empty_prior_gives_no_models() {
        let mut scene = synth_planes(&two_plane_spec(50, 0.0, 0.0, 0.0, 2)).unwrap();
        for p in scene.points.iter_mut() {
            p.prior_label = None;
        }
        let out = run_planes(&scene.points, &FitConfig::default(), Mode::Gc, 0, false).unwrap();
        assert!(out.models.is_empty());
        assert!(out.notes.iter().any(|n| n.contains("no proposals")));
    }

    #[test]
    fn models_are_disjoint_and_timings_optional() {
        let scene = synth_planes(&two_plane_spec(300, 0.01, 0.1, 0.3, 4)).unwrap();
        let out = run_planes(&scene.points, &FitConfig::default(), Mode::Gc, 3, false).unwrap();
        assert!(out.stages.is_none());
        let mut seen = BTreeSet::new();
        for m in &out.models {
            for i in &m.inliers {
                assert!(seen.insert(*i));
            }
        }
        let timed = run_planes(&scene.points, &FitConfig::default(), Mode::Gc, 3, true).unwrap();
        assert_eq!(timed.models, out.models);
        assert!(timed.stages.is_some());
    }

    #[test]
    fn unknown_mode_is_usage() {
        assert_eq!(Mode::parse("ransac").unwrap_err().exit_code(), 1);
    }
}
