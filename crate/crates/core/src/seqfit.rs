//! Sequential Graph-Cut RANSAC.
//!
//! Each segmentation instance seeds one proposal. A proposal is fitted by an
//! outer loop that re-enters an adaptive GC-RANSAC inner loop; new
//! so-far-the-best models are polished by a graph-cut local optimization
//! that alternates min-cut relabeling with least-squares refits on random
//! `7m` inlier subsets. Proposals are processed largest first and the
//! inliers of every accepted model are withheld from later proposals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::FitConfig;
use crate::error::{domain, Result};
use crate::estimators::{
    fit_homography_lsq, fit_homography_minimal, fit_plane_lsq, fit_plane_minimal, mean_inlier_residual,
    sample_uniform, LocalizedSampler, MinimalSample, Residual,
};
use crate::geometry::{Correspondence, Homography, Labeling, MapPoint, Plane, SegmentationPrior};
use crate::mincut::{build_problem_graph, min_cut};
use crate::neighbors::{grid_graph, radius_graph, GridIndex, NeighborGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Homography,
    Plane,
}

impl Family {
    pub fn sample_size(self) -> usize {
        match self {
            Family::Homography => 4,
            Family::Plane => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelProposal {
    pub id: usize,
    pub family: Family,
    /// Indices into the full point list.
    pub points: Vec<usize>,
    /// `true` when the instance has fewer than `m` points.
    pub degenerate: bool,
}

/// One proposal per instance id, carrying exactly the points with that id.
pub fn propose_models(prior: &SegmentationPrior, family: Family) -> Vec<ModelProposal> {
    let mut groups = vec![Vec::new(); prior.instance_count()];
    for (i, label) in prior.labels().iter().enumerate() {
        if let Some(l) = label {
            groups[*l as usize].push(i);
        }
    }
    groups
        .into_iter()
        .enumerate()
        .map(|(id, points)| ModelProposal {
            id,
            family,
            degenerate: points.len() < family.sample_size(),
            points,
        })
        .collect()
}

/// Thresholds and weights one model family reads from the configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyParams {
    pub inlier_threshold: f64,
    pub residual_threshold: f64,
    pub lambda: f64,
    pub min_support: Option<usize>,
}

pub enum Sampler {
    Uniform { pool: usize },
    Localized(LocalizedSampler),
}

impl Sampler {
    pub fn sample<R: Rng + ?Sized>(&mut self, m: usize, rng: &mut R) -> Result<MinimalSample> {
        match self {
            Sampler::Uniform { pool } => sample_uniform(*pool, m, rng),
            Sampler::Localized(s) => s.sample(m, rng),
        }
    }
}

/// Everything the driver needs to know about a model type.
pub trait ModelFamily {
    type Datum: Clone;
    type Model: Clone + Residual<Datum = Self::Datum>;
    const SAMPLE_SIZE: usize;
    const KIND: Family;

    fn fit_minimal(&self, sample: &[&Self::Datum]) -> Result<Self::Model>;
    fn fit_lsq(&self, inliers: &[&Self::Datum]) -> Result<Self::Model>;
    fn params(&self, cfg: &FitConfig) -> FamilyParams;
    fn neighbor_graph(&self, data: &[Self::Datum], cfg: &FitConfig) -> Result<NeighborGraph>;
    fn sampler(&self, data: &[Self::Datum], cfg: &FitConfig) -> Result<Sampler>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PlaneFamily;

impl ModelFamily for PlaneFamily {
    type Datum = MapPoint;
    type Model = Plane;
    const SAMPLE_SIZE: usize = 3;
    const KIND: Family = Family::Plane;

    fn fit_minimal(&self, sample: &[&MapPoint]) -> Result<Plane> {
        fit_plane_minimal(sample)
    }

    fn fit_lsq(&self, inliers: &[&MapPoint]) -> Result<Plane> {
        fit_plane_lsq(inliers)
    }

    fn params(&self, cfg: &FitConfig) -> FamilyParams {
        FamilyParams {
            inlier_threshold: cfg.eps_d,
            residual_threshold: cfg.eps_pi,
            lambda: cfg.lambda_prime,
            min_support: Some(cfg.min_plane_support),
        }
    }

    fn neighbor_graph(&self, data: &[MapPoint], cfg: &FitConfig) -> Result<NeighborGraph> {
        radius_graph(data, cfg.radius, cfg.pairwise_weight)
    }

    fn sampler(&self, data: &[MapPoint], _cfg: &FitConfig) -> Result<Sampler> {
        Ok(Sampler::Uniform { pool: data.len() })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HomographyFamily {
    pub image_size: (f64, f64),
}

impl ModelFamily for HomographyFamily {
    type Datum = Correspondence;
    type Model = Homography;
    const SAMPLE_SIZE: usize = 4;
    const KIND: Family = Family::Homography;

    fn fit_minimal(&self, sample: &[&Correspondence]) -> Result<Homography> {
        fit_homography_minimal(sample)
    }

    fn fit_lsq(&self, inliers: &[&Correspondence]) -> Result<Homography> {
        fit_homography_lsq(inliers)
    }

    fn params(&self, cfg: &FitConfig) -> FamilyParams {
        FamilyParams {
            inlier_threshold: cfg.ste_threshold,
            residual_threshold: cfg.homography_residual_threshold,
            lambda: cfg.lambda,
            min_support: None,
        }
    }

    fn neighbor_graph(&self, data: &[Correspondence], cfg: &FitConfig) -> Result<NeighborGraph> {
        grid_graph(data, self.image_size, cfg.grid_cells_per_axis, cfg.pairwise_weight)
    }

    fn sampler(&self, data: &[Correspondence], cfg: &FitConfig) -> Result<Sampler> {
        let refs: Vec<&Correspondence> = data.iter().collect();
        let index = GridIndex::new(&refs, self.image_size, cfg.grid_cells_per_axis)?;
        Ok(Sampler::Localized(LocalizedSampler::new(index)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Accepted,
    RejectedWeak,
    RejectedResidual,
    Degenerate,
}

/// Bookkeeping of one `fit_one` run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    /// `e_L*` after every pass of the inner loop.
    pub best_residuals: Vec<f64>,
    /// Support sequence of every local-optimization run, starting with the
    /// support of the model it was seeded with.
    pub lo_supports: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult<M> {
    pub proposal_id: usize,
    pub model: Option<M>,
    /// Indices into the full point list, aligned with `labeling`.
    pub point_ids: Vec<usize>,
    pub labeling: Labeling,
    pub support: usize,
    pub residual: f64,
    pub iterations: usize,
    pub lo_invocations: usize,
    pub status: FitStatus,
    pub trace: FitTrace,
}

impl<M> FitResult<M> {
    fn degenerate(proposal_id: usize, point_ids: Vec<usize>) -> Self {
        Self {
            proposal_id,
            model: None,
            labeling: Labeling {
                model_id: proposal_id,
                inliers: vec![false; point_ids.len()],
            },
            point_ids,
            support: 0,
            residual: f64::INFINITY,
            iterations: 0,
            lo_invocations: 0,
            status: FitStatus::Degenerate,
            trace: FitTrace::default(),
        }
    }

    /// Full-list indices of the inliers.
    pub fn inlier_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.point_ids
            .iter()
            .zip(&self.labeling.inliers)
            .filter(|(_, l)| **l)
            .map(|(i, _)| *i)
    }
}

/// Seed for one proposal derived from the run seed.
pub fn proposal_seed(seed: u64, proposal_id: usize) -> u64 {
    seed ^ (proposal_id as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Confidence-based iteration count, clamped to the configured bounds.
pub fn adaptive_iterations(support: usize, total: usize, m: usize, cfg: &FitConfig) -> usize {
    let (lo, hi) = (cfg.min_gc_iterations, cfg.max_gc_iterations);
    if total == 0 {
        return hi;
    }
    let p_good = (support as f64 / total as f64).powi(m as i32);
    let n = if p_good >= 1.0 {
        0.0
    } else if p_good <= 0.0 {
        f64::INFINITY
    } else {
        (1.0 - cfg.confidence).ln() / (1.0 - p_good).ln()
    };
    if n.is_finite() {
        (n.ceil() as usize).clamp(lo, hi)
    } else {
        hi
    }
}

struct Scored<M> {
    model: M,
    support: usize,
    residual: f64,
}

fn score<M: Residual>(model: M, data: &[M::Datum], threshold: f64) -> Scored<M> {
    let residuals: Vec<f64> = data.iter().map(|d| model.residual(d)).collect();
    let support = residuals.iter().filter(|r| **r < threshold).count();
    let residual = mean_inlier_residual(residuals.into_iter(), threshold);
    Scored {
        model,
        support,
        residual,
    }
}

fn beats<M>(candidate: &Scored<M>, best: &Option<Scored<M>>) -> bool {
    match best {
        None => true,
        Some(b) => candidate.support > b.support || (candidate.support == b.support && candidate.residual < b.residual),
    }
}

fn inliers_of<'a, F: ModelFamily>(model: &F::Model, data: &'a [F::Datum], threshold: f64) -> Vec<&'a F::Datum> {
    data.iter().filter(|d| model.residual(d) < threshold).collect()
}

/// Graph-cut local optimization started from `seed_model`. Returns the
/// improved model, if any, and the support sequence.
fn local_optimization<F: ModelFamily, R: Rng>(
    family: &F,
    data: &[F::Datum],
    graph: &NeighborGraph,
    params: &FamilyParams,
    seed_model: &Scored<F::Model>,
    rng: &mut R,
) -> (Option<Scored<F::Model>>, Vec<usize>) {
    let m = F::SAMPLE_SIZE;
    let mut best: Option<Scored<F::Model>> = None;
    let mut supports = vec![seed_model.support];
    loop {
        let current = best.as_ref().map_or(&seed_model.model, |b| &b.model);
        let residuals: Vec<f64> = data.iter().map(|d| current.residual(d)).collect();
        let Ok(problem) = build_problem_graph(&residuals, params.inlier_threshold, graph, params.lambda) else {
            break;
        };
        let cut = min_cut(&problem);
        let cut_inliers: Vec<usize> = (0..data.len()).filter(|&i| cut.labels[i]).collect();
        if cut_inliers.len() < m {
            break;
        }
        let take = (7 * m).min(cut_inliers.len());
        let subset: Vec<&F::Datum> = rand::seq::index::sample(rng, cut_inliers.len(), take)
            .iter()
            .map(|k| &data[cut_inliers[k]])
            .collect();
        let Ok(model) = family.fit_lsq(&subset) else {
            break;
        };
        let scored = score(model, data, params.inlier_threshold);
        let current_support = best.as_ref().map_or(seed_model.support, |b| b.support);
        if scored.support > current_support {
            supports.push(scored.support);
            best = Some(scored);
        } else {
            break;
        }
    }
    (best, supports)
}

#[allow(clippy::too_many_arguments)]
fn finish<F: ModelFamily>(
    data: &[F::Datum],
    point_ids: Vec<usize>,
    proposal_id: usize,
    params: &FamilyParams,
    model: Option<F::Model>,
    iterations: usize,
    lo_invocations: usize,
    trace: FitTrace,
) -> FitResult<F::Model> {
    let Some(model) = model else {
        let mut r = FitResult::degenerate(proposal_id, point_ids);
        r.iterations = iterations;
        r.trace = trace;
        return r;
    };
    let residuals: Vec<f64> = data.iter().map(|d| model.residual(d)).collect();
    let inliers: Vec<bool> = residuals.iter().map(|r| *r < params.inlier_threshold).collect();
    let support = inliers.iter().filter(|b| **b).count();
    let residual = if support < F::SAMPLE_SIZE {
        f64::INFINITY
    } else {
        mean_inlier_residual(residuals.into_iter(), params.inlier_threshold)
    };
    let status = if !(residual <= params.residual_threshold) {
        FitStatus::RejectedResidual
    } else if params.min_support.is_some_and(|min| support < min) {
        FitStatus::RejectedWeak
    } else {
        FitStatus::Accepted
    };
    FitResult {
        proposal_id,
        model: Some(model),
        point_ids,
        labeling: Labeling {
            model_id: proposal_id,
            inliers,
        },
        support,
        residual,
        iterations,
        lo_invocations,
        status,
        trace,
    }
}

/// Fits one proposal. `data` holds the proposal's points and `graph` is the
/// neighborhood graph over them; `point_ids` maps them back to the full
/// point list.
pub fn fit_one<F: ModelFamily>(
    family: &F,
    proposal_id: usize,
    data: &[F::Datum],
    point_ids: Vec<usize>,
    graph: &NeighborGraph,
    cfg: &FitConfig,
    seed: u64,
) -> Result<FitResult<F::Model>> {
    check_sizes(data.len(), &point_ids, Some(graph))?;
    let m = F::SAMPLE_SIZE;
    if data.len() < m {
        return Ok(FitResult::degenerate(proposal_id, point_ids));
    }
    let params = family.params(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sampler = family.sampler(data, cfg)?;
    let mut trace = FitTrace::default();
    let mut best: Option<Scored<F::Model>> = None;
    let mut best_optimized = false;
    let mut outer_best: Option<(F::Model, f64)> = None;
    let (mut iterations, mut lo_invocations) = (0, 0);

    for _ in 0..cfg.max_iterations {
        let mut n_gc = best
            .as_ref()
            .map_or(cfg.max_gc_iterations, |b| adaptive_iterations(b.support, data.len(), m, cfg));
        let mut k = 0;
        while k < n_gc {
            k += 1;
            iterations += 1;
            let sample = sampler.sample(m, &mut rng)?;
            let pts: Vec<&F::Datum> = sample.ids().iter().map(|&i| &data[i]).collect();
            let Ok(model) = family.fit_minimal(&pts) else {
                continue;
            };
            let scored = score(model, data, params.inlier_threshold);
            if !beats(&scored, &best) {
                continue;
            }
            best = Some(scored);
            best_optimized = false;
            n_gc = adaptive_iterations(best.as_ref().map_or(0, |b| b.support), data.len(), m, cfg);
            if cfg.local_optimization && k > n_gc / 10 {
                let current = best.as_ref().expect("best was just set");
                let (improved, supports) = local_optimization(family, data, graph, &params, current, &mut rng);
                lo_invocations += 1;
                trace.lo_supports.push(supports);
                if let Some(better) = improved {
                    best = Some(better);
                    n_gc = adaptive_iterations(best.as_ref().map_or(0, |b| b.support), data.len(), m, cfg);
                }
                best_optimized = true;
            }
        }
        let Some(current) = best.as_ref() else {
            continue;
        };
        if cfg.local_optimization && !best_optimized {
            let (improved, supports) = local_optimization(family, data, graph, &params, current, &mut rng);
            lo_invocations += 1;
            trace.lo_supports.push(supports);
            if let Some(better) = improved {
                best = Some(better);
            }
            best_optimized = true;
        }
        let current = best.as_ref().expect("best exists");
        let inliers = inliers_of::<F>(&current.model, data, params.inlier_threshold);
        let refit = family.fit_lsq(&inliers).unwrap_or_else(|_| current.model.clone());
        let refit_residual = score(refit.clone(), data, params.inlier_threshold).residual;
        if outer_best.as_ref().is_none_or(|(_, e)| refit_residual < *e) {
            outer_best = Some((refit, refit_residual));
        }
        let e_star = outer_best.as_ref().map_or(f64::INFINITY, |(_, e)| *e);
        trace.best_residuals.push(e_star);
        if e_star < params.residual_threshold {
            break;
        }
    }
    Ok(finish::<F>(
        data,
        point_ids,
        proposal_id,
        &params,
        outer_best.map(|(model, _)| model),
        iterations,
        lo_invocations,
        trace,
    ))
}

/// Plain RANSAC with the 0-1 measure: maximize the inlier count, refit by
/// least squares on the winner's inliers. Uses the same iteration schedule
/// and random stream as [`fit_one`].
pub fn baseline_ransac<F: ModelFamily>(
    family: &F,
    proposal_id: usize,
    data: &[F::Datum],
    point_ids: Vec<usize>,
    cfg: &FitConfig,
    seed: u64,
) -> Result<FitResult<F::Model>> {
    check_sizes(data.len(), &point_ids, None)?;
    let m = F::SAMPLE_SIZE;
    if data.len() < m {
        return Err(domain(format!("baseline needs at least {m} points, got {}", data.len())));
    }
    let params = family.params(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sampler = family.sampler(data, cfg)?;
    let mut trace = FitTrace::default();
    let mut best: Option<Scored<F::Model>> = None;
    let mut outer_best: Option<(F::Model, f64)> = None;
    let mut iterations = 0;
    for _ in 0..cfg.max_iterations {
        let mut n_gc = best
            .as_ref()
            .map_or(cfg.max_gc_iterations, |b| adaptive_iterations(b.support, data.len(), m, cfg));
        let mut k = 0;
        while k < n_gc {
            k += 1;
            iterations += 1;
            let sample = sampler.sample(m, &mut rng)?;
            let pts: Vec<&F::Datum> = sample.ids().iter().map(|&i| &data[i]).collect();
            if let Ok(model) = family.fit_minimal(&pts) {
                let scored = score(model, data, params.inlier_threshold);
                if beats(&scored, &best) {
                    n_gc = adaptive_iterations(scored.support, data.len(), m, cfg);
                    best = Some(scored);
                }
            }
        }
        let Some(current) = best.as_ref() else {
            continue;
        };
        let inliers = inliers_of::<F>(&current.model, data, params.inlier_threshold);
        let refit = family.fit_lsq(&inliers).unwrap_or_else(|_| current.model.clone());
        let e = score(refit.clone(), data, params.inlier_threshold).residual;
        if outer_best.as_ref().is_none_or(|(_, best_e)| e < *best_e) {
            outer_best = Some((refit, e));
        }
        let e_star = outer_best.as_ref().map_or(f64::INFINITY, |(_, e)| *e);
        trace.best_residuals.push(e_star);
        if e_star < params.residual_threshold {
            break;
        }
    }
    Ok(finish::<F>(
        data,
        point_ids,
        proposal_id,
        &params,
        outer_best.map(|(model, _)| model),
        iterations,
        0,
        trace,
    ))
}

fn check_sizes(n: usize, point_ids: &[usize], graph: Option<&NeighborGraph>) -> Result<()> {
    if point_ids.len() != n {
        return Err(domain(format!("{} point ids for {n} points", point_ids.len())));
    }
    if let Some(g) = graph {
        if g.node_count() != n {
            return Err(domain(format!("graph has {} nodes for {n} points", g.node_count())));
        }
    }
    Ok(())
}

/// Proposal processing order: most points first, ties by id.
fn processing_order(proposals: &[ModelProposal]) -> Vec<&ModelProposal> {
    let mut order: Vec<&ModelProposal> = proposals.iter().collect();
    order.sort_by(|a, b| b.points.len().cmp(&a.points.len()).then(a.id.cmp(&b.id)));
    order
}

fn run_sequential<F, G>(data: &[F::Datum], proposals: &[ModelProposal], mut fit: G) -> Result<Vec<FitResult<F::Model>>>
where
    F: ModelFamily,
    G: FnMut(&ModelProposal, &[F::Datum], Vec<usize>) -> Result<FitResult<F::Model>>,
{
    let mut claimed = vec![false; data.len()];
    let mut results = Vec::with_capacity(proposals.len());
    for p in processing_order(proposals) {
        if let Some(&bad) = p.points.iter().find(|&&i| i >= data.len()) {
            return Err(domain(format!("proposal {} references point {bad} of {}", p.id, data.len())));
        }
        let remaining: Vec<usize> = p.points.iter().copied().filter(|&i| !claimed[i]).collect();
        if remaining.len() < F::SAMPLE_SIZE {
            results.push(FitResult::degenerate(p.id, remaining));
            continue;
        }
        let local: Vec<F::Datum> = remaining.iter().map(|&i| data[i].clone()).collect();
        let result = fit(p, &local, remaining)?;
        if result.status == FitStatus::Accepted {
            for i in result.inlier_ids() {
                claimed[i] = true;
            }
        }
        results.push(result);
    }
    Ok(results)
}

/// Fits all proposals in order of decreasing size, removing accepted
/// inliers from later proposals. Results are in processing order.
pub fn fit_sequential<F: ModelFamily>(
    family: &F,
    data: &[F::Datum],
    proposals: &[ModelProposal],
    cfg: &FitConfig,
    seed: u64,
) -> Result<Vec<FitResult<F::Model>>> {
    run_sequential::<F, _>(data, proposals, |p, local, ids| {
        let graph = family.neighbor_graph(local, cfg)?;
        fit_one(family, p.id, local, ids, &graph, cfg, proposal_seed(seed, p.id))
    })
}

/// Sequential RANSAC: [`baseline_ransac`] per proposal with the same order,
/// seeds and inlier removal as [`fit_sequential`].
pub fn sequential_baseline<F: ModelFamily>(
    family: &F,
    data: &[F::Datum],
    proposals: &[ModelProposal],
    cfg: &FitConfig,
    seed: u64,
) -> Result<Vec<FitResult<F::Model>>> {
    run_sequential::<F, _>(data, proposals, |p, local, ids| {
        baseline_ransac(family, p.id, local, ids, cfg, proposal_seed(seed, p.id))
    })
}
