use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::FitConfig;
use crate::estimators::fit_plane_lsq_positions;
use crate::geometry::{MapPoint, Plane};

/// A plane in the map together with the points associated to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneLandmark {
    pub id: usize,
    pub plane: Plane,
    /// Sorted indices into the map's point list.
    pub points: Vec<usize>,
    pub alive: bool,
}

impl PlaneLandmark {
    pub fn new(id: usize, plane: Plane, mut points: Vec<usize>) -> Self {
        points.sort_unstable();
        points.dedup();
        Self {
            id,
            plane,
            points,
            alive: true,
        }
    }

    pub fn support(&self) -> usize {
        self.points.len()
    }
}

/// Dissociates every point farther than `eps_d` from its plane. Returns the
/// removed point indices, sorted.
pub fn cull_nonplanar(map: &mut [PlaneLandmark], points: &[MapPoint], eps_d: f64) -> Vec<usize> {
    let mut removed = Vec::new();
    for lm in map.iter_mut().filter(|l| l.alive) {
        let plane = lm.plane;
        lm.points.retain(|&i| {
            let keep = plane.distance(&points[i].position) <= eps_d;
            if !keep {
                removed.push(i);
            }
            keep
        });
    }
    removed.sort_unstable();
    removed
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Nearly parallel normals (`|cos θ| > t_theta`) and nearby offsets.
///
/// The offset test compares `|d_a − sgn(n_a·n_b)·d_b|` against `t_d`, which
/// accounts for normals pointing in opposite directions. With `literal` the
/// sign-only comparison `|sgn(d_a) − sgn(d_b)| < t_d` is used instead.
pub fn should_merge(a: &Plane, b: &Plane, t_theta: f64, t_d: f64, literal: bool) -> bool {
    let dot = a.normal.dot(&b.normal);
    let cos = dot / (a.normal.norm() * b.normal.norm());
    if !(cos.abs() > t_theta) {
        return false;
    }
    let gap = if literal {
        (sign(a.offset) - sign(b.offset)).abs()
    } else {
        let (da, db) = (a.offset / a.normal.norm(), b.offset / b.normal.norm());
        (da - sign(dot) * db).abs()
    };
    gap < t_d
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeOutcome {
    /// `a` holds the merged plane; `b` is dead.
    Merged,
    /// The merged plane's mean inlier distance exceeded `eps_pi`.
    RolledBack,
    /// The union does not determine a plane.
    Aborted,
}

/// Merges `b` into `a`: the plane is re-estimated on the union of their
/// points by repeated least-squares fits on random subsets, keeping the
/// hypothesis with most inliers, then refitted on those inliers.
pub fn merge_planes(
    a: &mut PlaneLandmark,
    b: &mut PlaneLandmark,
    points: &[MapPoint],
    cfg: &FitConfig,
    seed: u64,
) -> MergeOutcome {
    let union: Vec<usize> = a.points.iter().chain(&b.points).copied().collect::<BTreeSet<_>>().into_iter().collect();
    let pos = |ids: &[usize]| ids.iter().map(|&i| points[i].position).collect::<Vec<_>>();
    let all = pos(&union);
    if fit_plane_lsq_positions(all.iter()).is_err() {
        return MergeOutcome::Aborted;
    }
    let n = all.len();
    let k = ((cfg.merge_sample_fraction * n as f64).ceil() as usize).clamp(3, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Plane, usize)> = None;
    for _ in 0..cfg.merge_rounds {
        let subset: Vec<_> = rand::seq::index::sample(&mut rng, n, k).iter().map(|i| all[i]).collect();
        let Ok(plane) = fit_plane_lsq_positions(subset.iter()) else {
            continue;
        };
        let count = all.iter().filter(|v| plane.distance(v) <= cfg.eps_d).count();
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((plane, count));
        }
    }
    let Some((hypothesis, _)) = best else {
        return MergeOutcome::Aborted;
    };
    let inliers: Vec<_> = all.iter().filter(|v| hypothesis.distance(v) <= cfg.eps_d).collect();
    let plane = fit_plane_lsq_positions(inliers.iter().copied()).unwrap_or(hypothesis);
    let members: Vec<usize> = union
        .iter()
        .zip(&all)
        .filter(|(_, v)| plane.distance(v) <= cfg.eps_d)
        .map(|(i, _)| *i)
        .collect();
    let residual = if members.len() < 3 {
        f64::INFINITY
    } else {
        members.iter().map(|&i| plane.distance(&points[i].position)).sum::<f64>() / members.len() as f64
    };
    if !(residual <= cfg.eps_pi) {
        return MergeOutcome::RolledBack;
    }
    a.plane = plane;
    a.points = members;
    b.alive = false;
    b.points.clear();
    MergeOutcome::Merged
}

/// Repeatedly merges alive pairs that pass [`should_merge`] until no pair
/// merges. Returns the number of merges.
pub fn merge_sweep(map: &mut [PlaneLandmark], points: &[MapPoint], cfg: &FitConfig, seed: u64) -> usize {
    let mut merges = 0;
    loop {
        let mut merged_any = false;
        for i in 0..map.len() {
            for j in i + 1..map.len() {
                if !(map[i].alive && map[j].alive) {
                    continue;
                }
                if !should_merge(&map[i].plane, &map[j].plane, cfg.t_theta, cfg.t_d, cfg.literal_offset_test) {
                    continue;
                }
                let pair_seed = seed ^ ((i as u64) << 32 | j as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                let (head, tail) = map.split_at_mut(j);
                if merge_planes(&mut head[i], &mut tail[0], points, cfg, pair_seed) == MergeOutcome::Merged {
                    merges += 1;
                    merged_any = true;
                }
            }
        }
        if !merged_any {
            return merges;
        }
    }
}

/// Claims every unassigned point within `eps_d` of the plane. Returns the
/// number of newly associated points.
pub fn expand_plane(p: &mut PlaneLandmark, points: &[MapPoint], assigned: &mut [bool], eps_d: f64) -> usize {
    if !p.alive {
        return 0;
    }
    let mut claimed = 0;
    for (i, v) in points.iter().enumerate() {
        if !assigned[i] && p.plane.distance(&v.position) <= eps_d {
            assigned[i] = true;
            p.points.push(i);
            claimed += 1;
        }
    }
    p.points.sort_unstable();
    claimed
}

/// Marks planes with fewer than `min_support` points dead and releases
/// their points. Returns the removed landmark ids.
pub fn remove_weak(map: &mut [PlaneLandmark], min_support: usize) -> Vec<usize> {
    let mut removed = Vec::new();
    for lm in map.iter_mut().filter(|l| l.alive && l.support() < min_support) {
        lm.alive = false;
        lm.points.clear();
        removed.push(lm.id);
    }
    removed
}

/// Moves `v` along the normal onto the plane, using the signed distance.
pub fn project_onto_plane(p: &Plane, v: &MapPoint) -> MapPoint {
    let n = p.normal / p.normal.norm();
    MapPoint {
        position: v.position - p.signed_distance(&v.position) * n,
        ..v.clone()
    }
}
