//! Joint refinement of cameras, points and planes.
//!
//! Minimizes the sum of Huber-robustified squared reprojection errors and
//! point-plane distances by Levenberg–Marquardt. Residuals are whitened by
//! their scale (pixels for reprojection, `eps_d` for point-plane) before the
//! Huber loss with unit threshold is applied. Cameras are updated on the
//! left by a 6-D tangent step, planes live in spherical form, and the point
//! block is eliminated by a Schur complement.

use nalgebra::{DMatrix, DVector, Isometry3, Matrix2x3, Matrix2x6, Matrix3, Point2, Point3, RowVector3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::bundle::{Bundle, Intrinsics};
use crate::config::FitConfig;
use crate::error::{domain, Result};
use crate::geometry::{plane_to_spherical, spherical_to_plane, Plane, SphericalPlane};

/// Reprojection scale in pixels.
pub const PIXEL_SCALE: f64 = 2.0;

/// `obs − π(T·v)`, or `None` when the point is not in front of the camera.
pub fn reprojection_residual(k: &Intrinsics, cam: &Isometry3<f64>, v: &Point3<f64>, obs: &Point2<f64>) -> Option<Vector2<f64>> {
    k.project(&(cam * v)).map(|p| obs - p)
}

/// Jacobians of [`reprojection_residual`] with respect to a left camera
/// perturbation `(υ, ω)` and to the point.
pub fn reprojection_jacobians(k: &Intrinsics, cam: &Isometry3<f64>, v: &Point3<f64>) -> Option<(Matrix2x6<f64>, Matrix2x3<f64>)> {
    let x = cam * v;
    if x.z <= 0.0 {
        return None;
    }
    let (iz, iz2) = (1.0 / x.z, 1.0 / (x.z * x.z));
    let jpi = Matrix2x3::new(k.fx * iz, 0.0, -k.fx * x.x * iz2, 0.0, k.fy * iz, -k.fy * x.y * iz2);
    let mut d_cam = Matrix2x6::zeros();
    d_cam.fixed_view_mut::<2, 3>(0, 0).copy_from(&(-jpi));
    d_cam.fixed_view_mut::<2, 3>(0, 3).copy_from(&(jpi * x.coords.cross_matrix()));
    let d_point = -jpi * cam.rotation.to_rotation_matrix().matrix();
    Some((d_cam, d_point))
}

/// Signed point-plane distance `n(φ, ψ)·v + d`.
pub fn plane_residual(s: &SphericalPlane, v: &Point3<f64>) -> f64 {
    s.normal().dot(&v.coords) + s.offset
}

/// Jacobians of [`plane_residual`] with respect to the point and to
/// `(φ, ψ, d)`.
pub fn plane_jacobians(s: &SphericalPlane, v: &Point3<f64>) -> (RowVector3<f64>, RowVector3<f64>) {
    let (dn_dphi, dn_dpsi) = s.normal_derivatives();
    (
        s.normal().transpose(),
        RowVector3::new(dn_dphi.dot(&v.coords), dn_dpsi.dot(&v.coords), 1.0),
    )
}

/// Huber loss on a squared whitened residual and its IRLS weight.
fn huber(u: f64) -> (f64, f64) {
    if u <= 1.0 {
        (u, 1.0)
    } else {
        let s = u.sqrt();
        (2.0 * s - 1.0, 1.0 / s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineReport {
    /// Cost after every accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub warning: Option<String>,
    pub rms_reprojection: f64,
    pub rms_point_plane: f64,
}

#[derive(Debug, Clone)]
struct State {
    cameras: Vec<Isometry3<f64>>,
    points: Vec<Point3<f64>>,
    planes: Vec<SphericalPlane>,
}

struct Problem<'a> {
    bundle: &'a Bundle,
    plane_scale: f64,
    /// Offset of each camera in the reduced vector; `None` when fixed.
    cam_offset: Vec<Option<usize>>,
    plane_offset: Vec<usize>,
    reduced_dim: usize,
}

/// Blocks of the normal equations with the point block kept separate.
struct Normal {
    h_rr: DMatrix<f64>,
    g_r: DVector<f64>,
    h_pp: Vec<Matrix3<f64>>,
    g_p: Vec<Vector3<f64>>,
    /// Per point: `(offset, J_rᵀ W J_p)` blocks coupling it to reduced
    /// parameters.
    w_p: Vec<Vec<(usize, DMatrix<f64>)>>,
}

impl Problem<'_> {
    fn cost(&self, s: &State) -> f64 {
        let b = self.bundle;
        let mut total = 0.0;
        for o in &b.observations {
            let Some(r) = reprojection_residual(&b.intrinsics, &s.cameras[o.camera], &s.points[o.point], &o.pixel) else {
                return f64::INFINITY;
            };
            total += huber((r / PIXEL_SCALE).norm_squared()).0;
        }
        for &(p, k) in &b.associations {
            let r = plane_residual(&s.planes[k], &s.points[p]) / self.plane_scale;
            total += huber(r * r).0;
        }
        total
    }

    fn normal_equations(&self, s: &State) -> Option<Normal> {
        let b = self.bundle;
        let n = b.points.len();
        let mut ne = Normal {
            h_rr: DMatrix::zeros(self.reduced_dim, self.reduced_dim),
            g_r: DVector::zeros(self.reduced_dim),
            h_pp: vec![Matrix3::zeros(); n],
            g_p: vec![Vector3::zeros(); n],
            w_p: vec![Vec::new(); n],
        };
        for o in &b.observations {
            let (cam, v) = (&s.cameras[o.camera], &s.points[o.point]);
            let r = reprojection_residual(&b.intrinsics, cam, v, &o.pixel)? / PIXEL_SCALE;
            let (jc, jp) = reprojection_jacobians(&b.intrinsics, cam, v)?;
            let (jc, jp) = (jc / PIXEL_SCALE, jp / PIXEL_SCALE);
            let w = huber(r.norm_squared()).1;
            ne.h_pp[o.point] += w * jp.transpose() * jp;
            ne.g_p[o.point] += w * jp.transpose() * r;
            if let Some(off) = self.cam_offset[o.camera] {
                let mut h = ne.h_rr.view_mut((off, off), (6, 6));
                h += w * jc.transpose() * jc;
                let mut g = ne.g_r.rows_mut(off, 6);
                g += w * jc.transpose() * r;
                let coupling = w * jc.transpose() * jp;
                add_block(&mut ne.w_p[o.point], off, DMatrix::from_column_slice(6, 3, coupling.as_slice()));
            }
        }
        for &(p, k) in &b.associations {
            let (sp, v) = (&s.planes[k], &s.points[p]);
            let r = plane_residual(sp, v) / self.plane_scale;
            let (jp, jk) = plane_jacobians(sp, v);
            let (jp, jk) = (jp / self.plane_scale, jk / self.plane_scale);
            let w = huber(r * r).1;
            ne.h_pp[p] += w * jp.transpose() * jp;
            ne.g_p[p] += w * jp.transpose() * r;
            let off = self.plane_offset[k];
            let mut h = ne.h_rr.view_mut((off, off), (3, 3));
            h += w * jk.transpose() * jk;
            let mut g = ne.g_r.rows_mut(off, 3);
            g += w * jk.transpose() * r;
            let coupling = w * jk.transpose() * jp;
            add_block(&mut ne.w_p[p], off, DMatrix::from_column_slice(3, 3, coupling.as_slice()));
        }
        Some(ne)
    }

    /// Damped step `(δ_reduced, δ_points)`, or `None` if the damped system
    /// is not positive definite.
    fn solve(&self, ne: &Normal, lambda: f64) -> Option<(DVector<f64>, Vec<Vector3<f64>>)> {
        let damp = |d: f64| lambda * d.max(1e-9);
        let mut s = ne.h_rr.clone();
        for i in 0..self.reduced_dim {
            s[(i, i)] += damp(ne.h_rr[(i, i)]);
        }
        let mut rhs = -ne.g_r.clone();
        let mut inverses = Vec::with_capacity(ne.h_pp.len());
        for (p, h) in ne.h_pp.iter().enumerate() {
            let mut h = *h;
            for i in 0..3 {
                h[(i, i)] += damp(h[(i, i)]);
            }
            let inv = h.try_inverse()?;
            let g = ne.g_p[p];
            for (a_off, wa) in &ne.w_p[p] {
                let wa_inv = wa * inv;
                let mut r = rhs.rows_mut(*a_off, wa.nrows());
                r += &wa_inv * g;
                for (b_off, wb) in &ne.w_p[p] {
                    let mut blk = s.view_mut((*a_off, *b_off), (wa.nrows(), wb.nrows()));
                    blk -= &wa_inv * wb.transpose();
                }
            }
            inverses.push(inv);
        }
        let dr = if self.reduced_dim == 0 {
            DVector::zeros(0)
        } else {
            s.cholesky()?.solve(&rhs)
        };
        let dp = (0..ne.h_pp.len())
            .map(|p| {
                let mut rhs = -ne.g_p[p];
                for (off, w) in &ne.w_p[p] {
                    let coupled = w.transpose() * dr.rows(*off, w.nrows());
                    rhs -= Vector3::new(coupled[0], coupled[1], coupled[2]);
                }
                inverses[p] * rhs
            })
            .collect();
        Some((dr, dp))
    }

    fn apply(&self, s: &State, dr: &DVector<f64>, dp: &[Vector3<f64>]) -> State {
        let mut next = s.clone();
        for (c, off) in self.cam_offset.iter().enumerate() {
            if let Some(off) = off {
                let d = dr.rows(*off, 6);
                let step = Isometry3::new(Vector3::new(d[0], d[1], d[2]), Vector3::new(d[3], d[4], d[5]));
                next.cameras[c] = step * s.cameras[c];
            }
        }
        for (k, off) in self.plane_offset.iter().enumerate() {
            next.planes[k].azimuth += dr[*off];
            next.planes[k].elevation += dr[*off + 1];
            next.planes[k].offset += dr[*off + 2];
        }
        for (p, d) in dp.iter().enumerate() {
            next.points[p] += d;
        }
        next
    }
}

fn add_block(blocks: &mut Vec<(usize, DMatrix<f64>)>, off: usize, m: DMatrix<f64>) {
    match blocks.iter_mut().find(|(o, _)| *o == off) {
        Some((_, existing)) => *existing += m,
        None => blocks.push((off, m)),
    }
}

/// RMS reprojection error (px) over observations and RMS point-plane
/// distance over associations.
pub fn residual_rms(b: &Bundle) -> (f64, f64) {
    let reproj: Vec<f64> = b
        .observations
        .iter()
        .map(|o| {
            reprojection_residual(&b.intrinsics, &b.cameras[o.camera], &b.points[o.point], &o.pixel)
                .map_or(f64::INFINITY, |r| r.norm_squared())
        })
        .collect();
    let plane: Vec<f64> = b
        .associations
        .iter()
        .map(|&(p, k)| b.planes[k].signed_distance(&b.points[p]).powi(2))
        .collect();
    let rms = |v: &[f64]| if v.is_empty() { 0.0 } else { (v.iter().sum::<f64>() / v.len() as f64).sqrt() };
    (rms(&reproj), rms(&plane))
}

/// Refines cameras (except the first), points and planes.
pub fn joint_refine(b: &Bundle, cfg: &FitConfig, max_iters: usize) -> Result<(Bundle, RefineReport)> {
    refine(b, cfg, max_iters, false)
}

/// Refines points and planes with every camera held fixed.
pub fn refine_structure(b: &Bundle, cfg: &FitConfig, max_iters: usize) -> Result<(Bundle, RefineReport)> {
    refine(b, cfg, max_iters, true)
}

/// Relative cost decrease below which a pass counts as converged.
pub const FUNCTION_TOLERANCE: f64 = 1e-6;

fn refine(b: &Bundle, cfg: &FitConfig, max_iters: usize, fix_cameras: bool) -> Result<(Bundle, RefineReport)> {
    b.validate()?;
    let mut dim = 0;
    let cam_offset = (0..b.cameras.len())
        .map(|c| {
            (c > 0 && !fix_cameras).then(|| {
                dim += 6;
                dim - 6
            })
        })
        .collect();
    let plane_offset = (0..b.planes.len())
        .map(|_| {
            dim += 3;
            dim - 3
        })
        .collect();
    let problem = Problem {
        bundle: b,
        plane_scale: cfg.eps_d,
        cam_offset,
        plane_offset,
        reduced_dim: dim,
    };
    let mut state = State {
        cameras: b.cameras.clone(),
        points: b.points.clone(),
        planes: b.planes.iter().map(plane_to_spherical).collect::<Result<_>>()?,
    };
    let mut cost = problem.cost(&state);
    if !cost.is_finite() {
        return Err(domain("initial bundle has points behind a camera"));
    }
    let mut history = vec![cost];
    let mut lambda = 1e-4;
    let mut converged = false;
    let mut iterations = 0;
    'outer: while iterations < max_iters {
        iterations += 1;
        let Some(ne) = problem.normal_equations(&state) else {
            break;
        };
        loop {
            if lambda > 1e12 {
                converged = true;
                break 'outer;
            }
            let Some((dr, dp)) = problem.solve(&ne, lambda) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = problem.apply(&state, &dr, &dp);
            let next = problem.cost(&candidate);
            if next < cost {
                let decrease = (cost - next) / cost.max(f64::MIN_POSITIVE);
                state = candidate;
                cost = next;
                history.push(cost);
                lambda = (lambda * 0.1).max(1e-12);
                if decrease < FUNCTION_TOLERANCE {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            lambda *= 10.0;
        }
    }
    let refined = Bundle {
        cameras: state.cameras,
        points: state.points,
        planes: state
            .planes
            .iter()
            .map(|s| Plane::new(spherical_to_plane(s).normal, s.offset))
            .collect::<Result<_>>()?,
        ..b.clone()
    };
    let (rms_reprojection, rms_point_plane) = residual_rms(&refined);
    let warning = (!converged).then(|| format!("no convergence after {iterations} iterations"));
    Ok((
        refined,
        RefineReport {
            cost_history: history,
            iterations,
            converged,
            warning,
            rms_reprojection,
            rms_point_plane,
        },
    ))
}
