use nalgebra::{DMatrix, Point3, Vector3};

use crate::error::{degenerate, Result};
use crate::geometry::{MapPoint, Plane};

/// `|n·v + d| / ‖n‖`.
pub fn point_plane_distance(plane: &Plane, v: &MapPoint) -> f64 {
    plane.distance(&v.position)
}

/// Plane through three points.
pub fn fit_plane_minimal(sample: &[&MapPoint]) -> Result<Plane> {
    if sample.len() != 3 {
        return Err(degenerate(format!("minimal plane sample needs 3 points, got {}", sample.len())));
    }
    let v0 = sample[0].position;
    let e1 = sample[1].position - v0;
    let e2 = sample[2].position - v0;
    let n = e1.cross(&e2);
    if !(n.norm() >= 1e-12 * e1.norm() * e2.norm()) || n.norm() == 0.0 {
        return Err(degenerate("colinear plane sample"));
    }
    let n = n.normalize();
    Plane::new(n, -n.dot(&v0.coords)).map_err(|e| degenerate(e.to_string()))
}

/// Total least-squares plane through three or more points.
pub fn fit_plane_lsq(inliers: &[&MapPoint]) -> Result<Plane> {
    fit_plane_lsq_positions(inliers.iter().map(|p| &p.position))
}

pub(crate) fn fit_plane_lsq_positions<'a>(points: impl Iterator<Item = &'a Point3<f64>> + Clone) -> Result<Plane> {
    let n = points.clone().count();
    if n < 3 {
        return Err(degenerate(format!("need at least 3 points, got {n}")));
    }
    let centroid = points.clone().fold(Vector3::zeros(), |acc, p| acc + p.coords) / n as f64;
    let mut a = DMatrix::<f64>::zeros(n.max(3), 3);
    for (i, p) in points.enumerate() {
        let c = p.coords - centroid;
        a[(i, 0)] = c.x;
        a[(i, 1)] = c.y;
        a[(i, 2)] = c.z;
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| degenerate("singular value decomposition failed"))?;
    let sv = &svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
    if !(sv[order[1]] > 1e-12 * sv[order[2]]) {
        return Err(degenerate("points are colinear or coincident"));
    }
    let normal = v_t.row(order[0]).transpose();
    let normal = Vector3::new(normal[0], normal[1], normal[2]);
    Plane::new(normal, -normal.dot(&centroid)).map_err(|e| degenerate(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn mp(id: usize, x: f64, y: f64, z: f64) -> MapPoint {
        MapPoint::new(id, Point3::new(x, y, z)).unwrap()
    }

    #[test]
    fn distance_examples() {
        let z0 = Plane::new(Vector3::z(), 0.0).unwrap();
        assert_eq!(point_plane_distance(&z0, &mp(0, 0.0, 0.0, 2.0)), 2.0);
        assert_eq!(point_plane_distance(&z0, &mp(0, 5.0, -3.0, 0.0)), 0.0);
        let raw = Plane::from_raw(Vector3::new(0.0, 0.0, 2.0), 0.0);
        assert_eq!(point_plane_distance(&raw, &mp(0, 0.0, 0.0, 2.0)), 2.0);
    }

    #[test]
    fn minimal_examples() {
        let (a, b, c) = (mp(0, 0.0, 0.0, 0.0), mp(1, 1.0, 0.0, 0.0), mp(2, 0.0, 1.0, 0.0));
        let p = fit_plane_minimal(&[&a, &b, &c]).unwrap();
        assert_eq!(p.normal, Vector3::z());
        assert_eq!(p.offset, 0.0);
        let d = mp(3, 2.0, 0.0, 0.0);
        assert!(fit_plane_minimal(&[&a, &b, &d]).is_err());
        assert!(fit_plane_minimal(&[&a, &a, &b]).is_err());
    }

    #[test]
    fn minimal_interpolates_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let pts: Vec<MapPoint> = (0..3)
                .map(|i| mp(i, rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)))
                .collect();
            let p = fit_plane_minimal(&pts.iter().collect::<Vec<_>>()).unwrap();
            assert!(pts.iter().all(|v| point_plane_distance(&p, v) < 1e-12));
            assert!(p.offset >= 0.0);
        }
    }

    #[test]
    fn lsq_exact_plane() {
        let pts: Vec<MapPoint> = (0..20).map(|i| mp(i, (i % 5) as f64, (i / 5) as f64, 1.0)).collect();
        let p = fit_plane_lsq(&pts.iter().collect::<Vec<_>>()).unwrap();
        assert!((p.normal - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
        assert!((p.offset - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lsq_noisy_plane() {
        let truth = Plane::new(Vector3::new(0.3, -0.2, 0.9), -0.7).unwrap();
        let (u, v) = {
            let u = truth.normal.cross(&Vector3::x()).normalize();
            (u, truth.normal.cross(&u))
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, 0.005).unwrap();
        let origin = -truth.offset * truth.normal;
        let pts: Vec<MapPoint> = (0..200)
            .map(|i| {
                let p = origin + rng.random_range(-1.0..1.0) * u + rng.random_range(-1.0..1.0) * v
                    + noise.sample(&mut rng) * truth.normal;
                mp(i, p.x, p.y, p.z)
            })
            .collect();
        let est = fit_plane_lsq(&pts.iter().collect::<Vec<_>>()).unwrap();
        assert!(est.normal_angle_deg(&truth) < 1.0);
    }

    #[test]
    fn lsq_three_points_matches_minimal() {
        let pts = [mp(0, 0.1, 0.2, 0.3), mp(1, 1.0, -0.4, 0.2), mp(2, 0.3, 0.9, -0.5)];
        let refs: Vec<_> = pts.iter().collect();
        let a = fit_plane_lsq(&refs).unwrap();
        let b = fit_plane_minimal(&refs).unwrap();
        assert!((a.normal - b.normal).norm() < 1e-12);
        assert!((a.offset - b.offset).abs() < 1e-12);
    }

    #[test]
    fn lsq_rejects_colinear() {
        let pts: Vec<MapPoint> = (0..10).map(|i| mp(i, i as f64, 2.0 * i as f64, 0.0)).collect();
        assert!(fit_plane_lsq(&pts.iter().collect::<Vec<_>>()).is_err());
    }
}
