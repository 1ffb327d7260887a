use nalgebra::{DMatrix, Matrix3, Point2, Vector3};

use crate::error::{degenerate, Result};
use crate::geometry::{Correspondence, Homography};

/// Symmetric transfer error `√(‖cur − H·ref‖² + ‖ref − H⁻¹·cur‖²)` in pixels.
/// Points mapped to infinity give `+∞`.
pub fn ste(h: &Homography, c: &Correspondence) -> f64 {
    match (h.transfer(&c.ref_point), h.transfer_inverse(&c.cur_point)) {
        (Some(fwd), Some(bwd)) => ((c.cur_point - fwd).norm_squared() + (c.ref_point - bwd).norm_squared()).sqrt(),
        _ => f64::INFINITY,
    }
}

/// Similarity moving the centroid to the origin with mean distance `√2`.
fn normalization<'a>(points: impl Iterator<Item = &'a Point2<f64>> + Clone) -> Option<Matrix3<f64>> {
    let n = points.clone().count() as f64;
    let centroid = points.clone().fold(Vector3::zeros(), |acc, p| acc + p.coords.push(0.0)) / n;
    let mean = points
        .map(|p| ((p.x - centroid.x).powi(2) + (p.y - centroid.y).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if !(mean > 1e-12) {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean;
    Some(Matrix3::new(s, 0.0, -s * centroid.x, 0.0, s, -s * centroid.y, 0.0, 0.0, 1.0))
}

fn apply(t: &Matrix3<f64>, p: &Point2<f64>) -> Point2<f64> {
    Point2::new(t[(0, 0)] * p.x + t[(0, 2)], t[(1, 1)] * p.y + t[(1, 2)])
}

fn any_three_colinear(p: &[Point2<f64>]) -> bool {
    const TRIPLES: [[usize; 3]; 4] = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
    TRIPLES.iter().any(|&[a, b, c]| {
        let area = 0.5 * (p[b] - p[a]).perp(&(p[c] - p[a])).abs();
        area < 1e-9
    })
}

/// Normalized DLT over every correspondence in `pairs`.
fn ndlt(pairs: &[&Correspondence], check_minimal: bool) -> Result<Homography> {
    let t_ref = normalization(pairs.iter().map(|c| &c.ref_point)).ok_or_else(|| degenerate("coincident reference points"))?;
    let t_cur = normalization(pairs.iter().map(|c| &c.cur_point)).ok_or_else(|| degenerate("coincident current points"))?;
    let r: Vec<Point2<f64>> = pairs.iter().map(|c| apply(&t_ref, &c.ref_point)).collect();
    let q: Vec<Point2<f64>> = pairs.iter().map(|c| apply(&t_cur, &c.cur_point)).collect();
    if check_minimal && (any_three_colinear(&r) || any_three_colinear(&q)) {
        return Err(degenerate("three of the four sample points are colinear"));
    }

    // rows are padded to at least 9 so the SVD yields a full right basis
    let rows = (2 * pairs.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (k, (p, c)) in r.iter().zip(&q).enumerate() {
        let (x, y, u, v) = (p.x, p.y, c.x, c.y);
        let r0 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
        let r1 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        for j in 0..9 {
            a[(2 * k, j)] = r0[j];
            a[(2 * k + 1, j)] = r1[j];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| degenerate("singular value decomposition failed"))?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
    let largest = sv[order[order.len() - 1]];
    if sv[order[1]] <= 1e-12 * largest {
        return Err(degenerate("homography system has a multi-dimensional null space"));
    }
    let h = v_t.row(order[0]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let t_cur_inv = t_cur.try_inverse().ok_or_else(|| degenerate("normalization not invertible"))?;
    Homography::new(t_cur_inv * hn * t_ref).map_err(|e| degenerate(e.to_string()))
}

/// Homography from exactly four correspondences.
pub fn fit_homography_minimal(sample: &[&Correspondence]) -> Result<Homography> {
    if sample.len() != 4 {
        return Err(degenerate(format!("minimal homography sample needs 4 points, got {}", sample.len())));
    }
    ndlt(sample, true)
}

/// Algebraic least-squares homography over four or more correspondences.
pub fn fit_homography_lsq(inliers: &[&Correspondence]) -> Result<Homography> {
    if inliers.len() < 4 {
        return Err(degenerate(format!("need at least 4 correspondences, got {}", inliers.len())));
    }
    ndlt(inliers, inliers.len() == 4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn corr(id: usize, r: (f64, f64), c: (f64, f64)) -> Correspondence {
        Correspondence::new(id, Point2::new(r.0, r.1), Point2::new(c.0, c.1)).unwrap()
    }

    fn translation(tx: f64, ty: f64) -> Homography {
        Homography::new(Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0)).unwrap()
    }

    fn known() -> Homography {
        Homography::new(Matrix3::new(1.2, 0.05, 12.0, -0.03, 1.15, -8.0, 1e-4, 2e-4, 1.0)).unwrap()
    }

    fn mapped(h: &Homography, pts: &[(f64, f64)]) -> Vec<Correspondence> {
        pts.iter()
            .enumerate()
            .map(|(i, &(x, y))| {
                let c = h.transfer(&Point2::new(x, y)).unwrap();
                corr(i, (x, y), (c.x, c.y))
            })
            .collect()
    }

    #[test]
    fn ste_examples() {
        assert_eq!(ste(&Homography::identity(), &corr(0, (10.0, 20.0), (10.0, 20.0))), 0.0);
        let t = translation(5.0, 0.0);
        assert_eq!(ste(&t, &corr(0, (0.0, 0.0), (5.0, 0.0))), 0.0);
        assert!((ste(&t, &corr(0, (0.0, 0.0), (6.0, 0.0))) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ste_at_infinity() {
        let h = Homography::new(Matrix3::new(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0)).unwrap();
        assert_eq!(ste(&h, &corr(0, (0.0, 5.0), (1.0, 1.0))), f64::INFINITY);
    }

    #[test]
    fn minimal_recovers_unit_square() {
        let h = known();
        let sample = mapped(&h, &[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        let refs: Vec<&Correspondence> = sample.iter().collect();
        let est = fit_homography_minimal(&refs).unwrap();
        let diff = (est.matrix() - h.matrix()).abs().max();
        assert!(diff < 1e-9, "{diff}");
        for c in &sample {
            assert!(ste(&est, c) < 1e-8);
        }
    }

    #[test]
    fn minimal_identity() {
        let s = mapped(&Homography::identity(), &[(3.0, 4.0), (100.0, 7.0), (60.0, 80.0), (9.0, 50.0)]);
        let est = fit_homography_minimal(&s.iter().collect::<Vec<_>>()).unwrap();
        assert!((est.matrix() - Matrix3::identity()).abs().max() < 1e-10);
    }

    #[test]
    fn minimal_colinear_is_degenerate() {
        let s = mapped(&known(), &[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (0.0, 5.0)]);
        assert!(fit_homography_minimal(&s.iter().collect::<Vec<_>>()).is_err());
    }

    #[test]
    fn lsq_four_points_equals_minimal() {
        let s = mapped(&known(), &[(3.0, 4.0), (100.0, 7.0), (60.0, 80.0), (9.0, 50.0)]);
        let refs: Vec<_> = s.iter().collect();
        assert_eq!(fit_homography_lsq(&refs).unwrap(), fit_homography_minimal(&refs).unwrap());
    }

    #[test]
    fn lsq_exact_and_noisy() {
        let h = known();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<(f64, f64)> = (0..100)
            .map(|_| (rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)))
            .collect();
        let exact = mapped(&h, &pts);
        let est = fit_homography_lsq(&exact.iter().collect::<Vec<_>>()).unwrap();
        assert!(exact.iter().all(|c| ste(&est, c) < 1e-8));

        let noise = Normal::new(0.0, 0.5).unwrap();
        let noisy: Vec<Correspondence> = exact
            .iter()
            .map(|c| {
                let cur = Point2::new(c.cur_point.x + noise.sample(&mut rng), c.cur_point.y + noise.sample(&mut rng));
                Correspondence::new(c.id, c.ref_point, cur).unwrap()
            })
            .collect();
        let est = fit_homography_lsq(&noisy.iter().collect::<Vec<_>>()).unwrap();
        let rms = (noisy.iter().map(|c| ste(&est, c).powi(2)).sum::<f64>() / noisy.len() as f64).sqrt();
        assert!(rms <= 1.0, "{rms}");
    }

    #[test]
    fn ste_symmetry() {
        let h = known();
        let inv = h.inverse().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..200 {
            let c = corr(
                i,
                (rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)),
                (rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)),
            );
            let (a, b) = (ste(&h, &c), ste(&inv, &c.swapped()));
            assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }
    }
}
