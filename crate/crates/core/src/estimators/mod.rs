//! Minimal-sample and least-squares estimators, residuals and samplers for
//! homographies and planes.

mod homography;
mod plane;
mod sampler;

pub use homography::{fit_homography_lsq, fit_homography_minimal, ste};
pub use plane::{fit_plane_lsq, fit_plane_minimal, point_plane_distance};
pub(crate) use plane::fit_plane_lsq_positions;
pub use sampler::{sample_uniform, LocalizedSampler, MinimalSample};

use crate::geometry::{Correspondence, Homography, MapPoint, Plane};

/// A model that measures the distance of a datum to itself.
pub trait Residual {
    type Datum;
    fn residual(&self, datum: &Self::Datum) -> f64;
}

impl Residual for Plane {
    type Datum = MapPoint;
    fn residual(&self, v: &MapPoint) -> f64 {
        point_plane_distance(self, v)
    }
}

impl Residual for Homography {
    type Datum = Correspondence;
    fn residual(&self, c: &Correspondence) -> f64 {
        ste(self, c)
    }
}

/// Mean residual of the data strictly within `threshold`; `+∞` when there
/// is none.
pub fn model_residual<M: Residual>(model: &M, points: &[M::Datum], threshold: f64) -> f64 {
    mean_inlier_residual(points.iter().map(|p| model.residual(p)), threshold)
}

pub(crate) fn mean_inlier_residual(residuals: impl Iterator<Item = f64>, threshold: f64) -> f64 {
    let (sum, count) = residuals
        .filter(|r| *r < threshold)
        .fold((0.0, 0usize), |(s, c), r| (s + r, c + 1));
    if count == 0 {
        f64::INFINITY
    } else {
        sum / count as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Point3, Vector3};

    fn mp(z: f64) -> MapPoint {
        MapPoint::new(0, Point3::new(0.3, -0.1, z)).unwrap()
    }

    #[test]
    fn residual_examples() {
        let z0 = Plane::new(Vector3::z(), 0.0).unwrap();
        assert_eq!(model_residual(&z0, &[mp(0.0), mp(0.0)], 0.02), 0.0);
        assert_eq!(model_residual(&z0, &[mp(1.0)], 0.02), f64::INFINITY);
        assert_eq!(model_residual(&z0, &[], 0.02), f64::INFINITY);
        let e = model_residual(&z0, &[mp(0.01), mp(0.03), mp(-0.005)], 0.02);
        assert!((e - 0.0075).abs() < 1e-15);
    }
}
