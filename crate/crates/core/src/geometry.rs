//! Domain value types: correspondences, map points, homographies, planes,
//! labelings and segmentation priors.
//!
//! Planes use the convention `n·v + d = 0`. Constructors normalize the normal
//! and canonicalize the sign so that `d >= 0`, and when `d == 0` the first
//! nonzero normal component is positive.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// A matched feature pair between a reference and a current image (pixels).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub id: usize,
    pub ref_point: Point2<f64>,
    pub cur_point: Point2<f64>,
    pub prior_label: Option<u32>,
}

impl Correspondence {
    pub fn new(id: usize, ref_point: Point2<f64>, cur_point: Point2<f64>) -> Result<Self> {
        let c = Self {
            id,
            ref_point,
            cur_point,
            prior_label: None,
        };
        if !c.ref_point.coords.iter().chain(c.cur_point.coords.iter()).all(|v| v.is_finite()) {
            return Err(domain(format!("correspondence {id} has non-finite coordinates")));
        }
        Ok(c)
    }

    pub fn with_label(mut self, label: Option<u32>) -> Self {
        self.prior_label = label;
        self
    }

    /// The same pair with reference and current frames exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            id: self.id,
            ref_point: self.cur_point,
            cur_point: self.ref_point,
            prior_label: self.prior_label,
        }
    }
}

/// A triangulated 3-D landmark (map units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapPoint {
    pub id: usize,
    pub position: Point3<f64>,
    pub prior_label: Option<u32>,
}

impl MapPoint {
    pub fn new(id: usize, position: Point3<f64>) -> Result<Self> {
        if !position.coords.iter().all(|v| v.is_finite()) {
            return Err(domain(format!("map point {id} has non-finite coordinates")));
        }
        Ok(Self {
            id,
            position,
            prior_label: None,
        })
    }

    pub fn with_label(mut self, label: Option<u32>) -> Self {
        self.prior_label = label;
        self
    }
}

/// A planar homography `cur ~ H · ref`, stored with its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct Homography {
    matrix: Matrix3<f64>,
    inverse: Matrix3<f64>,
}

impl Homography {
    /// Normalizes `m` so that `m[(2,2)] == 1` when that entry is nonzero,
    /// otherwise to unit Frobenius norm. Fails for singular matrices.
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(domain("homography has non-finite entries"));
        }
        let scale = if m[(2, 2)].abs() > 1e-12 {
            m[(2, 2)]
        } else {
            m.norm()
        };
        if scale == 0.0 {
            return Err(domain("zero homography"));
        }
        let matrix = m / scale;
        if matrix.determinant().abs() <= 1e-12 {
            return Err(domain("homography is singular"));
        }
        let inverse = matrix
            .try_inverse()
            .ok_or_else(|| domain("homography is singular"))?;
        Ok(Self { matrix, inverse })
    }

    pub fn identity() -> Self {
        Self {
            matrix: Matrix3::identity(),
            inverse: Matrix3::identity(),
        }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    pub fn inverse_matrix(&self) -> &Matrix3<f64> {
        &self.inverse
    }

    pub fn inverse(&self) -> Result<Self> {
        Self::new(self.inverse)
    }

    /// Maps `p` through `H`. `None` when the image lies on the line at infinity.
    pub fn transfer(&self, p: &Point2<f64>) -> Option<Point2<f64>> {
        dehomogenize(&(self.matrix * p.to_homogeneous()))
    }

    /// Maps `p` through `H⁻¹`.
    pub fn transfer_inverse(&self, p: &Point2<f64>) -> Option<Point2<f64>> {
        dehomogenize(&(self.inverse * p.to_homogeneous()))
    }
}

fn dehomogenize(v: &Vector3<f64>) -> Option<Point2<f64>> {
    if v.z.abs() < 1e-12 {
        None
    } else {
        Some(Point2::new(v.x / v.z, v.y / v.z))
    }
}

/// A plane `normal · v + offset = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl Plane {
    /// Builds a plane from any nonzero normal; the result has a unit normal
    /// and canonical sign.
    pub fn new(normal: Vector3<f64>, offset: f64) -> Result<Self> {
        let norm = normal.norm();
        if !(norm.is_finite() && offset.is_finite()) || norm < 1e-300 {
            return Err(domain("plane normal must be finite and nonzero"));
        }
        Ok(Self {
            normal: normal / norm,
            offset: offset / norm,
        }
        .canonical())
    }

    /// Wraps raw coefficients without normalization.
    pub fn from_raw(normal: Vector3<f64>, offset: f64) -> Self {
        Self { normal, offset }
    }

    /// Sign-canonical form: `offset >= 0`; for `offset == 0` the first
    /// nonzero normal component is positive.
    pub fn canonical(self) -> Self {
        let flip = if self.offset != 0.0 {
            self.offset < 0.0
        } else {
            self.normal
                .iter()
                .find(|c| **c != 0.0)
                .is_some_and(|c| *c < 0.0)
        };
        let (mut normal, mut offset) = if flip {
            (-self.normal, -self.offset)
        } else {
            (self.normal, self.offset)
        };
        // squash negative zeros so equal planes compare equal
        normal.iter_mut().for_each(|c| *c += 0.0);
        offset += 0.0;
        Self { normal, offset }
    }

    /// Signed distance `(n·v + d) / ‖n‖`.
    pub fn signed_distance(&self, v: &Point3<f64>) -> f64 {
        (self.normal.dot(&v.coords) + self.offset) / self.normal.norm()
    }

    /// Unsigned point-plane distance `|n·v + d| / ‖n‖`.
    pub fn distance(&self, v: &Point3<f64>) -> f64 {
        self.signed_distance(v).abs()
    }

    /// Angle between normals in degrees, ignoring orientation.
    pub fn normal_angle_deg(&self, other: &Plane) -> f64 {
        let c = self.normal.dot(&other.normal) / (self.normal.norm() * other.normal.norm());
        c.abs().min(1.0).acos().to_degrees()
    }
}

/// Minimal plane parameterization: azimuth, elevation and offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalPlane {
    pub azimuth: f64,
    pub elevation: f64,
    pub offset: f64,
}

impl SphericalPlane {
    pub fn normal(&self) -> Vector3<f64> {
        let (sp, cp) = self.azimuth.sin_cos();
        let (ss, cs) = self.elevation.sin_cos();
        Vector3::new(cs * cp, cs * sp, ss)
    }

    /// Partial derivatives of the unit normal w.r.t. azimuth and elevation.
    pub fn normal_derivatives(&self) -> (Vector3<f64>, Vector3<f64>) {
        let (sp, cp) = self.azimuth.sin_cos();
        let (ss, cs) = self.elevation.sin_cos();
        (
            Vector3::new(-cs * sp, cs * cp, 0.0),
            Vector3::new(-ss * cp, -ss * sp, cs),
        )
    }
}

pub fn plane_to_spherical(p: &Plane) -> Result<SphericalPlane> {
    let n = p.normal;
    if n.z.abs() > 1.0 + 1e-9 {
        return Err(domain(format!("normal z component {} exceeds unit length", n.z)));
    }
    let azimuth = if n.x == 0.0 && n.y == 0.0 {
        0.0
    } else {
        let a = n.y.atan2(n.x);
        if a <= -PI {
            PI
        } else {
            a
        }
    };
    Ok(SphericalPlane {
        azimuth,
        elevation: n.z.clamp(-1.0, 1.0).asin(),
        offset: p.offset,
    })
}

/// Inverse of [`plane_to_spherical`]; the result is not re-canonicalized so
/// that the round trip preserves the normal exactly.
pub fn spherical_to_plane(s: &SphericalPlane) -> Plane {
    Plane::from_raw(s.normal(), s.offset)
}

/// Binary inlier labeling of one model proposal's points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labeling {
    pub model_id: usize,
    pub inliers: Vec<bool>,
}

impl Labeling {
    pub fn len(&self) -> usize {
        self.inliers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inliers.is_empty()
    }

    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|b| **b).count()
    }
}

/// Per-point instance ids from an external segmenter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationPrior {
    labels: Vec<Option<u32>>,
    instance_count: usize,
}

impl SegmentationPrior {
    /// Ids must be dense: every id in `[0, K)` with all `K` present.
    pub fn new(labels: Vec<Option<u32>>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        seen.extend(labels.iter().flatten().copied());
        let k = seen.len();
        if let Some(&max) = seen.iter().next_back() {
            if max as usize >= k {
                return Err(domain(format!(
                    "instance ids are not dense: max id {max} with {k} distinct ids"
                )));
            }
        }
        Ok(Self {
            labels,
            instance_count: k,
        })
    }

    /// Remaps arbitrary ids onto `[0, K)` preserving their order.
    pub fn from_sparse(labels: &[Option<u32>]) -> Self {
        let distinct: std::collections::BTreeSet<u32> = labels.iter().flatten().copied().collect();
        let remap: std::collections::BTreeMap<u32, u32> = distinct
            .iter()
            .enumerate()
            .map(|(i, id)| (*id, i as u32))
            .collect();
        Self {
            labels: labels.iter().map(|l| l.map(|id| remap[&id])).collect(),
            instance_count: distinct.len(),
        }
    }

    pub fn labels(&self) -> &[Option<u32>] {
        &self.labels
    }

    pub fn instance_count(&self) -> usize {
        self.instance_count
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}
