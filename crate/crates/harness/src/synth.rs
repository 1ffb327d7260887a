//! Seeded synthetic scenes with ground truth and a corrupted segmentation mask.

use nalgebra::{Isometry3, Matrix3, Point2, Point3, UnitQuaternion, Vector3};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use seqgc::planemap::{Bundle, Intrinsics, Observation};
use seqgc::{Correspondence, Homography, MapPoint, Plane};

use crate::error::{HarnessError, HarnessResult};

/// How the segmentation mask is damaged after it is built from ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskCorruption {
    /// Fraction of each boundary set relabeled to the neighboring instance.
    #[serde(default)]
    pub leak_fraction: f64,
    /// Fraction of all points whose label is dropped.
    #[serde(default)]
    pub unlabeled_fraction: f64,
    /// Points within this distance of another instance's patch form the
    /// boundary set towards it (map units or px).
    #[serde(default)]
    pub boundary_width: f64,
}

impl Default for MaskCorruption {
    fn default() -> Self {
        Self {
            leak_fraction: 0.0,
            unlabeled_fraction: 0.0,
            boundary_width: 0.0,
        }
    }
}

/// A bounded rectangular patch `origin + a·u + b·v`, `a ∈ [0, extent_u]`,
/// `b ∈ [0, extent_v]`. `axis_v` is orthogonalized against `axis_u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchSpec {
    pub origin: [f64; 3],
    pub axis_u: [f64; 3],
    pub axis_v: [f64; 3],
    pub extent_u: f64,
    pub extent_v: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneSceneSpec {
    pub planes: Vec<PatchSpec>,
    pub noise_sigma: f64,
    /// Fraction of all points that are outliers.
    pub outlier_fraction: f64,
    #[serde(default)]
    pub mask: MaskCorruption,
    pub seed: u64,
}

/// An image-space rectangle `[x0, y0, x1, y1]` in the reference frame
/// moving under one homography.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub rect: [f64; 4],
    /// Row-major 3x3 matrix.
    pub homography: [f64; 9],
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomographySceneSpec {
    pub image_size: [f64; 2],
    pub regions: Vec<RegionSpec>,
    /// Pixel noise added to the current-frame coordinates.
    pub noise_sigma: f64,
    pub outlier_fraction: f64,
    #[serde(default)]
    pub mask: MaskCorruption,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SceneSpec {
    Planes(PlaneSceneSpec),
    Homographies(HomographySceneSpec),
    Bundle(BundleSpec),
}

/// One relabeling made by the mask corruption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakRecord {
    pub point: usize,
    pub from: u32,
    pub to: u32,
}

/// Bookkeeping of the mask corruption.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MaskLedger {
    /// `(to, from, |B|)` for every ordered pair, `B` being the boundary set of
    /// `from` towards `to`.
    pub boundary_sizes: Vec<(u32, u32, usize)>,
    pub leaks: Vec<LeakRecord>,
    pub unlabeled: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneRecord {
    pub normal: [f64; 3],
    pub offset: f64,
}

impl From<&Plane> for PlaneRecord {
    fn from(p: &Plane) -> Self {
        Self {
            normal: [p.normal.x, p.normal.y, p.normal.z],
            offset: p.offset,
        }
    }
}

impl PlaneRecord {
    pub fn to_plane(self) -> HarnessResult<Plane> {
        Ok(Plane::new(Vector3::from(self.normal), self.offset)?)
    }
}

/// Ground truth written next to a synthetic scene. Point ids equal indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Truth {
    Planes {
        planes: Vec<PlaneRecord>,
        labels: Vec<Option<u32>>,
        mask: MaskLedger,
    },
    Homographies {
        homographies: Vec<[f64; 9]>,
        labels: Vec<Option<u32>>,
        mask: MaskLedger,
    },
}

impl Truth {
    pub fn labels(&self) -> &[Option<u32>] {
        match self {
            Truth::Planes { labels, .. } | Truth::Homographies { labels, .. } => labels,
        }
    }

    pub fn mask(&self) -> &MaskLedger {
        match self {
            Truth::Planes { mask, .. } | Truth::Homographies { mask, .. } => mask,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaneScene {
    /// Points carrying the corrupted mask labels.
    pub points: Vec<MapPoint>,
    pub planes: Vec<Plane>,
    pub truth_labels: Vec<Option<u32>>,
    pub ledger: MaskLedger,
}

impl PlaneScene {
    pub fn truth(&self) -> Truth {
        Truth::Planes {
            planes: self.planes.iter().map(PlaneRecord::from).collect(),
            labels: self.truth_labels.clone(),
            mask: self.ledger.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomographyScene {
    pub matches: Vec<Correspondence>,
    pub homographies: Vec<Homography>,
    pub truth_labels: Vec<Option<u32>>,
    pub ledger: MaskLedger,
}

impl HomographyScene {
    pub fn truth(&self) -> Truth {
        Truth::Homographies {
            homographies: self.homographies.iter().map(|h| row_major(h.matrix())).collect(),
            labels: self.truth_labels.clone(),
            mask: self.ledger.clone(),
        }
    }
}

pub fn row_major(m: &Matrix3<f64>) -> [f64; 9] {
    [m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 0)], m[(1, 1)], m[(1, 2)], m[(2, 0)], m[(2, 1)], m[(2, 2)]]
}

fn spec_error(msg: impl Into<String>) -> HarnessError {
    HarnessError::Data(format!("invalid scene spec: {}", msg.into()))
}

fn check_common(sigma: f64, outliers: f64, mask: &MaskCorruption) -> HarnessResult<()> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(spec_error("noise_sigma must be finite and non-negative"));
    }
    if !(0.0..1.0).contains(&outliers) {
        return Err(spec_error("outlier_fraction must lie in [0, 1)"));
    }
    for (name, f) in [("leak_fraction", mask.leak_fraction), ("unlabeled_fraction", mask.unlabeled_fraction)] {
        if !(0.0..=1.0).contains(&f) {
            return Err(spec_error(format!("{name} must lie in [0, 1]")));
        }
    }
    if !(mask.boundary_width >= 0.0 && mask.boundary_width.is_finite()) {
        return Err(spec_error("boundary_width must be finite and non-negative"));
    }
    Ok(())
}

fn outlier_count(planar: usize, fraction: f64) -> usize {
    (fraction * planar as f64 / (1.0 - fraction)).round() as usize
}

struct Patch {
    origin: Vector3<f64>,
    u: Vector3<f64>,
    v: Vector3<f64>,
    extent: (f64, f64),
    plane: Plane,
}

impl Patch {
    fn new(s: &PatchSpec) -> HarnessResult<Self> {
        let u = Vector3::from(s.axis_u);
        let v = Vector3::from(s.axis_v);
        let u = u.try_normalize(1e-12).ok_or_else(|| spec_error("axis_u must be non-zero"))?;
        let v = (v - u * u.dot(&v))
            .try_normalize(1e-9)
            .ok_or_else(|| spec_error("axis_v must not be parallel to axis_u"))?;
        if !(s.extent_u > 0.0 && s.extent_v > 0.0) {
            return Err(spec_error("patch extents must be positive"));
        }
        let origin = Vector3::from(s.origin);
        let n = u.cross(&v);
        Ok(Self {
            plane: Plane::new(n, -n.dot(&origin))?,
            origin,
            u,
            v,
            extent: (s.extent_u, s.extent_v),
        })
    }

    /// Euclidean distance to the bounded rectangle.
    fn distance(&self, p: &Point3<f64>) -> f64 {
        let r = p.coords - self.origin;
        let a = r.dot(&self.u).clamp(0.0, self.extent.0);
        let b = r.dot(&self.v).clamp(0.0, self.extent.1);
        (r - self.u * a - self.v * b).norm()
    }
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
    }
}

/// Builds the mask from truth, relabels boundary points and drops labels.
/// `distance(i, p)` is the distance of point `p` to instance `i`'s region.
fn corrupt_mask(
    truth: &[Option<u32>],
    mut mask: Vec<Option<u32>>,
    instances: usize,
    corruption: &MaskCorruption,
    distance: impl Fn(usize, usize) -> f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<Option<u32>>, MaskLedger) {
    let mut ledger = MaskLedger::default();
    for to in 0..instances {
        for from in 0..instances {
            if to == from {
                continue;
            }
            let boundary: Vec<usize> = (0..truth.len())
                .filter(|&p| truth[p] == Some(from as u32) && mask[p] == Some(from as u32))
                .filter(|&p| distance(to, p) <= corruption.boundary_width)
                .collect();
            ledger.boundary_sizes.push((to as u32, from as u32, boundary.len()));
            let k = (corruption.leak_fraction * boundary.len() as f64).floor() as usize;
            let mut picked: Vec<usize> = sample(rng, boundary.len(), k).into_iter().map(|i| boundary[i]).collect();
            picked.sort_unstable();
            for p in picked {
                mask[p] = Some(to as u32);
                ledger.leaks.push(LeakRecord {
                    point: p,
                    from: from as u32,
                    to: to as u32,
                });
            }
        }
    }
    let k = (corruption.unlabeled_fraction * truth.len() as f64).floor() as usize;
    let mut dropped: Vec<usize> = sample(rng, truth.len(), k).into_vec();
    dropped.sort_unstable();
    for &p in &dropped {
        mask[p] = None;
    }
    ledger.unlabeled = dropped;
    (mask, ledger)
}

fn nearest(count: usize, distance: impl Fn(usize) -> f64) -> Option<u32> {
    (0..count)
        .map(|i| (i, distance(i)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i as u32)
}

/// Samples points on plane patches with isotropic noise plus uniform outliers
/// in the padded bounding box. Outliers inherit the mask label of the nearest
/// patch, as a region-based segmenter would assign them.
pub fn synth_planes(spec: &PlaneSceneSpec) -> HarnessResult<PlaneScene> {
    check_common(spec.noise_sigma, spec.outlier_fraction, &spec.mask)?;
    if spec.planes.is_empty() {
        return Err(spec_error("a scene needs at least one plane"));
    }
    let patches = spec.planes.iter().map(Patch::new).collect::<HarnessResult<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut positions = Vec::new();
    let mut truth = Vec::new();
    for (k, (patch, s)) in patches.iter().zip(&spec.planes).enumerate() {
        for _ in 0..s.points {
            let a = rng.random_range(0.0..=patch.extent.0);
            let b = rng.random_range(0.0..=patch.extent.1);
            let clean = patch.origin + patch.u * a + patch.v * b;
            let noise = Vector3::new(
                gaussian(&mut rng, spec.noise_sigma),
                gaussian(&mut rng, spec.noise_sigma),
                gaussian(&mut rng, spec.noise_sigma),
            );
            positions.push(Point3::from(clean + noise));
            truth.push(Some(k as u32));
        }
    }
    let planar = positions.len();
    let n_out = outlier_count(planar, spec.outlier_fraction);
    if n_out > 0 {
        if planar == 0 {
            return Err(spec_error("outliers need planar points to bound them"));
        }
        let mut lo = positions[0].coords;
        let mut hi = lo;
        for p in &positions {
            lo = lo.inf(&p.coords);
            hi = hi.sup(&p.coords);
        }
        let pad = 0.1 * (hi - lo).max();
        for _ in 0..n_out {
            let p = Vector3::new(
                rng.random_range(lo.x - pad..=hi.x + pad),
                rng.random_range(lo.y - pad..=hi.y + pad),
                rng.random_range(lo.z - pad..=hi.z + pad),
            );
            positions.push(Point3::from(p));
            truth.push(None);
        }
    }

    let initial: Vec<Option<u32>> = (0..positions.len())
        .map(|p| truth[p].or_else(|| nearest(patches.len(), |i| patches[i].distance(&positions[p]))))
        .collect();
    let (mask, ledger) = corrupt_mask(
        &truth,
        initial,
        patches.len(),
        &spec.mask,
        |i, p| patches[i].distance(&positions[p]),
        &mut rng,
    );
    let points = positions
        .iter()
        .zip(&mask)
        .enumerate()
        .map(|(id, (p, l))| MapPoint::new(id, *p).map(|m| m.with_label(*l)))
        .collect::<seqgc::Result<Vec<_>>>()?;
    Ok(PlaneScene {
        points,
        planes: patches.iter().map(|p| p.plane).collect(),
        truth_labels: truth,
        ledger,
    })
}

fn rect_distance(r: &[f64; 4], p: &Point2<f64>) -> f64 {
    let dx = (r[0] - p.x).max(0.0).max(p.x - r[2]);
    let dy = (r[1] - p.y).max(0.0).max(p.y - r[3]);
    dx.hypot(dy)
}

/// Correspondences inside image rectangles moving under known homographies,
/// with pixel noise on the current frame and uniform random outlier pairs.
pub fn synth_homographies(spec: &HomographySceneSpec) -> HarnessResult<HomographyScene> {
    check_common(spec.noise_sigma, spec.outlier_fraction, &spec.mask)?;
    if spec.regions.is_empty() {
        return Err(spec_error("a scene needs at least one region"));
    }
    let [w, h] = spec.image_size;
    if !(w > 0.0 && h > 0.0) {
        return Err(spec_error("image_size must be positive"));
    }
    let mut homographies = Vec::new();
    for r in &spec.regions {
        let [x0, y0, x1, y1] = r.rect;
        if !(0.0 <= x0 && x0 < x1 && x1 <= w && 0.0 <= y0 && y0 < y1 && y1 <= h) {
            return Err(spec_error(format!("region {:?} must be a non-empty rectangle inside the image", r.rect)));
        }
        homographies.push(Homography::new(Matrix3::from_row_slice(&r.homography))?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pairs = Vec::new();
    let mut truth = Vec::new();
    for (k, (r, hom)) in spec.regions.iter().zip(&homographies).enumerate() {
        let [x0, y0, x1, y1] = r.rect;
        // reference points strictly inside the image keep the grid index valid
        let xmax = x1.min(w * (1.0 - 1e-12));
        let ymax = y1.min(h * (1.0 - 1e-12));
        for _ in 0..r.points {
            let p = Point2::new(rng.random_range(x0..xmax), rng.random_range(y0..ymax));
            let q = hom
                .transfer(&p)
                .ok_or_else(|| spec_error(format!("region {k} maps a point to infinity")))?;
            let q = Point2::new(q.x + gaussian(&mut rng, spec.noise_sigma), q.y + gaussian(&mut rng, spec.noise_sigma));
            pairs.push((p, q));
            truth.push(Some(k as u32));
        }
    }
    for _ in 0..outlier_count(pairs.len(), spec.outlier_fraction) {
        let p = Point2::new(rng.random_range(0.0..w), rng.random_range(0.0..h));
        let q = Point2::new(rng.random_range(0.0..w), rng.random_range(0.0..h));
        pairs.push((p, q));
        truth.push(None);
    }
    let rects: Vec<[f64; 4]> = spec.regions.iter().map(|r| r.rect).collect();
    let initial: Vec<Option<u32>> = (0..pairs.len())
        .map(|p| truth[p].or_else(|| nearest(rects.len(), |i| rect_distance(&rects[i], &pairs[p].0))))
        .collect();
    let (mask, ledger) = corrupt_mask(
        &truth,
        initial,
        rects.len(),
        &spec.mask,
        |i, p| rect_distance(&rects[i], &pairs[p].0),
        &mut rng,
    );
    let matches = pairs
        .iter()
        .zip(&mask)
        .enumerate()
        .map(|(id, ((p, q), l))| Correspondence::new(id, *p, *q).map(|c| c.with_label(*l)))
        .collect::<seqgc::Result<Vec<_>>>()?;
    Ok(HomographyScene {
        matches,
        homographies,
        truth_labels: truth,
        ledger,
    })
}

/// Two adjacent unit patches meeting at a right angle along the x axis.
pub fn two_plane_spec(points_per_plane: usize, noise: f64, outliers: f64, leak: f64, seed: u64) -> PlaneSceneSpec {
    PlaneSceneSpec {
        planes: vec![
            PatchSpec {
                origin: [0.0, 0.0, 0.0],
                axis_u: [1.0, 0.0, 0.0],
                axis_v: [0.0, 1.0, 0.0],
                extent_u: 1.0,
                extent_v: 1.0,
                points: points_per_plane,
            },
            PatchSpec {
                origin: [0.0, 0.0, 0.0],
                axis_u: [1.0, 0.0, 0.0],
                axis_v: [0.0, 0.0, 1.0],
                extent_u: 1.0,
                extent_v: 1.0,
                points: points_per_plane,
            },
        ],
        noise_sigma: noise,
        outlier_fraction: outliers,
        mask: MaskCorruption {
            leak_fraction: leak,
            unlabeled_fraction: 0.0,
            boundary_width: 0.25,
        },
        seed,
    }
}

/// Parameters of the synthetic refinement problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BundleSpec {
    pub cameras: usize,
    pub points_per_plane: usize,
    pub pixel_noise: f64,
    pub rotation_deg: f64,
    /// Camera translation perturbation as a fraction of the mean scene depth.
    pub translation_fraction: f64,
    /// Initial point jitter (map units).
    pub point_noise: f64,
    pub seed: u64,
}

impl Default for BundleSpec {
    fn default() -> Self {
        Self {
            cameras: 4,
            points_per_plane: 60,
            pixel_noise: 0.5,
            rotation_deg: 1.0,
            translation_fraction: 0.01,
            point_noise: 0.02,
            seed: 2024,
        }
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(gaussian(rng, 1.0), gaussian(rng, 1.0), gaussian(rng, 1.0));
        if let Some(u) = v.try_normalize(1e-9) {
            return u;
        }
    }
}

/// A wall and a floor seen by a row of cameras. Returns the noise-free
/// ground truth with noisy observations and the perturbed initialization.
/// Camera 0 is left unperturbed as it fixes the gauge.
pub fn synth_bundle(spec: &BundleSpec) -> HarnessResult<(Bundle, Bundle)> {
    if spec.cameras == 0 || spec.points_per_plane == 0 {
        return Err(spec_error("bundle needs cameras and points"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let intrinsics = Intrinsics {
        fx: 525.0,
        fy: 525.0,
        cx: 320.0,
        cy: 240.0,
    };
    let planes = vec![
        Plane::new(Vector3::new(0.0, 0.0, 1.0), -5.0)?,
        Plane::new(Vector3::new(0.0, -1.0, 0.0), 1.0)?,
    ];
    let mut points = Vec::new();
    let mut associations = Vec::new();
    for _ in 0..spec.points_per_plane {
        associations.push((points.len(), 0));
        points.push(Point3::new(rng.random_range(-2.0..2.0), rng.random_range(-1.5..1.0), 5.0));
    }
    for _ in 0..spec.points_per_plane {
        associations.push((points.len(), 1));
        points.push(Point3::new(rng.random_range(-1.5..1.5), 1.0, rng.random_range(3.0..5.0)));
    }
    let cameras: Vec<Isometry3<f64>> = (0..spec.cameras)
        .map(|i| {
            let c = Vector3::new(0.25 * i as f64, -0.05 * i as f64, 0.1 * i as f64);
            let r = UnitQuaternion::from_scaled_axis(Vector3::new(0.01 * i as f64, -0.03 * i as f64, 0.005 * i as f64));
            Isometry3::from_parts((-(r * c)).into(), r)
        })
        .collect();
    let noise = Normal::new(0.0, spec.pixel_noise.max(0.0)).map_err(|e| spec_error(e.to_string()))?;
    let mut observations = Vec::new();
    for (c, cam) in cameras.iter().enumerate() {
        for (p, v) in points.iter().enumerate() {
            let Some(px) = intrinsics.project(&(cam * v)) else {
                continue;
            };
            observations.push(Observation {
                camera: c,
                point: p,
                pixel: Point2::new(px.x + noise.sample(&mut rng), px.y + noise.sample(&mut rng)),
            });
        }
    }
    let truth = Bundle {
        intrinsics,
        cameras,
        points,
        planes,
        observations,
        associations,
    };
    truth.validate()?;

    let depth = truth.points.iter().map(|p| p.z).sum::<f64>() / truth.points.len() as f64;
    let mut init = truth.clone();
    for cam in init.cameras.iter_mut().skip(1) {
        let rot = UnitQuaternion::from_scaled_axis(random_unit(&mut rng) * spec.rotation_deg.to_radians());
        let shift = random_unit(&mut rng) * spec.translation_fraction * depth;
        cam.rotation = rot * cam.rotation;
        cam.translation.vector += shift;
    }
    for p in init.points.iter_mut() {
        *p += Vector3::new(
            gaussian(&mut rng, spec.point_noise),
            gaussian(&mut rng, spec.point_noise),
            gaussian(&mut rng, spec.point_noise),
        );
    }
    for pl in init.planes.iter_mut() {
        let tilt = UnitQuaternion::from_scaled_axis(random_unit(&mut rng) * spec.rotation_deg.to_radians());
        *pl = Plane::new(tilt * pl.normal, pl.offset + gaussian(&mut rng, spec.point_noise))?;
    }
    Ok((truth, init))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_single_plane_is_exact() {
        let mut spec = two_plane_spec(200, 0.0, 0.0, 0.0, 1);
        spec.planes.truncate(1);
        spec.planes[0].origin = [0.3, -0.2, 1.5];
        spec.planes[0].axis_v = [0.0, 0.6, 0.8];
        let scene = synth_planes(&spec).unwrap();
        assert_eq!(scene.points.len(), 200);
        for p in &scene.points {
            assert!(scene.planes[0].distance(&p.position) < 1e-12);
        }
    }

    #[test]
    fn leak_count_matches_ledger() {
        let scene = synth_planes(&two_plane_spec(400, 0.01, 0.1, 0.3, 9)).unwrap();
        let wrong: Vec<usize> = scene
            .points
            .iter()
            .enumerate()
            .filter(|(i, p)| scene.truth_labels[*i].is_some() && p.prior_label != scene.truth_labels[*i])
            .map(|(i, _)| i)
            .collect();
        let expected: usize = scene
            .ledger
            .boundary_sizes
            .iter()
            .map(|&(_, _, b)| (0.3 * b as f64).floor() as usize)
            .sum();
        assert!(expected > 0);
        assert_eq!(wrong.len(), expected);
        assert_eq!(scene.ledger.leaks.len(), expected);
        let mut ledger_points: Vec<usize> = scene.ledger.leaks.iter().map(|l| l.point).collect();
        ledger_points.sort_unstable();
        assert_eq!(ledger_points, wrong);
    }

    #[test]
    fn outlier_fraction_and_labels() {
        let scene = synth_planes(&two_plane_spec(450, 0.01, 0.1, 0.0, 3)).unwrap();
        let outliers = scene.truth_labels.iter().filter(|l| l.is_none()).count();
        assert_eq!(outliers, 100);
        assert!(scene.points.iter().all(|p| p.prior_label.is_some()));
    }

    #[test]
    fn same_seed_same_scene() {
        let spec = two_plane_spec(100, 0.01, 0.2, 0.3, 5);
        assert_eq!(synth_planes(&spec).unwrap(), synth_planes(&spec).unwrap());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = two_plane_spec(10, 0.0, 0.0, 0.0, 1);
        spec.planes.clear();
        assert!(synth_planes(&spec).is_err());
        let mut spec = two_plane_spec(10, -1.0, 0.0, 0.0, 1);
        assert!(synth_planes(&spec).is_err());
        spec.noise_sigma = 0.0;
        spec.mask.leak_fraction = 1.5;
        assert!(synth_planes(&spec).is_err());
    }

    #[test]
    fn unlabeled_fraction_drops_labels() {
        let mut spec = two_plane_spec(100, 0.0, 0.0, 0.0, 2);
        spec.mask.unlabeled_fraction = 0.25;
        let scene = synth_planes(&spec).unwrap();
        assert_eq!(scene.points.iter().filter(|p| p.prior_label.is_none()).count(), 50);
    }

    #[test]
    fn homography_scene_is_consistent() {
        let spec = HomographySceneSpec {
            image_size: [640.0, 480.0],
            regions: vec![RegionSpec {
                rect: [0.0, 0.0, 320.0, 480.0],
                homography: [1.1, 0.02, 5.0, -0.01, 1.05, 3.0, 1e-4, 0.0, 1.0],
                points: 100,
            }],
            noise_sigma: 0.0,
            outlier_fraction: 0.0,
            mask: MaskCorruption::default(),
            seed: 4,
        };
        let scene = synth_homographies(&spec).unwrap();
        for c in &scene.matches {
            assert!(seqgc::estimators::ste(&scene.homographies[0], c) < 1e-9);
        }
    }

    #[test]
    fn bundle_perturbation_leaves_gauge_camera() {
        let (truth, init) = synth_bundle(&BundleSpec::default()).unwrap();
        assert_eq!(truth.points.len(), 120);
        assert_eq!(truth.observations.len(), 480);
        assert_eq!(truth.cameras[0], init.cameras[0]);
        let angle = truth.cameras[1].rotation.angle_to(&init.cameras[1].rotation).to_degrees();
        assert!((angle - 1.0).abs() < 1e-9);
    }
}
