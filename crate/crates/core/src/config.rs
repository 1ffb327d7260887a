//! Fitting configuration and map-scale adaptive thresholds.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::geometry::MapPoint;

/// All tunables of the fitting and refinement pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Spatial-coherence weight of the homography energy.
    pub lambda: f64,
    /// Spatial-coherence weight of the plane energy.
    pub lambda_prime: f64,
    /// Symmetric transfer error inlier threshold (px).
    pub ste_threshold: f64,
    /// Mean inlier STE a homography must reach to be accepted (px).
    pub homography_residual_threshold: f64,
    pub confidence: f64,
    pub grid_cells_per_axis: usize,
    /// Outer iteration cap `N`.
    pub max_iterations: usize,
    /// Upper and lower bounds of the adaptive inner iteration count.
    pub max_gc_iterations: usize,
    pub min_gc_iterations: usize,
    /// Point-plane inlier distance threshold (map units).
    pub eps_d: f64,
    /// Plane residual threshold (map units).
    pub eps_pi: f64,
    /// Normal parallelism threshold for merging, `|cos θ| > t_theta`.
    pub t_theta: f64,
    /// Offset proximity threshold for merging (map units).
    pub t_d: f64,
    /// Neighborhood radius of the 3-D graph (map units).
    pub radius: f64,
    /// Planes with fewer supporting points are weak.
    pub min_plane_support: usize,
    pub pairwise_weight: f64,
    /// Run the graph-cut local optimization on new so-far-the-best models.
    pub local_optimization: bool,
    pub merge_rounds: usize,
    pub merge_sample_fraction: f64,
    /// Use the sign-only offset comparison `|d_a/|d_a| - d_b/|d_b||` instead
    /// of the canonical offset gap.
    pub literal_offset_test: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        let eps_d = 0.02;
        Self {
            lambda: 0.975,
            lambda_prime: 0.6,
            ste_threshold: 2.0,
            homography_residual_threshold: 1.0,
            confidence: 0.99,
            grid_cells_per_axis: 8,
            max_iterations: 50,
            max_gc_iterations: 10_000,
            min_gc_iterations: 50,
            eps_d,
            eps_pi: 0.01,
            t_theta: 0.8,
            t_d: 10.0 * eps_d,
            radius: 2.0 * eps_d,
            min_plane_support: 20,
            pairwise_weight: 1.0,
            local_optimization: true,
            merge_rounds: 50,
            merge_sample_fraction: 0.6,
            literal_offset_test: false,
        }
    }
}

/// Mirror of [`FitConfig`] with every key optional, used for file parsing.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    lambda: Option<f64>,
    lambda_prime: Option<f64>,
    ste_threshold: Option<f64>,
    homography_residual_threshold: Option<f64>,
    confidence: Option<f64>,
    grid_cells_per_axis: Option<usize>,
    max_iterations: Option<usize>,
    max_gc_iterations: Option<usize>,
    min_gc_iterations: Option<usize>,
    eps_d: Option<f64>,
    eps_pi: Option<f64>,
    t_theta: Option<f64>,
    t_d: Option<f64>,
    radius: Option<f64>,
    min_plane_support: Option<usize>,
    pairwise_weight: Option<f64>,
    local_optimization: Option<bool>,
    merge_rounds: Option<usize>,
    merge_sample_fraction: Option<f64>,
    literal_offset_test: Option<bool>,
}

impl FitConfig {
    /// Parses flat `key = value` lines. Missing keys take defaults; when
    /// `eps_d` is given without `t_d` or `radius`, those follow `eps_d`.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut cfg = Self::default();
        macro_rules! take {
            ($($field:ident),*) => { $( if let Some(v) = file.$field { cfg.$field = v; } )* };
        }
        take!(
            lambda,
            lambda_prime,
            ste_threshold,
            homography_residual_threshold,
            confidence,
            grid_cells_per_axis,
            max_iterations,
            max_gc_iterations,
            min_gc_iterations,
            eps_d,
            eps_pi,
            t_theta,
            min_plane_support,
            pairwise_weight,
            local_optimization,
            merge_rounds,
            merge_sample_fraction,
            literal_offset_test
        );
        cfg.t_d = file.t_d.unwrap_or(10.0 * cfg.eps_d);
        cfg.radius = file.radius.unwrap_or(2.0 * cfg.eps_d);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Writes every field as a flat `key = value` line.
    pub fn to_kv_string(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(0.0..=1.0).contains(&self.lambda) || !(0.0..=1.0).contains(&self.lambda_prime) {
            return bad("lambda and lambda_prime must lie in [0, 1]");
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return bad("confidence must lie in (0, 1)");
        }
        let positive = [
            self.ste_threshold,
            self.homography_residual_threshold,
            self.eps_d,
            self.eps_pi,
            self.t_theta,
            self.t_d,
            self.radius,
            self.pairwise_weight,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("all thresholds and weights must be strictly positive");
        }
        if self.t_theta >= 1.0 {
            return bad("t_theta must be below 1");
        }
        if self.grid_cells_per_axis == 0 || self.max_iterations == 0 || self.max_gc_iterations == 0 {
            return bad("grid_cells_per_axis and iteration caps must be at least 1");
        }
        if self.min_gc_iterations > self.max_gc_iterations {
            return bad("min_gc_iterations exceeds max_gc_iterations");
        }
        if !(self.merge_sample_fraction > 0.0 && self.merge_sample_fraction <= 1.0) {
            return bad("merge_sample_fraction must lie in (0, 1]");
        }
        Ok(())
    }

    /// Multiplies the map-unit thresholds (`eps_d`, `eps_pi`, `t_d`,
    /// `radius`) by `scale`.
    pub fn scaled(&self, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(domain(format!("map scale must be positive, got {scale}")));
        }
        Ok(Self {
            eps_d: self.eps_d * scale,
            eps_pi: self.eps_pi * scale,
            t_d: self.t_d * scale,
            radius: self.radius * scale,
            ..self.clone()
        })
    }
}

/// Monocular mode: thresholds follow the keyframe's median depth.
pub fn scale_thresholds_mono(cfg: &FitConfig, median_depth: f64) -> Result<FitConfig> {
    if !(median_depth > 0.0) {
        return Err(domain(format!("median depth must be positive, got {median_depth}")));
    }
    cfg.scaled(median_depth)
}

/// RGB-D mode: the map scale is the mean landmark distance from the origin.
pub fn scale_thresholds_rgbd(cfg: &FitConfig, points: &[MapPoint]) -> Result<FitConfig> {
    if points.is_empty() {
        return Err(domain("cannot estimate map scale from an empty point set"));
    }
    let scale = points.iter().map(|p| p.position.coords.norm()).sum::<f64>() / points.len() as f64;
    cfg.scaled(scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;

    #[test]
    fn defaults_match_published_values() {
        let c = FitConfig::default();
        assert_eq!(c.lambda, 0.975);
        assert_eq!(c.lambda_prime, 0.6);
        assert_eq!(c.ste_threshold, 2.0);
        assert_eq!(c.confidence, 0.99);
        assert_eq!(c.grid_cells_per_axis, 8);
        assert_eq!(c.max_iterations, 50);
        assert_eq!(c.eps_d, 0.02);
        assert_eq!(c.eps_pi, 0.01);
        assert_eq!(c.t_theta, 0.8);
        assert_eq!(c.t_d, 10.0 * 0.02);
        assert_eq!(c.radius, 2.0 * 0.02);
        assert_eq!(c.min_plane_support, 20);
        assert_eq!(c.pairwise_weight, 1.0);
        c.validate().unwrap();
    }

    #[test]
    fn mono_scaling() {
        let c = FitConfig::default();
        assert_eq!(scale_thresholds_mono(&c, 1.0).unwrap(), c);
        let s = scale_thresholds_mono(&c, 2.0).unwrap();
        assert_eq!((s.eps_d, s.eps_pi, s.t_d, s.radius), (0.04, 0.02, 0.4, 0.08));
        assert_eq!(s.lambda, c.lambda);
        assert!(scale_thresholds_mono(&c, 0.0).is_err());
        assert!(scale_thresholds_mono(&c, -1.0).is_err());
    }

    #[test]
    fn rgbd_scaling() {
        let c = FitConfig::default();
        let unit = vec![
            MapPoint::new(0, Point3::new(1.0, 0.0, 0.0)).unwrap(),
            MapPoint::new(1, Point3::new(0.0, 0.0, -1.0)).unwrap(),
        ];
        assert_eq!(scale_thresholds_rgbd(&c, &unit).unwrap(), c);
        let pts = vec![
            MapPoint::new(0, Point3::new(3.0, 0.0, 0.0)).unwrap(),
            MapPoint::new(1, Point3::new(0.0, 1.0, 0.0)).unwrap(),
        ];
        assert_eq!(scale_thresholds_rgbd(&c, &pts).unwrap().eps_d, 0.04);
        assert!(scale_thresholds_rgbd(&c, &[]).is_err());
    }

    #[test]
    fn scaling_composes() {
        let c = FitConfig::default();
        let a = c.scaled(1.5).unwrap().scaled(4.0).unwrap();
        let b = c.scaled(6.0).unwrap();
        for (x, y) in [(a.eps_d, b.eps_d), (a.eps_pi, b.eps_pi), (a.t_d, b.t_d), (a.radius, b.radius)] {
            assert!((x - y).abs() <= 1e-15 * y);
        }
    }

    #[test]
    fn config_file() {
        let c = FitConfig::from_kv_str("# comment\neps_d = 0.05\nlambda = 0.5\n").unwrap();
        assert_eq!(c.eps_d, 0.05);
        assert_eq!(c.t_d, 0.5);
        assert_eq!(c.radius, 0.1);
        assert_eq!(c.lambda, 0.5);
        assert_eq!(c.eps_pi, 0.01);

        let err = FitConfig::from_kv_str("epsilon = 1").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(FitConfig::from_kv_str("lambda = 2.0").is_err());

        let round = FitConfig::from_kv_str(&c.to_kv_string()).unwrap();
        assert_eq!(round, c);
    }
}
