use std::fmt::Write as _;

use nalgebra::{Isometry3, Point2, Point3, Quaternion, Translation3, UnitQuaternion, Vector3};

use crate::error::{domain, Error, Result};
use crate::geometry::Plane;

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn project(&self, x: &Point3<f64>) -> Option<Point2<f64>> {
        if x.z <= 0.0 {
            return None;
        }
        Some(Point2::new(self.fx * x.x / x.z + self.cx, self.fy * x.y / x.z + self.cy))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub camera: usize,
    pub point: usize,
    pub pixel: Point2<f64>,
}

/// Cameras, points, planes and the measurements tying them together.
/// Camera poses map world coordinates into the camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub intrinsics: Intrinsics,
    pub cameras: Vec<Isometry3<f64>>,
    pub points: Vec<Point3<f64>>,
    pub planes: Vec<Plane>,
    pub observations: Vec<Observation>,
    /// `(point, plane)` pairs.
    pub associations: Vec<(usize, usize)>,
}

impl Bundle {
    pub fn validate(&self) -> Result<()> {
        let k = &self.intrinsics;
        if ![k.fx, k.fy, k.cx, k.cy].iter().all(|v| v.is_finite()) || k.fx <= 0.0 || k.fy <= 0.0 {
            return Err(domain("focal lengths must be positive and intrinsics finite"));
        }
        if self.cameras.is_empty() {
            return Err(domain("bundle has no cameras"));
        }
        for (i, o) in self.observations.iter().enumerate() {
            if o.camera >= self.cameras.len() || o.point >= self.points.len() {
                return Err(domain(format!(
                    "observation {i} references camera {} / point {} out of range",
                    o.camera, o.point
                )));
            }
        }
        for &(p, k) in &self.associations {
            if p >= self.points.len() || k >= self.planes.len() {
                return Err(domain(format!("association ({p}, {k}) out of range")));
            }
        }
        for (k, pl) in self.planes.iter().enumerate() {
            if (pl.normal.norm() - 1.0).abs() > 1e-6 {
                return Err(domain(format!("plane {k} normal is not unit length")));
            }
        }
        Ok(())
    }

    /// Writes the section-based text format read by [`Bundle::from_text`].
    pub fn to_text(&self) -> String {
        let k = &self.intrinsics;
        let mut out = String::new();
        let _ = writeln!(out, "INTRINSICS");
        let _ = writeln!(out, "{} {} {} {}", k.fx, k.fy, k.cx, k.cy);
        let _ = writeln!(out, "CAMERAS {}", self.cameras.len());
        for c in &self.cameras {
            let q = c.rotation.quaternion();
            let t = c.translation.vector;
            let _ = writeln!(out, "{} {} {} {} {} {} {}", q.w, q.i, q.j, q.k, t.x, t.y, t.z);
        }
        let _ = writeln!(out, "POINTS {}", self.points.len());
        for p in &self.points {
            let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
        }
        let _ = writeln!(out, "PLANES {}", self.planes.len());
        for p in &self.planes {
            let _ = writeln!(out, "{} {} {} {}", p.normal.x, p.normal.y, p.normal.z, p.offset);
        }
        let _ = writeln!(out, "OBSERVATIONS {}", self.observations.len());
        for o in &self.observations {
            let _ = writeln!(out, "{} {} {} {}", o.camera, o.point, o.pixel.x, o.pixel.y);
        }
        let _ = writeln!(out, "ASSOCIATIONS {}", self.associations.len());
        for (p, k) in &self.associations {
            let _ = writeln!(out, "{p} {k}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        lines.header("INTRINSICS", false)?;
        let k: [f64; 4] = lines.record()?;
        let intrinsics = Intrinsics {
            fx: k[0],
            fy: k[1],
            cx: k[2],
            cy: k[3],
        };
        let n = lines.header("CAMERAS", true)?;
        let mut cameras = Vec::with_capacity(n);
        for _ in 0..n {
            let v: [f64; 7] = lines.record()?;
            let q = Quaternion::new(v[0], v[1], v[2], v[3]);
            if q.norm() < 1e-12 {
                return Err(lines.error("zero quaternion"));
            }
            let rotation = if (q.norm() - 1.0).abs() < 1e-12 {
                UnitQuaternion::new_unchecked(q)
            } else {
                UnitQuaternion::from_quaternion(q)
            };
            cameras.push(Isometry3::from_parts(Translation3::new(v[4], v[5], v[6]), rotation));
        }
        let n = lines.header("POINTS", true)?;
        let mut points = Vec::with_capacity(n);
        for _ in 0..n {
            let v: [f64; 3] = lines.record()?;
            points.push(Point3::new(v[0], v[1], v[2]));
        }
        let n = lines.header("PLANES", true)?;
        let mut planes = Vec::with_capacity(n);
        for _ in 0..n {
            let v: [f64; 4] = lines.record()?;
            let n = Vector3::new(v[0], v[1], v[2]);
            // already-unit normals are kept bit-exact so that text round-trips
            let plane = if (n.norm() - 1.0).abs() < 1e-12 {
                Plane::from_raw(n, v[3]).canonical()
            } else {
                Plane::new(n, v[3]).map_err(|e| lines.error(&e.to_string()))?
            };
            planes.push(plane);
        }
        let n = lines.header("OBSERVATIONS", true)?;
        let mut observations = Vec::with_capacity(n);
        for _ in 0..n {
            let v: [f64; 4] = lines.record()?;
            observations.push(Observation {
                camera: lines.index(v[0])?,
                point: lines.index(v[1])?,
                pixel: Point2::new(v[2], v[3]),
            });
        }
        let n = lines.header("ASSOCIATIONS", true)?;
        let mut associations = Vec::with_capacity(n);
        for _ in 0..n {
            let v: [f64; 2] = lines.record()?;
            associations.push((lines.index(v[0])?, lines.index(v[1])?));
        }
        if let Some((line, _)) = lines.next_nonempty() {
            return Err(Error::Parse {
                line,
                message: "unexpected trailing content".into(),
            });
        }
        let bundle = Self {
            intrinsics,
            cameras,
            points,
            planes,
            observations,
            associations,
        };
        bundle.validate()?;
        Ok(bundle)
    }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate(),
            line: 0,
        }
    }

    fn next_nonempty(&mut self) -> Option<(usize, &'a str)> {
        for (i, l) in self.inner.by_ref() {
            let l = l.trim();
            if !l.is_empty() && !l.starts_with('#') {
                self.line = i + 1;
                return Some((i + 1, l));
            }
        }
        None
    }

    fn error(&self, message: &str) -> Error {
        Error::Parse {
            line: self.line,
            message: message.to_string(),
        }
    }

    fn header(&mut self, name: &str, counted: bool) -> Result<usize> {
        let Some((_, l)) = self.next_nonempty() else {
            return Err(self.error(&format!("missing {name} section")));
        };
        let mut parts = l.split_whitespace();
        if parts.next() != Some(name) {
            return Err(self.error(&format!("expected {name} header, found `{l}`")));
        }
        if !counted {
            return Ok(0);
        }
        parts
            .next()
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| self.error(&format!("{name} header needs a count")))
    }

    fn record<const N: usize>(&mut self) -> Result<[f64; N]> {
        let Some((_, l)) = self.next_nonempty() else {
            return Err(self.error("unexpected end of input"));
        };
        let fields: Vec<&str> = l.split_whitespace().collect();
        if fields.len() != N {
            return Err(self.error(&format!("expected {N} fields, found {}", fields.len())));
        }
        let mut out = [0.0f64; N];
        for (o, f) in out.iter_mut().zip(&fields) {
            *o = f.parse().map_err(|_| self.error(&format!("`{f}` is not a number")))?;
            if !o.is_finite() {
                return Err(self.error(&format!("`{f}` is not finite")));
            }
        }
        Ok(out)
    }

    fn index(&self, v: f64) -> Result<usize> {
        if v >= 0.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(self.error(&format!("`{v}` is not an index")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Bundle {
        Bundle {
            intrinsics: Intrinsics {
                fx: 500.0,
                fy: 510.0,
                cx: 320.0,
                cy: 240.0,
            },
            cameras: vec![
                Isometry3::identity(),
                Isometry3::new(Vector3::new(0.1, -0.2, 0.05), Vector3::new(0.01, 0.02, -0.03)),
            ],
            points: vec![Point3::new(0.1, 0.2, 3.0), Point3::new(-0.4, 0.1, 2.5)],
            planes: vec![Plane::new(Vector3::new(0.0, 0.3, -1.0), 2.9).unwrap()],
            observations: vec![
                Observation {
                    camera: 0,
                    point: 0,
                    pixel: Point2::new(336.7, 274.0),
                },
                Observation {
                    camera: 1,
                    point: 1,
                    pixel: Point2::new(240.125, 260.5),
                },
            ],
            associations: vec![(0, 0), (1, 0)],
        }
    }

    #[test]
    fn text_round_trip() {
        let b = tiny();
        let text = b.to_text();
        let back = Bundle::from_text(&text).unwrap();
        assert_eq!(back.to_text(), text);
        assert_eq!(back.points, b.points);
        assert_eq!(back.observations, b.observations);
        assert!((back.cameras[1].rotation.angle_to(&b.cameras[1].rotation)) < 1e-15);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let text = tiny().to_text().replace("0.1 0.2 3", "0.1 x 3");
        match Bundle::from_text(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("{other:?}"),
        }
        let text = tiny().to_text().replace("ASSOCIATIONS 2\n0 0", "ASSOCIATIONS 2\n0 4");
        assert!(matches!(Bundle::from_text(&text), Err(Error::Domain(_))));
    }
}
