use nalgebra::{Point2, Point3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqgc::estimators::{fit_plane_lsq, ste};
use seqgc::mincut::{min_cut, PottsEdge, ProblemGraph};
use seqgc::neighbors::{grid_graph, radius_graph};
use seqgc::planemap::{project_onto_plane, should_merge};
use seqgc::{plane_to_spherical, spherical_to_plane, Correspondence, Homography, MapPoint, Plane};

fn exhaustive(g: &ProblemGraph) -> f64 {
    let n = g.node_count();
    (0u32..1 << n)
        .map(|mask| {
            let labels: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            g.energy(&labels)
        })
        .fold(f64::INFINITY, f64::min)
}

fn graph_strategy() -> impl Strategy<Value = ProblemGraph> {
    (1usize..=12).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0f64..1.0, n),
            prop::collection::vec(0.0f64..1.0, n),
            prop::collection::vec((0..n, 0..n, 0.0f64..1.5), 0..3 * n),
        )
            .prop_map(|(ci, co, raw)| {
                let edges = raw
                    .into_iter()
                    .filter(|(a, b, _)| a != b)
                    .map(|(a, b, penalty)| PottsEdge { a, b, penalty })
                    .collect();
                ProblemGraph::new(ci, co, edges).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn min_cut_matches_exhaustive_minimum(g in graph_strategy()) {
        let cut = min_cut(&g);
        let best = exhaustive(&g);
        prop_assert!((cut.energy - best).abs() <= 1e-9 * best.max(1.0));
        prop_assert!((g.energy(&cut.labels) - cut.energy).abs() <= 1e-9 * best.max(1.0));
    }

    #[test]
    fn radius_graph_matches_brute_force(
        coords in prop::collection::vec((0u8..20, 0u8..20, 0u8..5), 1..300),
        r in 0.05f64..0.3,
    ) {
        // coarse lattice coordinates produce many exact-distance ties
        let points: Vec<MapPoint> = coords
            .iter()
            .enumerate()
            .map(|(i, &(x, y, z))| MapPoint::new(i, Point3::new(x as f64 * 0.05, y as f64 * 0.05, z as f64 * 0.05)).unwrap())
            .collect();
        let g = radius_graph(&points, r, 1.0).unwrap();
        let mut got: Vec<(usize, usize)> = g.edges().iter().map(|e| (e.a.min(e.b), e.a.max(e.b))).collect();
        got.sort_unstable();
        let mut want = Vec::new();
        for a in 0..points.len() {
            for b in a + 1..points.len() {
                if (points[a].position - points[b].position).norm() <= r {
                    want.push((a, b));
                }
            }
        }
        prop_assert_eq!(got, want);
    }

    #[test]
    fn grid_graph_matches_cell_adjacency(
        coords in prop::collection::vec((0u16..700, 0u16..700), 1..200),
        shift in 0u16..=1,
    ) {
        let build = |offset: f64| -> Vec<Correspondence> {
            coords
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| {
                    let p = Point2::new(x as f64 + 0.5 + offset, y as f64 + 0.5 + offset);
                    Correspondence::new(i, p, p).unwrap()
                })
                .collect()
        };
        let base = build(0.0);
        let g = grid_graph(&base, (800.0, 800.0), 8, 1.0).unwrap();
        let cell = |c: &Correspondence| ((c.ref_point.x / 100.0).floor() as i64, (c.ref_point.y / 100.0).floor() as i64);
        let mut want = Vec::new();
        for a in 0..base.len() {
            for b in a + 1..base.len() {
                let (ca, cb) = (cell(&base[a]), cell(&base[b]));
                if (ca.0 - cb.0).abs() <= 1 && (ca.1 - cb.1).abs() <= 1 {
                    want.push((a, b));
                }
            }
        }
        let mut got: Vec<(usize, usize)> = g.edges().iter().map(|e| (e.a, e.b)).collect();
        got.sort_unstable();
        prop_assert_eq!(&got, &want);

        // shifting every point by a whole cell keeps the graph
        let moved = grid_graph(&build(100.0 * shift as f64), (800.0, 800.0), 8, 1.0).unwrap();
        prop_assert_eq!(moved.edges(), g.edges());
    }

    #[test]
    fn projection_lands_on_plane_and_is_idempotent(
        n in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
        d in -5.0f64..5.0,
        v in (-10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0),
    ) {
        let normal = Vector3::new(n.0, n.1, n.2);
        prop_assume!(normal.norm() > 1e-3);
        let plane = Plane::new(normal, d).unwrap();
        let p = MapPoint::new(0, Point3::new(v.0, v.1, v.2)).unwrap();
        let once = project_onto_plane(&plane, &p);
        let twice = project_onto_plane(&plane, &once);
        prop_assert!(plane.distance(&once.position) < 1e-9);
        prop_assert!((twice.position - once.position).norm() < 1e-9);
        // the move is along the normal
        let step = once.position - p.position;
        prop_assert!(step.cross(&plane.normal).norm() < 1e-9 * (1.0 + step.norm()));
    }

    #[test]
    fn should_merge_is_symmetric(
        a in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -2.0f64..2.0),
        b in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -2.0f64..2.0),
        t_theta in 0.0f64..1.0,
        t_d in 0.0f64..1.0,
        literal in any::<bool>(),
    ) {
        let na = Vector3::new(a.0, a.1, a.2);
        let nb = Vector3::new(b.0, b.1, b.2);
        prop_assume!(na.norm() > 1e-3 && nb.norm() > 1e-3);
        let pa = Plane::new(na, a.3).unwrap();
        let pb = Plane::from_raw(nb.normalize(), b.3);
        prop_assert_eq!(should_merge(&pa, &pb, t_theta, t_d, literal), should_merge(&pb, &pa, t_theta, t_d, literal));
    }

    #[test]
    fn lsq_plane_is_not_beaten_by_perturbations(
        pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -0.1f64..0.1), 5..40),
        tilt in (-0.05f64..0.05, -0.05f64..0.05, -0.05f64..0.05),
        shift in -0.05f64..0.05,
    ) {
        let points: Vec<MapPoint> = pts
            .iter()
            .enumerate()
            .map(|(i, &(x, y, z))| MapPoint::new(i, Point3::new(x, y, 0.3 * x + z)).unwrap())
            .collect();
        let refs: Vec<&MapPoint> = points.iter().collect();
        let Ok(plane) = fit_plane_lsq(&refs) else { return Ok(()); };
        let sse = |p: &Plane| points.iter().map(|v| p.signed_distance(&v.position).powi(2)).sum::<f64>();
        let other = Plane::new(plane.normal + Vector3::new(tilt.0, tilt.1, tilt.2), plane.offset + shift).unwrap();
        prop_assert!(sse(&plane) <= sse(&other) + 1e-12);
    }

    #[test]
    fn ste_is_symmetric_under_inversion(
        r in (0.0f64..640.0, 0.0f64..480.0),
        c in (0.0f64..640.0, 0.0f64..480.0),
    ) {
        let h = Homography::new(nalgebra::Matrix3::new(1.1, 0.05, 10.0, -0.02, 0.95, -4.0, 1e-4, 5e-5, 1.0)).unwrap();
        let m = Correspondence::new(0, Point2::new(r.0, r.1), Point2::new(c.0, c.1)).unwrap();
        let (a, b) = (ste(&h, &m), ste(&h.inverse().unwrap(), &m.swapped()));
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }
}

#[test]
fn spherical_round_trip_over_random_normals() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut normals: Vec<Vector3<f64>> = (0..1000)
        .map(|_| {
            Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
        .filter(|n| n.norm() > 1e-3)
        .collect();
    // poles and the azimuth seam
    normals.extend([Vector3::z(), -Vector3::z(), -Vector3::x(), Vector3::new(-1.0, -0.0, 0.2)]);
    for n in normals {
        let plane = Plane::new(n, rng.random_range(-3.0..3.0)).unwrap();
        let s = plane_to_spherical(&plane).unwrap();
        assert!(s.azimuth > -std::f64::consts::PI && s.azimuth <= std::f64::consts::PI);
        assert!(s.elevation.abs() <= std::f64::consts::FRAC_PI_2);
        let back = spherical_to_plane(&s);
        assert!((back.normal - plane.normal).norm() < 1e-12, "{n:?}");
        assert_eq!(back.offset, plane.offset);
    }
}
