use hypmap_core::geometry::{exp_map, HPoint, TangentVec};
use hypmap_core::mesh::{
    extract_biweighted_graph, fan_triangulation, graph_statistics, max_min_angle_triangulation, min_angle,
    triangulate_polygon, word_token, BiweightedGraph, Edge, TriangulatedMesh,
};
use hypmap_core::polygon::{optimize_fundamental_polygon, recenter};
use hypmap_core::surface::{fn_to_representation, FnCoordinates, SurfaceGroup, Word};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn depth0(lengths: Vec<f64>, twists: Vec<f64>, steiner: usize) -> TriangulatedMesh {
    let g = SurfaceGroup::new(2).unwrap();
    let rho = fn_to_representation(&g, &FnCoordinates::new(lengths, twists)).unwrap();
    let poly = optimize_fundamental_polygon(&rho, &g.relator()).unwrap();
    let (rho, poly) = recenter(&rho, &poly, &g.relator()).unwrap();
    triangulate_polygon(&poly, &rho, steiner).unwrap()
}

fn symmetric(steiner: usize) -> TriangulatedMesh {
    depth0(vec![2.15; 3], vec![0.0; 3], steiner)
}

#[test]
fn polygon_without_steiner_points() {
    let m = symmetric(0);
    let (v, e, f) = m.counts();
    assert_eq!((v, f), (1, 4 * 2 - 2));
    assert_eq!(v as i64 - e as i64 + f as i64, -2);
    m.check_locally_cyclic().unwrap();
}

#[test]
fn euler_characteristic_survives_refinement() {
    let mut m = symmetric(1);
    for _ in 0..3 {
        assert_eq!(m.euler_characteristic(), -2);
        m.check_locally_cyclic().unwrap();
        let (v, e, f) = m.counts();
        let r = m.refine().unwrap();
        assert_eq!(r.counts(), (v + e, 2 * e + 3 * f, 4 * f));
        assert_eq!(r.depth, m.depth + 1);
        m = r;
    }
}

#[test]
fn vertex_weights_sum_to_the_surface_area() {
    let area = 2.0 * PI * 2.0;
    let mut m = depth0(vec![2.0, 2.0, 0.5], vec![-1.5, 2.0, 0.5], 1);
    let mut faces = m.counts().2;
    for _ in 0..3 {
        let g = extract_biweighted_graph(&m, true).unwrap();
        assert!((g.mu.iter().sum::<f64>() - area).abs() <= 1e-6);
        assert!((g.stats.area - area).abs() <= 1e-6);
        m = m.refine().unwrap();
        assert_eq!(m.counts().2, 4 * faces);
        faces = m.counts().2;
    }
}

#[test]
fn statistics_orderings() {
    let m = symmetric(1).refine_to(2).unwrap();
    let g = extract_biweighted_graph(&m, false).unwrap();
    let s = graph_statistics(&g).unwrap();
    assert!(s.omega_min <= s.omega_max);
    assert!(s.mu_min <= s.area / g.vertex_count() as f64);
    assert!(s.omega_min > 0.0);
    assert!(s.max_valence >= 6);
    let coarse = graph_statistics(&extract_biweighted_graph(&symmetric(1), true).unwrap()).unwrap();
    assert!(s.diameter >= coarse.diameter);
}

#[test]
fn symmetric_single_orbit_has_equal_weights() {
    // the depth-0 mesh without Steiner points has one vertex orbit; the
    // corner symmetry of the symmetric polygon pairs up edges
    let g = extract_biweighted_graph(&symmetric(0), true).unwrap();
    assert_eq!(g.vertex_count(), 1);
    assert!((g.mu[0] - 4.0 * PI).abs() <= 1e-8);
}

#[test]
fn toy_graph_diameter() {
    // a path 0 - 1 - 2 - 3 closed into a cycle: hop diameter 2
    let e = |a, b| Edge { a, b, word: Word::identity() };
    let g = BiweightedGraph::from_parts(2, vec![e(0, 1), e(1, 2), e(2, 3), e(3, 0)], vec![1.0; 4], vec![1.0; 4]).unwrap();
    assert_eq!(g.stats.diameter, 2);
    assert_eq!(g.stats.max_valence, 2);
    assert!((g.kernel(0) - 0.5).abs() < 1e-15);
    let path = BiweightedGraph::from_parts(2, vec![e(0, 1), e(1, 2), e(2, 3)], vec![1.0; 3], vec![1.0; 4]).unwrap();
    assert_eq!(path.stats.diameter, 3);
}

#[test]
fn disconnected_graph_is_rejected() {
    let e = |a, b| Edge { a, b, word: Word::identity() };
    assert!(BiweightedGraph::from_parts(2, vec![e(0, 1), e(2, 3)], vec![1.0; 2], vec![1.0; 4]).is_err());
}

fn random_convex_polygon(rng: &mut ChaCha8Rng) -> Vec<HPoint> {
    let n = rng.gen_range(5..12);
    let mut angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    angles.sort_by(f64::total_cmp);
    // vertices on one circle: always convex
    let r = rng.gen_range(0.3..2.0);
    angles
        .iter()
        .map(|t| {
            exp_map(&TangentVec { base: HPoint::ORIGIN, v: [r * t.cos(), r * t.sin(), 0.0] })
        })
        .collect()
}

#[test]
fn max_min_angle_beats_the_fan() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut done = 0;
    while done < 50 {
        let pts = random_convex_polygon(&mut rng);
        let Ok(best) = max_min_angle_triangulation(&pts) else { continue };
        assert_eq!(best.len(), pts.len() - 2);
        let fan = fan_triangulation(pts.len());
        let (g, f) = (min_angle(&pts, &best), min_angle(&pts, &fan));
        assert!(g >= f - 1e-12, "best {g} < fan {f} for {} vertices", pts.len());
        done += 1;
    }
}

#[test]
fn text_export() {
    let m = symmetric(1);
    let text = m.to_text();
    let mut lines = text.lines();
    let (v, e, f) = m.counts();
    assert_eq!(lines.next().unwrap(), format!("# mesh genus=2 depth=0 vertices={v} edges={e} faces={f}"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), v);
    let nbr_total: usize = rows.iter().map(|r| r.split_whitespace().count() - 4).sum();
    assert_eq!(nbr_total, 2 * e);
    for (i, r) in rows.iter().enumerate() {
        let fields: Vec<&str> = r.split_whitespace().collect();
        assert_eq!(fields[0], i.to_string());
        let c: Vec<f64> = fields[1..4].iter().map(|s| s.parse().unwrap()).collect();
        assert!((c[0] * c[0] + c[1] * c[1] - c[2] * c[2] + 1.0).abs() < 1e-9);
    }
    assert_eq!(word_token(&Word::identity()), "e");
    assert_eq!(word_token(&Word(vec![1, -4])), "1.-4");
}

#[test]
fn reference_mesh_matches_the_fixture() {
    let p = hypmap_core::pipeline::Pipeline::build(&hypmap_core::pipeline::RunConfig {
        depth: 0,
        ..hypmap_core::pipeline::RunConfig::reference()
    })
    .unwrap();
    let fixture = include_str!("fixtures/reference_depth0.mesh");
    let text = p.mesh.to_text();
    let (mut a, mut b) = (fixture.lines(), text.lines());
    assert_eq!(a.next(), b.next());
    for (x, y) in a.zip(b) {
        let (x, y): (Vec<&str>, Vec<&str>) = (x.split_whitespace().collect(), y.split_whitespace().collect());
        assert_eq!(x[0], y[0]);
        for k in 1..4 {
            let (u, v): (f64, f64) = (x[k].parse().unwrap(), y[k].parse().unwrap());
            assert!((u - v).abs() <= 1e-9 * (1.0 + u.abs()), "vertex {}: {u} vs {v}", x[0]);
        }
        assert_eq!(x[4..], y[4..], "neighbors of vertex {}", x[0]);
    }
    assert_eq!(fixture.lines().count(), text.lines().count());
}
