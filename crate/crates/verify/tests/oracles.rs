use hypmap_core::geometry::{exp_map, log_map, parallel_transport, HPoint, Isometry, TangentVec};
use hypmap_verify::suites::{select, CriterionId};
use hypmap_verify::{
    first_variation, fit_iteration_profile, numerical_tension, pair_second_variation, quadrilateral_residual,
    scaling_report, MeanValueMap, PairVariation, Table, TENSION_STEP,
};

fn at(base: HPoint, x: f64, y: f64) -> HPoint {
    exp_map(&TangentVec::project(base, [x, y, 0.0]))
}

#[test]
fn degenerate_quadrilateral_identity_is_exact() {
    let a = HPoint::ORIGIN;
    let b = at(a, 1.1, 0.2);
    assert!(quadrilateral_residual(&a, &b, &b, &a).unwrap() <= 1e-12);
    assert!(quadrilateral_residual(&a, &a, &b, &b).is_err());
}

#[test]
fn quadrilaterals_with_obtuse_and_reflex_angles() {
    let a = HPoint::ORIGIN;
    let b = at(a, 1.5, 0.0);
    for (c, d) in [(at(a, 1.0, 1.2), at(a, -0.8, 1.5)), (at(a, 2.5, -1.0), at(a, -1.5, -0.4)), (at(a, 0.2, 0.1), at(a, 1.9, 1.9))] {
        assert!(quadrilateral_residual(&a, &b, &c, &d).unwrap() <= 1e-9);
    }
}

#[test]
fn transported_equal_vectors_have_zero_lower_bound() {
    let a = at(HPoint::ORIGIN, -0.4, 0.3);
    let b = at(HPoint::ORIGIN, 1.2, -0.5);
    let v = TangentVec::project(b, [0.3, 0.8, 0.0]);
    let u = parallel_transport(&v, &a);
    let s = pair_second_variation(&PairVariation::new(a, b, u, v).unwrap());
    assert!(s.lower_bound.abs() <= 1e-20);
    assert!(s.analytic >= 0.0);
    assert!((s.analytic - s.finite_diff).abs() <= 1e-5 * s.analytic.max(1.0));
}

#[test]
fn perpendicular_variation_matches_the_closed_form() {
    let d: f64 = 1.3;
    let a = HPoint::ORIGIN;
    let b = at(a, d, 0.0);
    // both vectors perpendicular to AB on the same side, equal norms
    let u = TangentVec::project(a, [0.0, 0.5, 0.0]);
    let v = parallel_transport(&TangentVec::project(a, [0.0, 0.5, 0.0]), &b);
    let s = pair_second_variation(&PairVariation::new(a, b, u, v).unwrap());
    let closed = 2.0 * 0.25 * d * (d / 2.0).tanh();
    assert!((s.analytic - closed).abs() <= 1e-12, "{} vs {closed}", s.analytic);
    assert!((s.finite_diff - closed).abs() <= 1e-5 * closed.max(1.0));
}

#[test]
fn moving_toward_the_other_end_shrinks_the_distance() {
    let a = at(HPoint::ORIGIN, 0.3, 0.7);
    let b = at(HPoint::ORIGIN, -1.0, 0.2);
    let dir = log_map(&a, &b);
    let u = dir.scaled(0.6 / dir.norm());
    let f = first_variation(&PairVariation::new(a, b, u, TangentVec::zero(b)).unwrap());
    let d = dir.norm();
    assert!((f.energy_analytic + d * 0.6).abs() <= 1e-12);
    assert!(f.discrepancy() <= 1e-6);
    let zero = first_variation(&PairVariation::new(a, b, TangentVec::zero(a), TangentVec::zero(b)).unwrap());
    assert_eq!(zero.energy_analytic, 0.0);
    assert!(zero.discrepancy() <= 1e-12);
}

#[test]
fn variation_rejects_misplaced_vectors() {
    let a = HPoint::ORIGIN;
    let b = at(a, 1.0, 0.0);
    assert!(PairVariation::new(a, b, TangentVec::zero(b), TangentVec::zero(b)).is_err());
}

#[test]
fn scaling_fit_recovers_a_power_law() {
    let radii = vec![0.2, 0.14, 0.1, 0.07, 0.05];
    let values: Vec<f64> = radii.iter().map(|r: &f64| 3.0 * r.powi(4)).collect();
    let s = scaling_report(radii, values);
    assert!((s.slope - 4.0).abs() < 1e-12 && (s.intercept - 3f64.ln()).abs() < 1e-12);
    assert!(!s.dropped_largest);
}

#[test]
fn profile_fit_recovers_its_coefficients() {
    let ts: [f64; 5] = [0.01, 0.02, 0.03, 0.04, 0.05];
    let ns: Vec<f64> = ts.iter().map(|t| -50.0 / (1.0 - 4.0 * t).ln()).collect();
    let (c1, c2, r2) = fit_iteration_profile(&ts, &ns);
    assert!((c1 - 50.0).abs() < 1e-3 * 50.0 && (c2 - 4.0).abs() < 1e-3 * 4.0, "{c1} {c2}");
    assert!(r2 > 0.999_999);
}

#[test]
fn isometries_have_no_tension() {
    let x = HPoint::from_uhp(0.3, 1.2);
    let t = numerical_tension(|p| MeanValueMap::Isometry.apply(p), &x, TENSION_STEP);
    assert!(t.norm() < 1e-6);
    let shear = numerical_tension(|p| MeanValueMap::Shear.apply(p), &x, TENSION_STEP);
    assert!(shear.norm() > 1e-2);
    let g = Isometry::translation(0.5);
    assert!(numerical_tension(|p| g.apply(p), &x, TENSION_STEP).norm() < 1e-6);
}

#[test]
fn tables_align_right() {
    let mut t = Table::new(&["ell", "n"]);
    t.push(vec!["2.5".into(), "12345".into()]);
    t.push(vec!["0.2".into(), "7".into()]);
    assert_eq!(t.render(), "ell      n\n2.5  12345\n0.2      7\n");
}

#[test]
fn suite_selectors() {
    assert_eq!(select("all").unwrap().len(), CriterionId::ALL.len());
    assert_eq!(select("geometry").unwrap(), vec![CriterionId::Quadrilateral, CriterionId::SecondVariation]);
    for id in CriterionId::ALL {
        assert_eq!(select(id.name()).unwrap(), vec![id]);
    }
    assert!(select("nope").is_none());
}
