use hypmap_core::error::Error;
use hypmap_core::flow::Method;
use hypmap_core::geometry::dist;
use hypmap_core::mesh::VertexOrigin;
use hypmap_core::pipeline::{Pipeline, RunConfig};
use hypmap_core::surface::FnCoordinates;

#[test]
fn reference_configuration_builds() {
    let p = Pipeline::build(&RunConfig { depth: 1, ..RunConfig::reference() }).unwrap();
    assert_eq!(p.group.genus(), 2);
    assert_eq!(p.mesh.euler_characteristic(), -2);
    assert_eq!(p.initial.points.len(), p.mesh.reps.len());
    assert_eq!(p.problem.vertex_count(), p.graph.vertex_count());
    // the initial map sends the corner orbit to the target base point
    let corner = p.mesh.origins.iter().position(|o| *o == VertexOrigin::Corner).unwrap();
    assert!(dist(&p.initial.points[corner], &p.target_polygon.base) < 1e-12);
}

#[test]
fn config_json_round_trip_and_strictness() {
    let c = RunConfig { depth: 3, method: Method::CoshCom, stepsize: Some(0.01), ..RunConfig::reference() };
    assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
    // missing fields fall back to the reference values
    let partial = RunConfig::from_json(r#"{"depth": 1}"#).unwrap();
    assert_eq!(partial, RunConfig { depth: 1, ..RunConfig::reference() });
    assert!(matches!(RunConfig::from_json(r#"{"depht": 1}"#), Err(Error::InvalidConfig(_))));
    assert!(matches!(RunConfig::from_json(r#"{"method": "newton"}"#), Err(Error::InvalidConfig(_))));
}

#[test]
fn validation_happens_before_construction() {
    let wrong = RunConfig { target: FnCoordinates::new(vec![1.0; 2], vec![0.0; 2]), ..RunConfig::reference() };
    assert!(matches!(Pipeline::build(&wrong), Err(Error::DimensionMismatch { expected: 3, got: 2 })));
    let genus = RunConfig { genus: 1, ..RunConfig::reference() };
    assert!(matches!(Pipeline::build(&genus), Err(Error::UnsupportedGenus(1))));
    let tol = RunConfig { tolerance: 0.0, ..RunConfig::reference() };
    assert!(matches!(tol.validate(), Err(Error::InvalidConfig(_))));
}

#[test]
fn error_names_match_variants() {
    assert_eq!(Error::UnsupportedGenus(1).name(), "UnsupportedGenus");
    assert_eq!(Error::DimensionMismatch { expected: 3, got: 2 }.name(), "DimensionMismatch");
}
