use hypmap_core::flow::{run_flow, FlowConfig, Method};
use hypmap_core::pipeline::{Pipeline, RunConfig};
use hypmap_core::snapshot::{
    header_line, parse_snapshots, snapshot_text, Geometry, ParseError, SnapshotHeader, SnapshotRecord, SCHEMA,
};

fn small() -> (Pipeline, Vec<SnapshotRecord>, SnapshotHeader) {
    let p = Pipeline::build(&RunConfig { depth: 0, ..RunConfig::reference() }).unwrap();
    let cfg = FlowConfig { max_iterations: 5, stride: 2, ..FlowConfig::default() };
    let mut records = vec![];
    let run = run_flow(&p.problem, &cfg, p.initial.clone(), |s| records.push(SnapshotRecord::from_state(s))).unwrap();
    let h = SnapshotHeader::new(&p, run.alpha, run.beta);
    (p, records, h)
}

#[test]
fn snapshot_file_round_trip() {
    let (p, records, h) = small();
    assert_eq!(h.schema, SCHEMA);
    assert_eq!(h.vertex_count, p.mesh.reps.len());
    let text = snapshot_text(&h, &records);
    assert_eq!(text.lines().count(), 1 + records.len());
    let (h2, r2) = parse_snapshots(&text).unwrap();
    assert_eq!(h2, h);
    assert_eq!(r2, records);
    assert_eq!(r2.iter().map(|r| r.iteration).collect::<Vec<_>>(), vec![0, 2, 4, 5]);
    assert!(r2.iter().all(|r| r.method == Method::Fixed && r.points.iter().all(|q| q[0].hypot(q[1]) < 1.0)));
}

#[test]
fn records_are_single_json_lines() {
    let (_, records, h) = small();
    let line = records[0].to_line();
    assert!(!line.contains('\n'));
    let v: serde_json::Value = serde_json::from_str(&line).unwrap();
    for key in ["iteration", "energy", "tension_norm", "stepsize", "method", "points"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(v["method"], "fixed");
    let hv: serde_json::Value = serde_json::from_str(&header_line(&h)).unwrap();
    assert_eq!(hv["schema"], "hypmap.snapshot");
    assert_eq!(hv["version"], 1);
}

#[test]
fn unknown_schema_or_garbage_is_rejected() {
    let (_, records, mut h) = small();
    assert!(matches!(parse_snapshots(""), Err(ParseError::MissingHeader)));
    h.version = 9;
    assert!(matches!(parse_snapshots(&snapshot_text(&h, &records)), Err(ParseError::Schema(_, 9))));
    h.version = 1;
    let text = format!("{}{{\"iteration\":\n", snapshot_text(&h, &records));
    assert!(matches!(parse_snapshots(&text), Err(ParseError::Json { .. })));
}

#[test]
fn geometry_describes_the_mesh() {
    let (p, _, _) = small();
    let g = Geometry::new(&p);
    assert_eq!(g.genus, 2);
    assert_eq!(g.faces.len(), p.mesh.faces.len());
    assert_eq!(g.domain_polygon.len(), 8);
    assert_eq!(g.target_polygon.len(), 8);
    for axes in [&g.domain_axes, &g.target_axes] {
        assert_eq!(axes.len(), 4);
        for e in axes.iter().flatten() {
            assert!((e[0].hypot(e[1]) - 1.0).abs() < 1e-9, "{e:?}");
        }
    }
    let json = serde_json::to_string(&g).unwrap();
    let back = serde_json::from_str::<Geometry>(&json).unwrap();
    assert_eq!(back, g);
}
