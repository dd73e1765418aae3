use hypmap_cli::args::{parse_stepsizes, ConfigArgs};
use hypmap_cli::commands::{EXIT_INVALID_CONFIG, EXIT_USAGE};
use hypmap_core::flow::Method;
use hypmap_core::pipeline::RunConfig;
use hypmap_core::snapshot::parse_snapshots;
use std::process::{Command, Output};

fn hypmap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hypmap")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn reference_run_converges_and_writes_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.jsonl");
    let o = hypmap(&["run", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("converged true"), "{text}");
    for key in ["final energy", "iterations", "alpha", "beta", "q "] {
        assert!(text.contains(key), "{key} missing from {text}");
    }
    let (header, records) = parse_snapshots(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(header.config, RunConfig { output: Some(out.clone()), ..RunConfig::reference() });
    assert!(records.len() >= 2);
    assert_eq!(records[0].iteration, 0);
    assert!(records.last().unwrap().tension_norm <= 1e-8);
    assert!(records.windows(2).all(|w| w[1].energy <= w[0].energy + 1e-12));
    assert!(records.iter().all(|r| r.points.len() == header.vertex_count));
}

#[test]
fn invalid_fn_dimension_exits_before_computing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never.jsonl");
    let o = hypmap(&["run", "--domain-lengths", "1,2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_INVALID_CONFIG));
    assert!(String::from_utf8_lossy(&o.stderr).contains("DimensionMismatch"));
    assert!(!out.exists());
}

#[test]
fn nonconvergence_is_a_failure_with_the_error_name() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("short.jsonl");
    let o = hypmap(&["run", "--depth", "0", "--max-iter", "3", "--stride", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("FlowNotConverged"));
    let (_, records) = parse_snapshots(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(records.iter().map(|r| r.iteration).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
}

#[test]
fn usage_errors() {
    assert_eq!(hypmap(&["verify", "no-such-suite"]).status.code(), Some(EXIT_USAGE));
    assert_eq!(hypmap(&["sweep", "--stepsizes", ""]).status.code(), Some(EXIT_USAGE));
    assert_eq!(hypmap(&["sweep", "--stepsizes", " , "]).status.code(), Some(EXIT_USAGE));
    assert_eq!(hypmap(&["run", "--method", "newton"]).status.code(), Some(EXIT_USAGE));
    assert_eq!(hypmap(&["frobnicate"]).status.code(), Some(EXIT_USAGE));
}

#[test]
fn geometry_suite_passes() {
    let o = hypmap(&["verify", "geometry"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.contains("PASS quadrilateral") && text.contains("PASS second-variation"), "{text}");
}

#[test]
fn barycenter_suite_passes() {
    let o = hypmap(&["verify", "barycenter"]);
    assert!(o.status.success(), "{}", stdout(&o));
}

#[test]
fn sweep_tables_are_deterministic() {
    let args = ["sweep", "--depth", "0", "--ells", "0.5,2.5", "--stepsizes", "0.5,1"];
    let a = hypmap(&args);
    let b = hypmap(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert_eq!(text.lines().next().unwrap().split_whitespace().collect::<Vec<_>>(), ["ell", "stepsize", "iterations"]);
    assert!(text.contains("r_squared"));
}

#[test]
fn compare_tables_are_deterministic() {
    let args = ["compare", "--depth", "0", "--ells", "1.5", "--methods", "fixed,optimal,karcher-com"];
    let a = hypmap(&args);
    let b = hypmap(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert_eq!(text.lines().filter(|l| l.starts_with("1.5")).count(), 4);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    let file = RunConfig { depth: 0, method: Method::Optimal, stride: 7, ..RunConfig::reference() };
    std::fs::write(&path, file.to_json()).unwrap();
    let args = ConfigArgs {
        config: Some(path.clone()),
        depth: Some(1),
        target_twists: Some(vec![0.0, 0.0, 0.0]),
        ..ConfigArgs::default()
    };
    let c = args.resolve().unwrap();
    assert_eq!(c.depth, 1);
    assert_eq!(c.method, Method::Optimal);
    assert_eq!(c.stride, 7);
    assert_eq!(c.target.twists, vec![0.0; 3]);
    assert_eq!(c.target.lengths, RunConfig::reference().target.lengths);

    std::fs::write(&path, r#"{"genus": 2, "depthh": 1}"#).unwrap();
    let e = ConfigArgs { config: Some(path), ..ConfigArgs::default() }.resolve().unwrap_err();
    assert_eq!(e.name(), "InvalidConfig");
}

#[test]
fn negative_twists_parse_from_flags() {
    let o = hypmap(&[
        "run",
        "--depth",
        "0",
        "--target-twists",
        "-1.5,2,-0.5",
        "--max-iter",
        "0",
        "--out",
        tempfile::tempdir().unwrap().path().join("x").to_str().unwrap(),
    ]);
    // zero iterations cannot converge, but the config was accepted
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn stepsize_lists() {
    assert_eq!(parse_stepsizes("0.01, 0.02,0.05").unwrap(), vec![0.01, 0.02, 0.05]);
    assert!(parse_stepsizes("").is_err());
    assert!(parse_stepsizes("0.1,-0.2").is_err());
    assert!(parse_stepsizes("0.1,x").is_err());
}

#[test]
fn mesh_export_flag() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = dir.path().join("m.txt");
    let o = hypmap(&[
        "run",
        "--depth",
        "1",
        "--max-iter",
        "0",
        "--out",
        dir.path().join("s.jsonl").to_str().unwrap(),
        "--mesh-out",
        mesh.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let text = std::fs::read_to_string(&mesh).unwrap();
    assert!(text.starts_with("# mesh genus=2 depth=1 vertices="), "{text}");
}
