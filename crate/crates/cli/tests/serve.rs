use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use hypmap_cli::commands::run_to_writer;
use hypmap_cli::serve::{Control, Frame, RunState, Service, Status};
use hypmap_core::flow::Method;
use hypmap_core::pipeline::RunConfig;
use hypmap_core::snapshot::{SnapshotHeader, SnapshotRecord};
use std::time::Duration;
use tower::ServiceExt;

fn small(max_iterations: usize) -> RunConfig {
    RunConfig { depth: 0, stride: 1, max_iterations, ..RunConfig::reference() }
}

async fn post(app: &axum::Router, body: &str) -> (StatusCode, Frame) {
    let req = Request::post("/control").header("content-type", "application/json").body(Body::from(body.to_string()));
    let res = app.clone().oneshot(req.unwrap()).await.unwrap();
    let code = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (code, serde_json::from_slice(&bytes).unwrap())
}

async fn control(app: &axum::Router, c: &Control) -> (StatusCode, Frame) {
    post(app, &serde_json::to_string(c).unwrap()).await
}

async fn get(app: &axum::Router, path: &str) -> (StatusCode, Vec<u8>) {
    let res = app.clone().oneshot(Request::get(path).body(Body::empty()).unwrap()).await.unwrap();
    let code = res.status();
    (code, res.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn status(app: &axum::Router) -> Status {
    serde_json::from_slice(&get(app, "/status").await.1).unwrap()
}

/// Reads server-sent events as `(event, data)` pairs.
struct EventReader {
    body: Body,
    buf: String,
}

impl EventReader {
    async fn open(app: &axum::Router) -> EventReader {
        let res = app.clone().oneshot(Request::get("/stream").body(Body::empty()).unwrap()).await.unwrap();
        assert_eq!(res.status(), StatusCode::OK);
        EventReader { body: res.into_body(), buf: String::new() }
    }

    async fn next(&mut self) -> (String, String) {
        loop {
            if let Some(end) = self.buf.find("\n\n") {
                let block: String = self.buf.drain(..end + 2).collect();
                let mut event = String::new();
                let mut data = String::new();
                for line in block.lines() {
                    if let Some(e) = line.strip_prefix("event: ") {
                        event = e.to_string();
                    } else if let Some(d) = line.strip_prefix("data: ") {
                        data.push_str(d);
                    }
                }
                if !data.is_empty() {
                    return (event, data);
                }
                continue;
            }
            let frame = tokio::time::timeout(Duration::from_secs(60), self.body.frame())
                .await
                .expect("stream event within timeout")
                .expect("stream open")
                .unwrap();
            if let Ok(bytes) = frame.into_data() {
                self.buf.push_str(std::str::from_utf8(&bytes).unwrap());
            }
        }
    }

    async fn record(&mut self) -> SnapshotRecord {
        let (event, data) = self.next().await;
        assert_eq!(event, "record", "{data}");
        serde_json::from_str(&data).unwrap()
    }
}

async fn wait_for(app: &axum::Router, state: RunState) -> Status {
    for _ in 0..6000 {
        let s = status(app).await;
        if s.state == state {
            return s;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    panic!("state {state:?} not reached");
}

#[tokio::test]
async fn start_streams_header_then_iteration_zero() {
    let app = Service::spawn(small(20)).router();
    let (code, f) = control(&app, &Control::Start { config: None }).await;
    assert_eq!(code, StatusCode::OK, "{f:?}");
    let mut ev = EventReader::open(&app).await;
    let (event, data) = ev.next().await;
    assert_eq!(event, "header");
    let h: SnapshotHeader = serde_json::from_str(&data).unwrap();
    assert_eq!(h.genus, 2);
    let first = ev.record().await;
    assert_eq!(first.iteration, 0);
    let mut last = 0;
    for _ in 0..20 {
        let r = ev.record().await;
        assert!(r.iteration > last);
        last = r.iteration;
    }
    assert_eq!(last, 20);
    wait_for(&app, RunState::Finished).await;
}

#[tokio::test]
async fn malformed_control_is_rejected_without_touching_the_run() {
    let app = Service::spawn(small(10)).router();
    for body in ["not json", r#"{"type":"jump"}"#, r#"{"type":"method","method":"newton"}"#, r#"{"type":"pause","x":1}"#] {
        let (code, f) = post(&app, body).await;
        assert_eq!(code, StatusCode::BAD_REQUEST, "{body}");
        assert!(matches!(f, Frame::Error { control: None, .. }));
    }
    assert_eq!(status(&app).await.state, RunState::Idle);
}

#[tokio::test]
async fn state_rejections_are_error_frames() {
    let app = Service::spawn(small(10)).router();
    for c in [Control::Pause {}, Control::Resume {}, Control::Reset {}, Control::Method { method: Method::CoshCom }] {
        let (code, f) = control(&app, &c).await;
        assert_eq!(code, StatusCode::CONFLICT);
        assert!(matches!(f, Frame::Error { control: Some(ref n), .. } if n == c.name()));
    }
    let bad = RunConfig { depth: 0, domain: hypmap_core::surface::FnCoordinates::new(vec![1.0], vec![0.0]), ..small(5) };
    let (code, f) = control(&app, &Control::Start { config: Some(bad) }).await;
    assert_eq!(code, StatusCode::CONFLICT);
    assert!(matches!(f, Frame::Error { ref message, .. } if message.starts_with("DimensionMismatch")));
}

#[tokio::test]
async fn second_start_waits_for_reset_and_reset_restarts_at_zero() {
    let app = Service::spawn(small(100_000)).router();
    assert_eq!(control(&app, &Control::Start { config: None }).await.0, StatusCode::OK);
    assert_eq!(control(&app, &Control::Start { config: None }).await.0, StatusCode::CONFLICT);
    let mut ev = EventReader::open(&app).await;
    ev.next().await;
    ev.record().await;
    ev.record().await;
    let (code, f) = control(&app, &Control::Reset {}).await;
    assert_eq!(code, StatusCode::OK);
    assert!(matches!(f, Frame::Ack { state: RunState::Ready, iteration: 0, .. }));
    // skip whatever was in flight, then the fresh header and iteration 0
    loop {
        let (event, _) = ev.next().await;
        if event == "header" {
            break;
        }
    }
    let r = ev.record().await;
    assert_eq!(r.iteration, 0);
    let fresh = EventReader::open(&app).await.next().await;
    assert_eq!(fresh.0, "header");
    assert_eq!(control(&app, &Control::Start { config: None }).await.0, StatusCode::OK);
    assert!(ev.record().await.iteration == 1);
    control(&app, &Control::Pause {}).await;
}

#[tokio::test]
async fn pause_holds_the_iteration_and_resume_continues() {
    let app = Service::spawn(small(1_000_000)).router();
    control(&app, &Control::Start { config: None }).await;
    let (_, f) = control(&app, &Control::Pause {}).await;
    let Frame::Ack { iteration, state: RunState::Paused, .. } = f else { panic!("{f:?}") };
    tokio::time::sleep(Duration::from_millis(100)).await;
    let s = status(&app).await;
    assert_eq!(s.state, RunState::Paused);
    assert_eq!(s.iteration, iteration);
    let (_, f) = control(&app, &Control::Resume {}).await;
    assert!(matches!(f, Frame::Ack { state: RunState::Running, iteration: i, .. } if i >= iteration));
    tokio::time::sleep(Duration::from_millis(50)).await;
    control(&app, &Control::Pause {}).await;
    assert!(status(&app).await.iteration > iteration);
}

#[tokio::test]
async fn method_switch_continues_downhill_from_the_current_state() {
    let cfg = RunConfig { depth: 1, stride: 1, max_iterations: 400, ..RunConfig::reference() };
    let app = Service::spawn(cfg).router();
    control(&app, &Control::Start { config: None }).await;
    control(&app, &Control::Pause {}).await;
    let (code, _) = control(&app, &Control::Method { method: Method::CoshCom }).await;
    assert_eq!(code, StatusCode::OK);
    control(&app, &Control::Resume {}).await;
    let s = wait_for(&app, RunState::Finished).await;
    assert_eq!(s.method, Some(Method::CoshCom));
    let mut ev = EventReader::open(&app).await;
    ev.next().await;
    let mut records = vec![];
    loop {
        let r = ev.record().await;
        let done = r.iteration == s.iteration;
        records.push(r);
        if done {
            break;
        }
    }
    let switch = records.iter().position(|r| r.method == Method::CoshCom).expect("switched");
    assert!(switch > 0 && records[..switch].iter().all(|r| r.method == Method::Fixed));
    for w in records.windows(2) {
        assert_eq!(w[1].iteration, w[0].iteration + 1);
        assert!(w[1].energy <= w[0].energy + 1e-12 * w[0].energy, "{} -> {}", w[0].energy, w[1].energy);
    }
}

#[tokio::test]
async fn stream_lines_match_the_snapshot_file_byte_for_byte() {
    let cfg = RunConfig { stride: 3, ..small(40) };
    let mut file = Vec::new();
    run_to_writer(&cfg, &mut file).unwrap();
    let file = String::from_utf8(file).unwrap();
    let expected: Vec<&str> = file.lines().collect();

    let app = Service::spawn(cfg).router();
    control(&app, &Control::Start { config: None }).await;
    wait_for(&app, RunState::Finished).await;
    let mut ev = EventReader::open(&app).await;
    for line in &expected {
        assert_eq!(ev.next().await.1, *line);
    }
}

#[tokio::test]
async fn stepsize_changes_are_validated() {
    let app = Service::spawn(small(1_000_000)).router();
    control(&app, &Control::Start { config: None }).await;
    control(&app, &Control::Pause {}).await;
    assert_eq!(control(&app, &Control::Stepsize { stepsize: Some(-1.0) }).await.0, StatusCode::CONFLICT);
    assert_eq!(control(&app, &Control::Stepsize { stepsize: Some(1e-5) }).await.0, StatusCode::OK);
    assert_eq!(control(&app, &Control::Stepsize { stepsize: None }).await.0, StatusCode::OK);
}

#[tokio::test]
async fn geometry_and_config_endpoints() {
    let cfg = small(1);
    let app = Service::spawn(cfg.clone()).router();
    assert_eq!(get(&app, "/geometry").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/mesh").await.0, StatusCode::NOT_FOUND);
    let (code, body) = get(&app, "/config").await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(serde_json::from_slice::<RunConfig>(&body).unwrap(), cfg);
    control(&app, &Control::Start { config: None }).await;
    let (code, body) = get(&app, "/geometry").await;
    assert_eq!(code, StatusCode::OK);
    let g: hypmap_core::snapshot::Geometry = serde_json::from_slice(&body).unwrap();
    assert_eq!(g.domain_polygon.len(), 8);
    assert_eq!(g.domain_axes.len(), 4);
    assert!(g.faces.iter().all(|f| f.corners.iter().all(|c| c.domain[0].hypot(c.domain[1]) < 1.0)));
    let (code, body) = get(&app, "/mesh").await;
    assert_eq!(code, StatusCode::OK);
    let text = String::from_utf8(body).unwrap();
    assert!(text.starts_with("# mesh genus=2 depth=0"), "{text}");
    assert_eq!(text.lines().count(), 1 + g.faces.iter().flat_map(|f| f.corners.iter().map(|c| c.vertex)).max().unwrap() + 1);
}

#[tokio::test]
async fn busy_port_fails_startup() {
    let taken = tokio::net::TcpListener::bind(("127.0.0.1", 0)).await.unwrap();
    let port = taken.local_addr().unwrap().port();
    let r = hypmap_cli::serve::serve(small(1), port).await;
    assert!(r.is_err());
}
