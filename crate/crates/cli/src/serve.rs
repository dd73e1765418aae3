//! Live flow service: a control endpoint, an ordered snapshot stream and the
//! static geometry of the active run.
//!
//! One worker thread owns the flow. HTTP handlers hand it control messages
//! through a channel; it applies them between iterations and replies with
//! an acknowledgment or error frame. Snapshot lines go to a hub that keeps
//! the history of the current run, so a stream subscriber first receives
//! the history and then live lines, in order and without gaps.

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use hypmap_core::flow::{FlowRunner, Method};
use hypmap_core::pipeline::{Pipeline, RunConfig};
use hypmap_core::snapshot::{header_line, Geometry, SnapshotHeader, SnapshotRecord};
use serde::{Deserialize, Serialize};
use std::convert::Infallible;
use std::sync::{mpsc, Arc, Mutex};
use tokio::sync::{broadcast, oneshot};

/// A control message, tagged by `type`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Control {
    /// Build and start a run; without a config the server's default is used.
    Start {
        #[serde(default)]
        config: Option<RunConfig>,
    },
    Pause {},
    Resume {},
    /// Re-initialize the current run at iteration 0, stopped.
    Reset {},
    Method { method: Method },
    /// Fixed stepsize; `null` restores `1/β`.
    Stepsize { stepsize: Option<f64> },
}

impl Control {
    pub fn name(&self) -> &'static str {
        match self {
            Control::Start { .. } => "start",
            Control::Pause {} => "pause",
            Control::Resume {} => "resume",
            Control::Reset {} => "reset",
            Control::Method { .. } => "method",
            Control::Stepsize { .. } => "stepsize",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunState {
    /// No run built yet.
    Idle,
    /// Built at iteration 0 after a reset, waiting for start.
    Ready,
    Running,
    Paused,
    /// Converged, out of iterations, or stopped by an error.
    Finished,
}

/// Reply to a control message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Frame {
    Ack { control: String, state: RunState, iteration: usize },
    Error { control: Option<String>, message: String },
}

impl Frame {
    fn error(control: Option<&Control>, message: impl Into<String>) -> Frame {
        Frame::Error { control: control.map(|c| c.name().to_string()), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Status {
    pub state: RunState,
    /// Iteration of the last published record.
    pub iteration: usize,
    pub method: Option<Method>,
    /// Set when the run stopped on an error.
    pub error: Option<String>,
}

/// A stream line and its SSE event name (`header` or `record`).
#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub kind: &'static str,
    pub text: String,
}

/// Per-pipeline data served as documents: the geometry JSON and the mesh
/// text export.
#[derive(Debug)]
pub struct Documents {
    pub geometry: String,
    pub mesh: String,
}

#[derive(Debug)]
struct Published {
    lines: Vec<Line>,
    documents: Option<Arc<Documents>>,
    config: RunConfig,
    status: Status,
}

/// Snapshot history of the current run plus live fan-out.
#[derive(Debug)]
pub struct Hub {
    inner: Mutex<Published>,
    tx: broadcast::Sender<Line>,
}

const STREAM_CAPACITY: usize = 4096;

impl Hub {
    fn new(config: RunConfig) -> Hub {
        let status = Status { state: RunState::Idle, iteration: 0, method: None, error: None };
        let inner = Published { lines: Vec::new(), documents: None, config, status };
        Hub { inner: Mutex::new(inner), tx: broadcast::channel(STREAM_CAPACITY).0 }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Published> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// History so far and a receiver for everything after it.
    pub fn subscribe(&self) -> (Vec<Line>, broadcast::Receiver<Line>) {
        let g = self.lock();
        (g.lines.clone(), self.tx.subscribe())
    }

    fn push(&self, g: &mut Published, line: Line) {
        g.lines.push(line.clone());
        // no subscribers is fine
        let _ = self.tx.send(line);
    }

    fn begin(&self, config: &RunConfig, documents: Option<Arc<Documents>>, header: String, record: &SnapshotRecord) {
        let mut g = self.lock();
        g.lines.clear();
        g.config = config.clone();
        if documents.is_some() {
            g.documents = documents;
        }
        g.status.iteration = record.iteration;
        g.status.method = Some(record.method);
        g.status.error = None;
        self.push(&mut g, Line { kind: "header", text: header });
        self.push(&mut g, Line { kind: "record", text: record.to_line() });
    }

    fn record(&self, r: &SnapshotRecord) {
        let mut g = self.lock();
        g.status.iteration = r.iteration;
        g.status.method = Some(r.method);
        self.push(&mut g, Line { kind: "record", text: r.to_line() });
    }

    fn set_state(&self, state: RunState, method: Option<Method>) {
        let mut g = self.lock();
        g.status.state = state;
        if method.is_some() {
            g.status.method = method;
        }
    }

    fn fail(&self, message: String) {
        let mut g = self.lock();
        g.status.state = RunState::Finished;
        g.status.error = Some(message);
    }

    pub fn status(&self) -> Status {
        self.lock().status.clone()
    }

    pub fn config(&self) -> RunConfig {
        self.lock().config.clone()
    }

    pub fn documents(&self) -> Option<Arc<Documents>> {
        self.lock().documents.clone()
    }
}

struct Request {
    control: Control,
    reply: oneshot::Sender<Frame>,
}

struct Active {
    pipeline: Pipeline,
    runner: FlowRunner,
}

struct Worker {
    hub: Arc<Hub>,
    default: RunConfig,
    active: Option<Active>,
    state: RunState,
}

impl Worker {
    fn run(mut self, rx: mpsc::Receiver<Request>) {
        loop {
            let request = if self.state == RunState::Running {
                match rx.try_recv() {
                    Ok(r) => Some(r),
                    Err(mpsc::TryRecvError::Empty) => None,
                    Err(mpsc::TryRecvError::Disconnected) => return,
                }
            } else {
                match rx.recv() {
                    Ok(r) => Some(r),
                    Err(_) => return,
                }
            };
            match request {
                Some(r) => {
                    let frame = self.apply(&r.control);
                    let _ = r.reply.send(frame);
                }
                None => self.advance(),
            }
        }
    }

    fn set_state(&mut self, s: RunState) {
        self.state = s;
        let method = self.active.as_ref().map(|a| a.runner.config.method);
        self.hub.set_state(s, method);
    }

    fn ack(&self, c: &Control) -> Frame {
        let iteration = self.active.as_ref().map_or(0, |a| a.runner.state().iteration);
        Frame::Ack { control: c.name().to_string(), state: self.state, iteration }
    }

    /// Builds a fresh runner at iteration 0 and publishes its header and
    /// first record. The pipeline is rebuilt only when the config changed.
    fn initialize(&mut self, config: RunConfig) -> Result<(), String> {
        config.validate().map_err(|e| format!("{}: {e}", e.name()))?;
        let (pipeline, documents) = match &self.active {
            Some(a) if a.pipeline.config == config => (a.pipeline.clone(), None),
            _ => {
                let p = Pipeline::build(&config).map_err(|e| format!("{}: {e}", e.name()))?;
                let geometry = serde_json::to_string(&Geometry::new(&p)).expect("geometry serializes");
                let d = Documents { geometry, mesh: p.mesh.to_text() };
                (p, Some(Arc::new(d)))
            }
        };
        let runner = FlowRunner::new(pipeline.problem.clone(), config.flow_config(), pipeline.initial.clone())
            .map_err(|e| format!("{}: {e}", e.name()))?;
        let header = header_line(&SnapshotHeader::new(&pipeline, runner.alpha, runner.beta));
        self.hub.begin(&config, documents, header, &SnapshotRecord::from_state(runner.state()));
        self.active = Some(Active { pipeline, runner });
        Ok(())
    }

    fn apply(&mut self, c: &Control) -> Frame {
        use RunState::*;
        match (c, self.state) {
            (Control::Start { config }, Idle | Ready) => {
                let config = config.clone().unwrap_or_else(|| match &self.active {
                    Some(a) => a.pipeline.config.clone(),
                    None => self.default.clone(),
                });
                let fresh = self.state == Ready
                    && self.active.as_ref().is_some_and(|a| a.pipeline.config == config && a.runner.state().iteration == 0);
                if !fresh {
                    if let Err(m) = self.initialize(config) {
                        return Frame::error(Some(c), m);
                    }
                }
                self.set_state(if self.active.as_ref().is_some_and(|a| a.runner.finished()) { Finished } else { Running });
                self.ack(c)
            }
            (Control::Start { .. }, _) => Frame::error(Some(c), "a run is active; reset it first"),
            (Control::Pause {}, Running) => {
                self.set_state(Paused);
                self.ack(c)
            }
            (Control::Resume {}, Paused) => {
                self.set_state(Running);
                self.ack(c)
            }
            (Control::Pause {} | Control::Resume {}, s) => {
                Frame::error(Some(c), format!("cannot {} while {}", c.name(), state_name(s)))
            }
            (Control::Reset {}, Idle) => Frame::error(Some(c), "no run to reset"),
            (Control::Reset {}, _) => {
                let config = self.active.as_ref().map(|a| a.pipeline.config.clone()).expect("active run");
                if let Err(m) = self.initialize(config) {
                    self.active = None;
                    self.set_state(Idle);
                    return Frame::error(Some(c), m);
                }
                self.set_state(Ready);
                self.ack(c)
            }
            (Control::Method { .. } | Control::Stepsize { .. }, Idle) => Frame::error(Some(c), "no active run"),
            (Control::Method { .. } | Control::Stepsize { .. }, Finished) => {
                Frame::error(Some(c), "run finished; reset it first")
            }
            (Control::Method { method }, _) => {
                self.active.as_mut().expect("active run").runner.set_method(*method);
                let s = self.state;
                self.set_state(s);
                self.ack(c)
            }
            (Control::Stepsize { stepsize }, _) => {
                match self.active.as_mut().expect("active run").runner.set_stepsize(*stepsize) {
                    Ok(()) => self.ack(c),
                    Err(e) => Frame::error(Some(c), format!("{}: {e}", e.name())),
                }
            }
        }
    }

    fn advance(&mut self) {
        let a = self.active.as_mut().expect("running implies an active run");
        if let Err(e) = a.runner.step() {
            self.state = RunState::Finished;
            self.hub.fail(format!("{}: {e}", e.name()));
            return;
        }
        if a.runner.should_record() {
            self.hub.record(&SnapshotRecord::from_state(a.runner.state()));
        }
        if a.runner.finished() {
            self.set_state(RunState::Finished);
        }
    }
}

fn state_name(s: RunState) -> &'static str {
    match s {
        RunState::Idle => "idle",
        RunState::Ready => "ready",
        RunState::Running => "running",
        RunState::Paused => "paused",
        RunState::Finished => "finished",
    }
}

/// Handle to the worker; cloned into every request handler.
#[derive(Clone)]
pub struct Service {
    control: mpsc::Sender<Request>,
    pub hub: Arc<Hub>,
}

impl Service {
    /// Starts the worker thread. `default` is used by `start` messages
    /// without a config.
    pub fn spawn(default: RunConfig) -> Service {
        let hub = Arc::new(Hub::new(default.clone()));
        let (tx, rx) = mpsc::channel();
        let worker = Worker { hub: hub.clone(), default, active: None, state: RunState::Idle };
        std::thread::Builder::new()
            .name("hypmap-flow".into())
            .spawn(move || worker.run(rx))
            .expect("spawn flow worker");
        Service { control: tx, hub }
    }

    /// Sends a control message and waits for the worker's reply.
    pub async fn send(&self, control: Control) -> Frame {
        let (reply, rx) = oneshot::channel();
        let name = control.name();
        if self.control.send(Request { control, reply }).is_err() {
            return Frame::Error { control: Some(name.into()), message: "flow worker stopped".into() };
        }
        rx.await
            .unwrap_or_else(|_| Frame::Error { control: Some(name.into()), message: "flow worker stopped".into() })
    }

    /// History followed by live lines. Ends if the subscriber falls too
    /// far behind; reconnecting replays the history.
    pub fn lines(&self) -> impl Stream<Item = Line> + Send + 'static {
        let (history, rx) = self.hub.subscribe();
        let live = stream::unfold(rx, |mut rx| async move { rx.recv().await.ok().map(|l| (l, rx)) });
        stream::iter(history).chain(live)
    }

    pub fn router(self) -> Router {
        Router::new()
            .route("/control", post(control))
            .route("/stream", get(stream_lines))
            .route("/geometry", get(geometry))
            .route("/mesh", get(mesh))
            .route("/config", get(config))
            .route("/status", get(status))
            .layer(tower_http::cors::CorsLayer::permissive())
            .with_state(self)
    }
}

async fn control(State(s): State<Service>, body: Bytes) -> Response {
    let c: Control = match serde_json::from_slice(&body) {
        Ok(c) => c,
        Err(e) => {
            let f = Frame::error(None, format!("malformed control message: {e}"));
            return (StatusCode::BAD_REQUEST, Json(f)).into_response();
        }
    };
    let f = s.send(c).await;
    let code = match f {
        Frame::Ack { .. } => StatusCode::OK,
        Frame::Error { .. } => StatusCode::CONFLICT,
    };
    (code, Json(f)).into_response()
}

async fn stream_lines(State(s): State<Service>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let events = s.lines().map(|l| Ok(Event::default().event(l.kind).data(l.text)));
    Sse::new(events).keep_alive(KeepAlive::default())
}

fn document(s: &Service, content_type: &'static str, pick: impl Fn(&Documents) -> &String) -> Response {
    match s.hub.documents() {
        Some(d) => ([(axum::http::header::CONTENT_TYPE, content_type)], pick(&d).clone()).into_response(),
        None => (StatusCode::NOT_FOUND, Json(Frame::error(None, "no run has been started"))).into_response(),
    }
}

async fn geometry(State(s): State<Service>) -> Response {
    document(&s, "application/json", |d| &d.geometry)
}

async fn mesh(State(s): State<Service>) -> Response {
    document(&s, "text/plain; charset=utf-8", |d| &d.mesh)
}

async fn config(State(s): State<Service>) -> Json<RunConfig> {
    Json(s.hub.config())
}

async fn status(State(s): State<Service>) -> Json<Status> {
    Json(s.hub.status())
}

/// Binds `127.0.0.1:port` and serves until the process ends. Fails if the
/// port is taken.
pub async fn serve(default: RunConfig, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    eprintln!("serving on http://{}", listener.local_addr()?);
    axum::serve(listener, Service::spawn(default).router()).await
}
