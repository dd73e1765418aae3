//! Discrete energy, tension field and the minimizing iterations.
//!
//! Maps are stored at the vertex-orbit representatives only; the image of a
//! lift `γ·x` is `ρ_R(γ)·f(x)`. All per-vertex updates read the previous
//! state (Jacobi order) and run in parallel; sums are accumulated in a fixed
//! order so results do not depend on the worker count.

use crate::error::{Error, Result};
use crate::geometry::{
    cosh_barycenter, dist, exp_map, karcher_barycenter_from, log_map, HPoint, Isometry, TangentVec,
    WeightedPointSet,
};
use crate::mesh::{BiweightedGraph, GraphStatistics, TriangulatedMesh, VertexOrigin};
use crate::polygon::FundamentalPolygon;
use crate::surface::{Representation, Word};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Fixed,
    Optimal,
    KarcherCom,
    CoshCom,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Fixed, Method::Optimal, Method::KarcherCom, Method::CoshCom];

    pub fn name(self) -> &'static str {
        match self {
            Method::Fixed => "fixed",
            Method::Optimal => "optimal",
            Method::KarcherCom => "karcher-com",
            Method::CoshCom => "cosh-com",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method `{s}`")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A biweighted graph paired with a target representation, with the gluing
/// isometries `ρ_R(γ)` precomputed.
///
/// Points are given in per-vertex charts: the image of vertex `x` is
/// `A_x·p` for the stored `p`. With identity charts these are plain
/// hyperboloid coordinates. Charts anchored at a map keep every stored point
/// near the origin, where distances are computed without cancellation; the
/// gluing then becomes `A_x⁻¹ ρ_R(γ) A_y`.
#[derive(Debug, Clone)]
pub struct FlowProblem {
    pub graph: BiweightedGraph,
    pub rho_r: Representation,
    charts: Vec<Isometry>,
    /// Per vertex: `(neighbor, gluing, ω)`.
    neighbors: Vec<Vec<(usize, Isometry, f64)>>,
    /// Per edge orbit `(a, b)`: the gluing from `b`'s chart to `a`'s.
    edge_isometries: Vec<Isometry>,
}

impl FlowProblem {
    pub fn new(graph: BiweightedGraph, rho_r: Representation) -> FlowProblem {
        let neighbors = graph
            .neighbors
            .iter()
            .map(|ns| ns.iter().map(|n| (n.vertex, rho_r.eval(&n.word), n.omega)).collect())
            .collect();
        let edge_isometries = graph.edges.iter().map(|e| rho_r.eval(&e.word)).collect();
        let charts = vec![Isometry::IDENTITY; graph.vertex_count()];
        FlowProblem { graph, rho_r, charts, neighbors, edge_isometries }
    }

    /// Graph without gluing: every group element acts trivially. Used for
    /// toy problems.
    pub fn untwisted(graph: BiweightedGraph) -> FlowProblem {
        let neighbors = graph
            .neighbors
            .iter()
            .map(|ns| ns.iter().map(|n| (n.vertex, Isometry::IDENTITY, n.omega)).collect())
            .collect();
        let edge_isometries = vec![Isometry::IDENTITY; graph.edges.len()];
        let rho_r = Representation { generators: Vec::new() };
        let charts = vec![Isometry::IDENTITY; graph.vertex_count()];
        FlowProblem { graph, rho_r, charts, neighbors, edge_isometries }
    }

    /// The same problem in charts centered at `anchors` (given in the current
    /// charts). The anchors themselves become the origin.
    pub fn recharted(&self, anchors: &[HPoint]) -> FlowProblem {
        let m: Vec<Isometry> = anchors.iter().map(Isometry::moving_origin_to).collect();
        let mi: Vec<Isometry> = m.iter().map(Isometry::inverse).collect();
        let neighbors = self
            .neighbors
            .iter()
            .enumerate()
            .map(|(x, ns)| ns.iter().map(|(y, g, w)| (*y, mi[x].compose(g).compose(&m[*y]), *w)).collect())
            .collect();
        let edge_isometries = self
            .graph
            .edges
            .iter()
            .zip(&self.edge_isometries)
            .map(|(e, g)| mi[e.a].compose(g).compose(&m[e.b]))
            .collect();
        FlowProblem {
            graph: self.graph.clone(),
            rho_r: self.rho_r.clone(),
            charts: self.charts.iter().zip(&m).map(|(c, mx)| c.compose(mx)).collect(),
            neighbors,
            edge_isometries,
        }
    }

    /// Chart coordinates of a map given in hyperboloid coordinates.
    pub fn to_chart(&self, f: &EquivariantMap) -> Vec<HPoint> {
        f.points.iter().zip(&self.charts).map(|(p, c)| c.inverse().apply(p)).collect()
    }

    /// Hyperboloid coordinates of a map given in chart coordinates.
    pub fn to_global(&self, f: &[HPoint]) -> EquivariantMap {
        EquivariantMap { points: f.iter().zip(&self.charts).map(|(p, c)| c.apply(p)).collect() }
    }

    pub fn vertex_count(&self) -> usize {
        self.graph.vertex_count()
    }

    pub fn mu(&self) -> &[f64] {
        &self.graph.mu
    }

    pub fn stats(&self) -> &GraphStatistics {
        &self.graph.stats
    }

    /// `½ Σ ω d(f(a), ρ_R(γ) f(b))²` over the edge orbits, in edge order.
    pub fn energy(&self, f: &[HPoint]) -> f64 {
        self.energy_with_error(f).0
    }

    /// Energy together with a bound on its rounding error. The Minkowski
    /// products behind a distance involve terms of size `x3(p)·x3(q)`, so
    /// each edge contributes about `ω·d·ε·x3(p)·x3(q)`.
    pub fn energy_with_error(&self, f: &[HPoint]) -> (f64, f64) {
        let (mut e, mut err) = (0.0, 0.0);
        for ((edge, w), g) in self.graph.edges.iter().zip(&self.graph.omega).zip(&self.edge_isometries) {
            let (p, q) = (f[edge.a], g.apply(&f[edge.b]));
            let d = dist(&p, &q);
            e += 0.5 * w * d * d;
            err += w * (d * d + d * p.x3() * q.x3());
        }
        (e, 8.0 * f64::EPSILON * err)
    }

    fn tension_at(&self, f: &[HPoint], x: usize) -> TangentVec {
        let mut acc = TangentVec::zero(f[x]);
        for (y, g, w) in &self.neighbors[x] {
            acc = acc.plus(&log_map(&f[x], &g.apply(&f[*y])).scaled(*w));
        }
        acc.scaled(1.0 / self.graph.mu[x])
    }

    /// `τ(f)_x = (1/μ(x)) Σ_y ω_xy log_{f(x)}(ρ_R(γ_xy) f(y))`.
    pub fn tension(&self, f: &[HPoint]) -> Vec<TangentVec> {
        (0..f.len()).into_par_iter().map(|x| self.tension_at(f, x)).collect()
    }

    /// L²(μ) inner product of two vector fields along the same map.
    pub fn inner(&self, u: &[TangentVec], v: &[TangentVec]) -> f64 {
        u.iter().zip(v).zip(&self.graph.mu).map(|((a, b), m)| m * a.dot(b)).sum()
    }

    pub fn norm(&self, v: &[TangentVec]) -> f64 {
        self.inner(v, v).max(0.0).sqrt()
    }

    /// L²(μ) distance between two maps.
    pub fn distance(&self, f: &[HPoint], g: &[HPoint]) -> f64 {
        f.iter().zip(g).zip(&self.graph.mu).map(|((a, b), m)| m * dist(a, b).powi(2)).sum::<f64>().sqrt()
    }

    /// `x ↦ exp_{f(x)}(t·v_x)`.
    pub fn exp(&self, v: &[TangentVec], t: f64) -> Vec<HPoint> {
        v.par_iter().map(|vx| exp_map(&vx.scaled(t))).collect()
    }

    pub fn step_fixed(&self, f: &[HPoint], t: f64) -> Vec<HPoint> {
        let tau = self.tension(f);
        self.exp(&tau, t)
    }

    /// Neighbor images of `x` with weights `ω_xy / μ(x)`.
    pub fn neighbor_set(&self, f: &[HPoint], x: usize) -> Result<WeightedPointSet> {
        let (pts, ws) = self.neighbors[x]
            .iter()
            .map(|(y, g, w)| (g.apply(&f[*y]), w / self.graph.mu[x]))
            .unzip();
        WeightedPointSet::new(pts, ws)
    }

    /// One center-of-mass step: every vertex moves to the barycenter of its
    /// weighted neighbor images.
    pub fn com_step(&self, f: &[HPoint], flavor: Barycenter, tol: f64) -> Result<Vec<HPoint>> {
        (0..f.len())
            .into_par_iter()
            .map(|x| {
                let s = self.neighbor_set(f, x)?;
                match flavor {
                    Barycenter::Karcher => karcher_barycenter_from(&s, f[x], tol),
                    Barycenter::Cosh => Ok(cosh_barycenter(&s)),
                }
            })
            .collect()
    }

    /// `‖φ(f) − f‖_{L²(μ)}` for the Karcher averaging map `φ`.
    pub fn barycenter_residual(&self, f: &[HPoint], tol: f64) -> Result<f64> {
        let g = self.com_step(f, Barycenter::Karcher, tol)?;
        Ok(self.distance(f, &g))
    }

    /// Derivative of `s ↦ E(exp_f(s·τ))` at `s = t`, from the first
    /// variation formula: `−⟨τ(f_t), γ'(t)⟩_{L²(μ)}`.
    fn line_derivative(&self, f: &[HPoint], tau: &[TangentVec], t: f64) -> f64 {
        let moved: Vec<(HPoint, TangentVec)> = f
            .par_iter()
            .zip(tau)
            .map(|(p, v)| {
                let n = v.norm();
                if n == 0.0 {
                    return (*p, TangentVec::zero(*p));
                }
                let q = exp_map(&v.scaled(t));
                let (c, s) = ((t * n).cosh(), (t * n).sinh());
                let vel: [f64; 3] = std::array::from_fn(|i| n * s * p.coords()[i] + c * v.v[i]);
                (q, TangentVec::project(q, vel))
            })
            .collect();
        let pts: Vec<HPoint> = moved.iter().map(|(q, _)| *q).collect();
        let vel: Vec<TangentVec> = moved.into_iter().map(|(_, v)| v).collect();
        -self.inner(&self.tension(&pts), &vel)
    }

    /// Exact line search along `exp_f(t·τ)`.
    ///
    /// The root of `φ'` is bracketed by doubling from `1/β` (never beyond
    /// `2/α`), then located by safeguarded Newton with `φ'` from the first
    /// variation formula and `φ''` by central differences. Stops when
    /// `|φ'| ≤ 1e−10·max(1, |φ'(0)|)` or when the Newton update drops below
    /// the noise floor of `φ'`. Falls back to `1/β` when the search fails or
    /// ends above `φ(1/β)`.
    pub fn optimal_stepsize(&self, f: &[HPoint], tau: &[TangentVec], alpha: f64, beta: f64) -> LineSearch {
        const MAX_EVALS: usize = 50;
        let fallback = 1.0 / beta;
        let d0 = -self.inner(tau, tau);
        if !(d0 < 0.0) {
            return LineSearch { t: fallback, derivative: d0, evaluations: 0, fell_back: true };
        }
        let mut evals = 0;
        let eval = |t: f64, evals: &mut usize| {
            *evals += 1;
            self.line_derivative(f, tau, t)
        };
        let target = 1e-10 * d0.abs().max(1.0);
        let cap = 2.0 / alpha;
        let (mut lo, mut hi): (f64, f64) = (0.0, cap);
        let mut t = fallback;
        let mut d = eval(t, &mut evals);
        while evals < MAX_EVALS && d < -target && t < cap {
            lo = t;
            t = (2.0 * t).min(cap);
            d = eval(t, &mut evals);
        }
        if !d.is_finite() || d > target {
            hi = t;
            t = 0.5 * (lo + hi);
            d = eval(t, &mut evals);
        }
        let mut stagnated = false;
        while evals + 3 <= MAX_EVALS && !(d.abs() <= target) {
            if d < 0.0 {
                lo = lo.max(t);
            } else {
                hi = hi.min(t);
            }
            let h = 1e-5 * t;
            let dd = (eval(t + h, &mut evals) - eval(t - h, &mut evals)) / (2.0 * h);
            let mut next = if dd > 0.0 { t - d / dd } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            // at the resolution of φ' further Newton steps only add noise
            stagnated = (next - t).abs() <= 1e-8 * t;
            t = next;
            d = eval(t, &mut evals);
            if stagnated {
                break;
            }
        }
        let converged = d.abs() <= target || stagnated;
        let e_t = self.energy(&self.exp(tau, t));
        let e_fb = self.energy(&self.exp(tau, fallback));
        if !converged || !(e_t <= e_fb) || !(t > 0.0) {
            return LineSearch { t: fallback, derivative: d, evaluations: evals, fell_back: true };
        }
        LineSearch { t, derivative: d, evaluations: evals, fell_back: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearch {
    pub t: f64,
    /// `φ'(t)` at the returned stepsize.
    pub derivative: f64,
    pub evaluations: usize,
    pub fell_back: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Barycenter {
    Karcher,
    Cosh,
}

/// Image points at the vertex-orbit representatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivariantMap {
    pub points: Vec<HPoint>,
}

impl EquivariantMap {
    /// Image of the lift `ρ_L(word)·rep[v]`.
    pub fn at(&self, rho_r: &Representation, v: usize, word: &Word) -> HPoint {
        rho_r.eval(word).apply(&self.points[v])
    }
}

/// Replays the mesh construction in the target: corners go to the target
/// polygon's corners, Steiner points to the matching points of the target
/// sides, and each midpoint to the midpoint of the images.
pub fn initial_map(
    mesh: &TriangulatedMesh,
    target_polygon: &FundamentalPolygon,
    rho_r: &Representation,
) -> Result<EquivariantMap> {
    if rho_r.generators.len() != mesh.rho().generators.len()
        || target_polygon.side_count() != mesh.polygon.side_count()
    {
        return Err(Error::InitialMapMismatch(format!(
            "domain genus {} but target genus {}",
            mesh.genus,
            rho_r.genus()
        )));
    }
    let n = target_polygon.side_count();
    let s = mesh.steiner_per_side as f64;
    let mut pts: Vec<HPoint> = Vec::with_capacity(mesh.reps.len());
    for (i, o) in mesh.origins.iter().enumerate() {
        let p = match o {
            VertexOrigin::Corner => target_polygon.base,
            VertexOrigin::Steiner { side, index } => {
                let (a, b) = (&target_polygon.vertices[*side], &target_polygon.vertices[(side + 1) % n]);
                crate::geometry::geodesic_point(a, b, *index as f64 / (s + 1.0))
            }
            VertexOrigin::Midpoint { a, b, word } => {
                if *a >= i || *b >= i {
                    return Err(Error::InitialMapMismatch(format!("vertex {i} refers to a later vertex")));
                }
                crate::geometry::midpoint(&pts[*a], &rho_r.eval(word).apply(&pts[*b]))
            }
        };
        pts.push(p);
    }
    Ok(EquivariantMap { points: pts })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConstants {
    pub alpha: f64,
    pub beta: f64,
    pub c: f64,
    pub q: f64,
}

/// Lower bound on the Hessian: `1 / (9A(1 + √(D/Ω))²)`.
pub fn alpha_bound(s: &GraphStatistics) -> f64 {
    1.0 / (9.0 * s.area * (1.0 + (s.diameter as f64 / s.omega_min).sqrt()).powi(2))
}

/// Upper bound on the Hessian over the sublevel set of `e0`:
/// `(2VW/U)(1 + x coth x)` with `x = √(e0/Ω)`.
pub fn beta_bound(s: &GraphStatistics, e0: f64) -> f64 {
    let x = (e0 / s.omega_min).sqrt();
    let xc = if x < 1e-8 { 1.0 } else { x / x.tanh() };
    2.0 * s.max_valence as f64 * s.omega_max / s.mu_min * (1.0 + xc)
}

/// Constants of the linear rate `d(f_k, f*) ≤ c·q^k` for stepsize `t`.
pub fn convergence_constants(s: &GraphStatistics, e0: f64, e_star: f64, t: f64) -> Result<ConvergenceConstants> {
    let alpha = alpha_bound(s);
    let beta = beta_bound(s, e0);
    if t > 1.0 / beta * (1.0 + 1e-12) {
        return Err(Error::StepsizeOutOfRange { t, max: 1.0 / beta });
    }
    let c = ((2.0 / alpha) * (e0 - e_star).max(0.0)).sqrt();
    let q = (1.0 - t / 2.0 * alpha * (1.0 + alpha / beta)).max(0.0).sqrt();
    Ok(ConvergenceConstants { alpha, beta, c, q })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub method: Method,
    /// Fixed-step stepsize; `None` means `1/β`.
    pub stepsize: Option<f64>,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Record every `stride`-th state (the first and last are always kept).
    pub stride: usize,
}

impl Default for FlowConfig {
    fn default() -> FlowConfig {
        FlowConfig { method: Method::Fixed, stepsize: None, tolerance: DEFAULT_TOLERANCE, max_iterations: 2_000_000, stride: 1000 }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig("tolerance must be positive".into()));
        }
        if let Some(t) = self.stepsize {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::InvalidConfig("stepsize must be positive".into()));
            }
        }
        if self.stride == 0 {
            return Err(Error::InvalidConfig("stride must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub map: EquivariantMap,
    pub iteration: usize,
    pub energy: f64,
    /// Rounding-error bound of `energy`.
    pub energy_error: f64,
    pub tension_norm: f64,
    pub last_stepsize: f64,
    pub method: Method,
}

/// Step-by-step driver; the live service steers one of these.
///
/// The runner iterates in charts anchored at the initial map and reports
/// states in hyperboloid coordinates.
#[derive(Debug, Clone)]
pub struct FlowRunner {
    /// The problem in the runner's charts.
    pub problem: FlowProblem,
    pub config: FlowConfig,
    pub alpha: f64,
    pub beta: f64,
    /// Energy of the starting map, used for `β`.
    pub e0: f64,
    state: FlowState,
    /// Current map in chart coordinates.
    local: Vec<HPoint>,
    tension: Vec<TangentVec>,
    /// `L²(μ)` distance moved by the last step.
    displacement: f64,
}

impl FlowRunner {
    pub fn new(problem: FlowProblem, config: FlowConfig, initial: EquivariantMap) -> Result<FlowRunner> {
        config.validate()?;
        if initial.points.len() != problem.vertex_count() {
            return Err(Error::DimensionMismatch { expected: problem.vertex_count(), got: initial.points.len() });
        }
        let problem = problem.recharted(&problem.to_chart(&initial));
        let local = vec![HPoint::ORIGIN; initial.points.len()];
        let (e0, energy_error) = problem.energy_with_error(&local);
        let alpha = alpha_bound(problem.stats());
        let beta = beta_bound(problem.stats(), e0);
        let tension = problem.tension(&local);
        let state = FlowState {
            tension_norm: problem.norm(&tension),
            map: initial,
            iteration: 0,
            energy: e0,
            energy_error,
            last_stepsize: 0.0,
            method: config.method,
        };
        Ok(FlowRunner { problem, config, alpha, beta, e0, state, local, tension, displacement: f64::INFINITY })
    }

    pub fn state(&self) -> &FlowState {
        &self.state
    }

    /// Current map in the runner's chart coordinates.
    pub fn chart_points(&self) -> &[HPoint] {
        &self.local
    }

    /// Current tension field in the runner's chart coordinates.
    pub fn tension(&self) -> &[TangentVec] {
        &self.tension
    }

    /// Tension below tolerance. The cosh iteration has a different fixed
    /// point, so it also stops once a step moves less than the tolerance.
    pub fn converged(&self) -> bool {
        self.state.tension_norm <= self.config.tolerance
            || (self.config.method == Method::CoshCom && self.displacement <= self.config.tolerance)
    }

    /// Converged or out of iterations.
    pub fn finished(&self) -> bool {
        self.converged() || self.state.iteration >= self.config.max_iterations
    }

    /// Whether the current state belongs in the record: every `stride`-th
    /// iteration and the last one.
    pub fn should_record(&self) -> bool {
        self.state.iteration % self.config.stride == 0 || self.finished()
    }

    /// `L²(μ)` distance moved by the last step.
    pub fn displacement(&self) -> f64 {
        self.displacement
    }

    pub fn set_method(&mut self, m: Method) {
        self.displacement = f64::INFINITY;
        self.config.method = m;
        self.state.method = m;
    }

    pub fn set_stepsize(&mut self, t: Option<f64>) -> Result<()> {
        if let Some(t) = t {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::InvalidConfig("stepsize must be positive".into()));
            }
        }
        self.config.stepsize = t;
        Ok(())
    }

    pub fn fixed_stepsize(&self) -> f64 {
        self.config.stepsize.unwrap_or(1.0 / self.beta)
    }

    /// Advances one iteration of the configured method.
    pub fn step(&mut self) -> Result<()> {
        let f = &self.local;
        let (next, t) = match self.config.method {
            Method::Fixed => {
                let t = self.fixed_stepsize();
                (self.problem.exp(&self.tension, t), t)
            }
            Method::Optimal => {
                let ls = self.problem.optimal_stepsize(f, &self.tension, self.alpha, self.beta);
                (self.problem.exp(&self.tension, ls.t), ls.t)
            }
            Method::KarcherCom => {
                (self.problem.com_step(f, Barycenter::Karcher, self.config.tolerance / 100.0)?, 0.0)
            }
            Method::CoshCom => (self.problem.com_step(f, Barycenter::Cosh, 0.0)?, 0.0),
        };
        self.displacement = self.problem.distance(f, &next);
        self.tension = self.problem.tension(&next);
        let (energy, energy_error) = self.problem.energy_with_error(&next);
        self.state = FlowState {
            energy,
            energy_error,
            tension_norm: self.problem.norm(&self.tension),
            map: self.problem.to_global(&next),
            iteration: self.state.iteration + 1,
            last_stepsize: t,
            method: self.config.method,
        };
        self.local = next;
        Ok(())
    }
}

/// Result of [`run_flow`]: recorded states plus the full energy, tension and
/// stepsize histories.
#[derive(Debug, Clone)]
pub struct FlowRun {
    pub recorded: Vec<FlowState>,
    pub energies: Vec<f64>,
    pub energy_errors: Vec<f64>,
    pub tension_norms: Vec<f64>,
    pub stepsizes: Vec<f64>,
    pub final_state: FlowState,
    pub converged: bool,
    pub alpha: f64,
    pub beta: f64,
}

impl FlowRun {
    pub fn iterations(&self) -> usize {
        self.final_state.iteration
    }
}

/// Iterates until the tension norm drops to the tolerance or the iteration
/// budget runs out. `on_record` sees every recorded state as it is produced.
pub fn run_flow(
    problem: &FlowProblem,
    config: &FlowConfig,
    initial: EquivariantMap,
    on_record: impl FnMut(&FlowState),
) -> Result<FlowRun> {
    run_runner(FlowRunner::new(problem.clone(), config.clone(), initial)?, on_record)
}

/// [`run_flow`] on an existing runner, from its current state.
pub fn run_runner(mut runner: FlowRunner, mut on_record: impl FnMut(&FlowState)) -> Result<FlowRun> {
    let mut recorded = vec![runner.state().clone()];
    on_record(runner.state());
    let mut energies = vec![runner.state().energy];
    let mut energy_errors = vec![runner.state().energy_error];
    let mut tension_norms = vec![runner.state().tension_norm];
    let mut stepsizes = Vec::new();
    while !runner.finished() {
        runner.step()?;
        let s = runner.state();
        energies.push(s.energy);
        energy_errors.push(s.energy_error);
        tension_norms.push(s.tension_norm);
        stepsizes.push(s.last_stepsize);
        if runner.should_record() {
            recorded.push(s.clone());
            on_record(s);
        }
    }
    let final_state = runner.state().clone();
    let converged = runner.converged();
    Ok(FlowRun {
        recorded,
        energies,
        energy_errors,
        tension_norms,
        stepsizes,
        final_state,
        converged,
        alpha: runner.alpha,
        beta: runner.beta,
    })
}

/// Like [`run_flow`] but fails with `FlowNotConverged` when the budget runs
/// out; the partial run is available through [`run_flow`].
pub fn run_flow_strict(problem: &FlowProblem, config: &FlowConfig, initial: EquivariantMap) -> Result<FlowRun> {
    let run = run_flow(problem, config, initial, |_| {})?;
    if !run.converged {
        return Err(Error::FlowNotConverged { iterations: run.iterations(), tension: run.final_state.tension_norm });
    }
    Ok(run)
}

/// Energy monotonicity audit of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentAudit {
    /// Steps where the energy went up by more than its error bound.
    pub increases: usize,
    /// Resolvable steps where the energy failed to go strictly down.
    pub stalls: usize,
    /// Steps whose guaranteed decrease is below the energy error bound.
    pub unresolved: usize,
}

impl DescentAudit {
    pub fn strictly_decreasing(&self) -> bool {
        self.increases == 0 && self.stalls == 0
    }
}

/// Classifies each energy step. A heat-flow step with `t ≤ 1/β` decreases
/// the energy by at least `(t/2)‖τ‖²`; it is resolvable when that exceeds
/// the error bound of the two energies. Averaging steps are resolvable when
/// the observed change exceeds the bound.
pub fn audit_descent(energies: &[f64], errors: &[f64], tension_norms: &[f64], stepsizes: &[f64]) -> DescentAudit {
    let mut a = DescentAudit { increases: 0, stalls: 0, unresolved: 0 };
    for k in 0..energies.len().saturating_sub(1) {
        let (e0, e1) = (energies[k], energies[k + 1]);
        let res = errors[k] + errors[k + 1];
        let t = stepsizes.get(k).copied().unwrap_or(0.0);
        let expected = if t > 0.0 { 0.5 * t * tension_norms[k].powi(2) } else { (e0 - e1).abs() };
        if e1 > e0 + res {
            a.increases += 1;
        } else if expected <= res {
            a.unresolved += 1;
        } else if !(e1 < e0) {
            a.stalls += 1;
        }
    }
    a
}

impl FlowRun {
    pub fn descent_audit(&self) -> DescentAudit {
        audit_descent(&self.energies, &self.energy_errors, &self.tension_norms, &self.stepsizes)
    }
}

/// Post-hoc rate audit: `d(f_k, f*) ≤ c·q^k` at every recorded iterate, with
/// `f*` the final state. Returns the worst ratio `d / (c q^k)`.
pub fn audit_rate(problem: &FlowProblem, run: &FlowRun, k: &ConvergenceConstants) -> f64 {
    let star = &run.final_state.map.points;
    run.recorded
        .iter()
        .map(|s| {
            let d = problem.distance(&s.map.points, star);
            let bound = k.c * k.q.powi(s.iteration as i32);
            if d == 0.0 {
                0.0
            } else {
                d / bound
            }
        })
        .fold(0.0, f64::max)
}
