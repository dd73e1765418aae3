//! Numerical certification of the closed-form geometry and of the
//! asymptotic and convergence claims: quadrilateral identity, first and
//! second variations of the two-point energy, barycenter gap scaling, the
//! mean-value property, and the stepsize and method experiments.

use hypmap_core::error::{Error, Result};
use hypmap_core::flow::{run_flow, FlowConfig, Method};
use hypmap_core::geometry::{
    cosh_barycenter, dist, exp_map, midpoint, karcher_barycenter, karcher_barycenter_from, log_map, oriented_angle,
    parallel_transport, sinhc, tangent_frame, HPoint, Isometry, TangentVec, WeightedPointSet,
};
use hypmap_core::pipeline::{Pipeline, RunConfig};
use gauss_quad::legendre::GaussLegendre;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;

pub mod suites;

/// Finite-difference step for second derivatives.
pub const H_SECOND: f64 = 1e-4;
/// Finite-difference step for first derivatives.
pub const H_FIRST: f64 = 1e-6;

/// `|LHS − RHS|` of the cosh(DC) identity for the quadrilateral `ABCD`.
///
/// `α` is the oriented angle at `A` from `AB` to `AD`; `β` is the angle at
/// `B` from `BA` to `BC`, measured with the opposite orientation, so that
/// both are interior angles of a convex quadrilateral.
pub fn quadrilateral_residual(a: &HPoint, b: &HPoint, c: &HPoint, d: &HPoint) -> Result<f64> {
    let (ab, bc, da) = (dist(a, b), dist(b, c), dist(d, a));
    if ab < 1e-12 {
        return Err(Error::DegenerateQuadrilateral);
    }
    let alpha = if da > 0.0 { oriented_angle(&log_map(a, b), &log_map(a, d)) } else { 0.0 };
    let beta = if bc > 0.0 { -oriented_angle(&log_map(b, a), &log_map(b, c)) } else { 0.0 };
    let lhs = dist(d, c).cosh();
    let rhs = ab.cosh() * (da.cosh() * bc.cosh() + da.sinh() * bc.sinh() * alpha.cos() * beta.cos())
        - ab.sinh() * (da.cosh() * bc.sinh() * beta.cos() + da.sinh() * bc.cosh() * alpha.cos())
        - da.sinh() * bc.sinh() * alpha.sin() * beta.sin();
    Ok((lhs - rhs).abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairVariation {
    pub a: HPoint,
    pub b: HPoint,
    pub u: TangentVec,
    pub v: TangentVec,
}

impl PairVariation {
    /// Checks that `u` is based at `A` and `v` at `B`.
    pub fn new(a: HPoint, b: HPoint, u: TangentVec, v: TangentVec) -> Result<PairVariation> {
        let close = |p: &HPoint, q: &HPoint| dist(p, q) < 1e-12;
        if !close(&u.base, &a) || !close(&v.base, &b) {
            return Err(Error::InvalidCoordinates("tangent vectors must be based at A and B".into()));
        }
        Ok(PairVariation { a, b, u, v })
    }

    /// The same variation moved by an isometry that puts the midpoint of `AB`
    /// at the origin. Every quantity compared here is invariant, and near the
    /// origin distances are free of cancellation, which the finite
    /// differences need.
    pub fn centered(&self) -> PairVariation {
        let h = Isometry::moving_origin_to(&midpoint(&self.a, &self.b)).inverse();
        PairVariation {
            a: h.apply(&self.a),
            b: h.apply(&self.b),
            u: h.apply_tangent(&self.u),
            v: h.apply_tangent(&self.v),
        }
    }

    /// `(D, α, β)`: `α` from `AB` to `u` at `A`, `β` from the continuation of
    /// `AB` beyond `B` to `v`, both in the plane's orientation.
    pub fn angles(&self) -> (f64, f64, f64) {
        let d = dist(&self.a, &self.b);
        let ab = log_map(&self.a, &self.b);
        let beyond = log_map(&self.b, &self.a).scaled(-1.0);
        let alpha = if self.u.norm() > 0.0 { oriented_angle(&ab, &self.u) } else { 0.0 };
        let beta = if self.v.norm() > 0.0 { oriented_angle(&beyond, &self.v) } else { 0.0 };
        (d, alpha, beta)
    }

    /// `E_AB(t) = ½ d(exp_A(tu), exp_B(tv))²`.
    pub fn energy(&self, t: f64) -> f64 {
        let d = dist(&exp_map(&self.u.scaled(t)), &exp_map(&self.v.scaled(t)));
        0.5 * d * d
    }

    /// `F_AB(t) = cosh d(exp_A(tu), exp_B(tv)) − 1`.
    pub fn cosh_energy(&self, t: f64) -> f64 {
        let d = dist(&exp_map(&self.u.scaled(t)), &exp_map(&self.v.scaled(t)));
        let s = (d / 2.0).sinh();
        2.0 * s * s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondVariation {
    pub analytic: f64,
    pub finite_diff: f64,
    pub lower_bound: f64,
}

pub fn pair_second_variation(p: &PairVariation) -> SecondVariation {
    let p = &p.centered();
    let (d, al, be) = p.angles();
    let (nu, nv) = (p.u.norm(), p.v.norm());
    let a = (nu * al.cos() - nv * be.cos()).powi(2);
    let b = nu * nu * al.sin().powi(2) + nv * nv * be.sin().powi(2);
    let c = (nu * al.sin() - nv * be.sin()).powi(2);
    let th = d * (d / 2.0).tanh();
    let dcoth = if d < 1e-8 { 1.0 } else { d / d.tanh() };
    let analytic = a + b * th + c * (dcoth - th);
    let h = H_SECOND;
    let finite_diff = (p.energy(h) - 2.0 * p.energy(0.0) + p.energy(-h)) / (h * h);
    let lower_bound = p.u.minus(&parallel_transport(&p.v, &p.a)).norm_sq();
    SecondVariation { analytic, finite_diff, lower_bound }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstVariation {
    pub cosh_analytic: f64,
    pub cosh_finite_diff: f64,
    pub energy_analytic: f64,
    pub energy_finite_diff: f64,
}

impl FirstVariation {
    pub fn discrepancy(&self) -> f64 {
        (self.cosh_analytic - self.cosh_finite_diff)
            .abs()
            .max((self.energy_analytic - self.energy_finite_diff).abs())
    }
}

/// Analytic first derivatives of `F_AB` and `E_AB` at `t = 0` against
/// central differences.
pub fn first_variation(p: &PairVariation) -> FirstVariation {
    let p = &p.centered();
    let (d, al, be) = p.angles();
    let m = p.u.norm() * al.cos() - p.v.norm() * be.cos();
    let h = H_FIRST;
    FirstVariation {
        cosh_analytic: -d.sinh() * m,
        cosh_finite_diff: (p.cosh_energy(h) - p.cosh_energy(-h)) / (2.0 * h),
        energy_analytic: -d * m,
        energy_finite_diff: (p.energy(h) - p.energy(-h)) / (2.0 * h),
    }
}

pub fn first_variation_check(p: &PairVariation) -> f64 {
    first_variation(p).discrepancy()
}

/// Log-log regression of `values` against `radii`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit in log space.
    pub residual: f64,
    /// Whether the largest radius was dropped from the fit.
    pub dropped_largest: bool,
}

fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let res = (x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum::<f64>() / n).sqrt();
    (slope, intercept, res)
}

/// Fits `log value = slope·log r + intercept`. The largest radius is
/// excluded when its own residual exceeds three times the fit residual.
pub fn scaling_report(radii: Vec<f64>, values: Vec<f64>) -> ScalingReport {
    let lx: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ly: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let (mut slope, mut intercept, mut residual) = fit_line(&lx, &ly);
    let mut dropped_largest = false;
    if lx.len() > 3 {
        let imax = (0..lx.len()).max_by(|&i, &j| lx[i].total_cmp(&lx[j])).unwrap_or(0);
        let own = (ly[imax] - intercept - slope * lx[imax]).abs();
        if own > 3.0 * residual {
            let keep: Vec<usize> = (0..lx.len()).filter(|&i| i != imax).collect();
            let kx: Vec<f64> = keep.iter().map(|&i| lx[i]).collect();
            let ky: Vec<f64> = keep.iter().map(|&i| ly[i]).collect();
            (slope, intercept, residual) = fit_line(&kx, &ky);
            dropped_largest = true;
        }
    }
    ScalingReport { radii, values, slope, intercept, residual, dropped_largest }
}

/// Weighted point set of `n` points inside the ball of radius `r` about `c`.
/// The same seed gives the same shape at every radius.
pub fn random_cluster(rng: &mut impl Rng, c: &HPoint, r: f64, n: usize) -> Result<WeightedPointSet> {
    let (e1, e2) = tangent_frame(c);
    let mut pts = Vec::with_capacity(n);
    let mut ws = Vec::with_capacity(n);
    for _ in 0..n {
        let (rho, th) = (rng.gen_range(0.0..1.0f64).sqrt() * r, rng.gen_range(0.0..2.0 * PI));
        pts.push(exp_map(&e1.scaled(rho * th.cos()).plus(&e2.scaled(rho * th.sin()))));
        ws.push(rng.gen_range(0.1..1.0));
    }
    WeightedPointSet::new(pts, ws)
}

/// Bound on the distance between the two barycenters of points within `r`
/// of a common center.
pub fn barycenter_gap_bound(r: f64) -> f64 {
    2.0 * r * (sinhc(2.0 * r) - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarycenterGapReport {
    pub scaling: ScalingReport,
    pub bounds: Vec<f64>,
    pub within_bound: bool,
}

/// Gap between the Karcher and cosh barycenters of one fixed random shape
/// scaled to each radius.
pub fn barycenter_gap_experiment(seed: u64, radii: &[f64]) -> Result<BarycenterGapReport> {
    use rand::SeedableRng;
    let c = HPoint::from_xy(0.3, -0.2);
    let mut values = Vec::with_capacity(radii.len());
    let mut bounds = Vec::with_capacity(radii.len());
    let mut within = true;
    for &r in radii {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let s = random_cluster(&mut rng, &c, r, 7)?;
        let k = karcher_barycenter(&s, (1e-6 * r.powi(3)).max(1e-16))?;
        let gap = dist(&k, &cosh_barycenter(&s));
        let bound = barycenter_gap_bound(r);
        within &= gap <= bound;
        values.push(gap);
        bounds.push(bound);
    }
    Ok(BarycenterGapReport { scaling: scaling_report(radii.to_vec(), values), bounds, within_bound: within })
}

/// Test maps for the mean-value experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanValueMap {
    /// A fixed orientation-preserving isometry (harmonic).
    Isometry,
    /// `(x, y) ↦ (x + y, y)` in upper half-plane coordinates.
    Shear,
}

impl MeanValueMap {
    pub fn apply(&self, p: &HPoint) -> HPoint {
        match self {
            MeanValueMap::Isometry => Isometry::translation(0.7).compose(&Isometry::rotation(0.3)).apply(p),
            MeanValueMap::Shear => {
                let (x, y) = p.to_uhp();
                HPoint::from_uhp(x + y, y)
            }
        }
    }
}

/// Step for the finite-difference tension of a smooth map.
pub const TENSION_STEP: f64 = 1e-3;

/// Tension `Σᵢ ∇df(eᵢ, eᵢ)` of a smooth map at `x`, as the sum of the
/// covariant accelerations of `f` along the two frame geodesics, each by a
/// central second difference in the target's normal coordinates.
pub fn numerical_tension(f: impl Fn(&HPoint) -> HPoint, x: &HPoint, h: f64) -> TangentVec {
    let (e1, e2) = tangent_frame(x);
    let fx = f(x);
    let mut acc = TangentVec::zero(fx);
    for e in [e1, e2] {
        let plus = log_map(&fx, &f(&exp_map(&e.scaled(h))));
        let minus = log_map(&fx, &f(&exp_map(&e.scaled(-h))));
        acc = acc.plus(&plus.plus(&minus).scaled(1.0 / (h * h)));
    }
    acc
}

const QUAD_TOL: f64 = 1e-11;
const QUAD_MAX_LEVELS: usize = 6;

/// Karcher barycenter of `f ∘ exp_x` over the tangent ball of radius `r`
/// with normalized Lebesgue measure, by Gauss-Legendre (radial) times
/// uniform (angular) quadrature, doubled until the result moves less than
/// `1e−11`.
pub fn ball_average(f: impl Fn(&HPoint) -> HPoint, x: &HPoint, r: f64) -> Result<HPoint> {
    let (e1, e2) = tangent_frame(x);
    let mut prev: Option<HPoint> = None;
    let (mut nr, mut nt) = (6usize, 12usize);
    for _ in 0..QUAD_MAX_LEVELS {
        let rule = GaussLegendre::new(nr).map_err(|_| Error::QuadratureFailed)?;
        let mut pts = Vec::with_capacity(nr * nt);
        let mut ws = Vec::with_capacity(nr * nt);
        for &(xi, w) in rule.as_node_weight_pairs() {
            let rho = 0.5 * r * (xi + 1.0);
            for j in 0..nt {
                let th = 2.0 * PI * (j as f64 + 0.5) / nt as f64;
                let v = e1.scaled(rho * th.cos()).plus(&e2.scaled(rho * th.sin()));
                pts.push(f(&exp_map(&v)));
                ws.push(w * rho);
            }
        }
        let s = WeightedPointSet::new(pts, ws)?;
        let start = prev.unwrap_or_else(|| f(x));
        let b = karcher_barycenter_from(&s, start, 1e-15)?;
        if let Some(p) = prev {
            if dist(&p, &b) < QUAD_TOL {
                return Ok(b);
            }
        }
        prev = Some(b);
        nr *= 2;
        nt *= 2;
    }
    Err(Error::QuadratureFailed)
}

/// Karcher barycenter of `f ∘ exp_x` over the tangent circle of radius `r`,
/// uniform angular quadrature doubled until the result moves less than
/// `1e−11`.
pub fn sphere_average(f: impl Fn(&HPoint) -> HPoint, x: &HPoint, r: f64) -> Result<HPoint> {
    let (e1, e2) = tangent_frame(x);
    let mut prev: Option<HPoint> = None;
    let mut nt = 12usize;
    for _ in 0..QUAD_MAX_LEVELS {
        let pts: Vec<HPoint> = (0..nt)
            .map(|j| {
                let th = 2.0 * PI * (j as f64 + 0.5) / nt as f64;
                f(&exp_map(&e1.scaled(r * th.cos()).plus(&e2.scaled(r * th.sin()))))
            })
            .collect();
        let s = WeightedPointSet::uniform(pts)?;
        let b = karcher_barycenter_from(&s, prev.unwrap_or_else(|| f(x)), 1e-15)?;
        if let Some(p) = prev {
            if dist(&p, &b) < QUAD_TOL {
                return Ok(b);
            }
        }
        prev = Some(b);
        nt *= 2;
    }
    Err(Error::QuadratureFailed)
}

/// Averaging operator of the mean-value experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Average {
    /// Ball average, leading term `r²/8 · τ`.
    Ball,
    /// Circle average, leading term `r²/4 · τ`.
    Sphere,
}

/// Defect of the ball average, one value per radius, with its log-log fit.
///
/// Isometry: `d(f(x), B_r f(x))`. Shear: `d(B_r f(x), exp_{f(x)}(r²/8 · τ))`
/// with `τ` the finite-difference tension.
pub fn mean_value_experiment(kind: MeanValueMap, x: &HPoint, radii: &[f64]) -> Result<ScalingReport> {
    mean_value_experiment_with(kind, Average::Ball, x, radii)
}

/// As [`mean_value_experiment`] with a choice of averaging operator.
pub fn mean_value_experiment_with(
    kind: MeanValueMap,
    average: Average,
    x: &HPoint,
    radii: &[f64],
) -> Result<ScalingReport> {
    if radii.len() < 5 || radii.iter().any(|&r| !(r > 0.0 && r <= 0.5)) {
        return Err(Error::InvalidConfig("need at least five radii in (0, 0.5]".into()));
    }
    let f = |p: &HPoint| kind.apply(p);
    let fx = f(x);
    let tau = numerical_tension(f, x, TENSION_STEP);
    let mut values = Vec::with_capacity(radii.len());
    for &r in radii {
        let (b, coef) = match average {
            Average::Ball => (ball_average(f, x, r)?, r * r / 8.0),
            Average::Sphere => (sphere_average(f, x, r)?, r * r / 4.0),
        };
        let v = match kind {
            MeanValueMap::Isometry => dist(&fx, &b),
            MeanValueMap::Shear => dist(&b, &exp_map(&tau.scaled(coef))),
        };
        values.push(v);
    }
    Ok(scaling_report(radii.to_vec(), values))
}

/// Text table: a header row and data rows, columns separated by two spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Table {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut widths: Vec<usize> = self.columns.iter().map(|c| c.len()).collect();
        for r in &self.rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let mut s = String::new();
        let line = |s: &mut String, cells: &[String]| {
            let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            let _ = writeln!(s, "{}", parts.join("  ").trim_end());
        };
        line(&mut s, &self.columns);
        for r in &self.rows {
            line(&mut s, r);
        }
        s
    }
}

/// Target lengths `(2, 2, ℓ)` with twists `(−1.5, 2, 0.5)`.
pub fn target_family(ells: &[f64]) -> Vec<hypmap_core::surface::FnCoordinates> {
    ells.iter()
        .map(|&l| hypmap_core::surface::FnCoordinates::new(vec![2.0, 2.0, l], vec![-1.5, 2.0, 0.5]))
        .collect()
}

/// Third target length of each member of the standard target family.
pub const FAMILY_ELLS: [f64; 4] = [2.5, 1.5, 0.5, 0.2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub ell: f64,
    pub stepsize: f64,
    /// `None` when the run diverged or exhausted its budget.
    pub iterations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFit {
    pub ell: f64,
    pub c1: f64,
    pub c2: f64,
    pub r_squared: f64,
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    pub fits: Vec<SweepFit>,
    /// `1/β` per target, the largest stepsize with guaranteed descent.
    pub max_stepsize: Vec<f64>,
}

impl SweepReport {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&["ell", "stepsize", "iterations"]);
        for e in &self.entries {
            t.push(vec![
                format!("{}", e.ell),
                format!("{:.6e}", e.stepsize),
                e.iterations.map_or("failed".to_string(), |n| n.to_string()),
            ]);
        }
        t
    }
}

/// Least-squares fit of `n ≈ −C₁ / log(1 − C₂ t)`: `C₁` solved linearly for
/// each `C₂`, `C₂` by golden-section search on the residual.
pub fn fit_iteration_profile(ts: &[f64], ns: &[f64]) -> (f64, f64, f64) {
    let tmax = ts.iter().cloned().fold(0.0, f64::max);
    let basis = |c2: f64| -> Vec<f64> { ts.iter().map(|t| -1.0 / (1.0 - c2 * t).ln()).collect() };
    let sse = |c2: f64| -> (f64, f64) {
        let g = basis(c2);
        let c1 = g.iter().zip(ns).map(|(a, b)| a * b).sum::<f64>() / g.iter().map(|a| a * a).sum::<f64>();
        (g.iter().zip(ns).map(|(a, b)| (b - c1 * a).powi(2)).sum(), c1)
    };
    // search C₂ on a log scale over (0, 1/tmax)
    let (mut lo, mut hi) = ((1e-9 / tmax).ln(), ((1.0 - 1e-12) / tmax).ln());
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if sse(a.exp()).0 < sse(b.exp()).0 {
            hi = b;
        } else {
            lo = a;
        }
    }
    let c2 = (0.5 * (lo + hi)).exp();
    let (res, c1) = sse(c2);
    let mean = ns.iter().sum::<f64>() / ns.len() as f64;
    let tot: f64 = ns.iter().map(|n| (n - mean).powi(2)).sum();
    let r2 = if tot > 0.0 { 1.0 - res / tot } else { 1.0 };
    (c1, c2, r2)
}

/// Fixed-step iteration counts for each target and each stepsize factor.
/// Stepsizes are `factor / max(factors) · (1/β)` so the largest one is the
/// bound of guaranteed descent.
pub fn stepsize_sweep(base: &RunConfig, ells: &[f64], factors: &[f64]) -> Result<SweepReport> {
    if factors.is_empty() {
        return Err(Error::InvalidConfig("empty stepsize list".into()));
    }
    let fmax = factors.iter().cloned().fold(0.0, f64::max);
    let mut entries = Vec::new();
    let mut fits = Vec::new();
    let mut max_stepsize = Vec::new();
    for (ell, target) in ells.iter().zip(target_family(ells)) {
        let mut cfg = base.clone();
        cfg.target = target;
        let p = Pipeline::build(&cfg)?;
        let e0 = p.problem.energy(&p.initial.points);
        let tmax = 1.0 / hypmap_core::flow::beta_bound(p.problem.stats(), e0);
        max_stepsize.push(tmax);
        let (mut ts, mut ns) = (Vec::new(), Vec::new());
        for &fac in factors {
            let t = fac / fmax * tmax;
            let fc = FlowConfig { method: Method::Fixed, stepsize: Some(t), stride: usize::MAX, ..cfg.flow_config() };
            let iterations = match run_flow(&p.problem, &fc, p.initial.clone(), |_| {}) {
                Ok(run) if run.converged => Some(run.iterations()),
                _ => None,
            };
            if let Some(n) = iterations {
                ts.push(t);
                ns.push(n as f64);
            }
            entries.push(SweepEntry { ell: *ell, stepsize: t, iterations });
        }
        let monotone = ns.windows(2).all(|w| w[1] <= w[0]) && ns.len() == factors.len();
        let (c1, c2, r_squared) =
            if ns.len() >= 3 { fit_iteration_profile(&ts, &ns) } else { (f64::NAN, f64::NAN, f64::NAN) };
        fits.push(SweepFit { ell: *ell, c1, c2, r_squared, monotone });
    }
    Ok(SweepReport { entries, fits, max_stepsize })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEntry {
    pub ell: f64,
    pub method: Method,
    pub iterations: Option<usize>,
    pub final_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub entries: Vec<ComparisonEntry>,
    /// Per target: largest pairwise L²(μ) distance between final maps.
    pub max_pairwise_distance: Vec<f64>,
}

impl ComparisonReport {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&["ell", "method", "iterations", "energy"]);
        for e in &self.entries {
            t.push(vec![
                format!("{}", e.ell),
                e.method.to_string(),
                e.iterations.map_or("failed".to_string(), |n| n.to_string()),
                format!("{:.12}", e.final_energy),
            ]);
        }
        t
    }

    pub fn iterations(&self, ell: f64, m: Method) -> Option<usize> {
        self.entries.iter().find(|e| e.ell == ell && e.method == m).and_then(|e| e.iterations)
    }
}

/// Iteration counts of each method for each target, to a common tolerance.
pub fn method_comparison(base: &RunConfig, ells: &[f64], methods: &[Method]) -> Result<ComparisonReport> {
    let mut entries = Vec::new();
    let mut max_pairwise_distance = Vec::new();
    for (ell, target) in ells.iter().zip(target_family(ells)) {
        let mut cfg = base.clone();
        cfg.target = target;
        let p = Pipeline::build(&cfg)?;
        let mut finals = Vec::new();
        for &m in methods {
            let fc = FlowConfig { method: m, stride: usize::MAX, ..cfg.flow_config() };
            let run = run_flow(&p.problem, &fc, p.initial.clone(), |_| {})?;
            entries.push(ComparisonEntry {
                ell: *ell,
                method: m,
                iterations: run.converged.then(|| run.iterations()),
                final_energy: run.final_state.energy,
            });
            finals.push(run.final_state.map.points);
        }
        let mut worst: f64 = 0.0;
        for i in 0..finals.len() {
            for j in i + 1..finals.len() {
                worst = worst.max(p.problem.distance(&finals[i], &finals[j]));
            }
        }
        max_pairwise_distance.push(worst);
    }
    Ok(ComparisonReport { entries, max_pairwise_distance })
}
