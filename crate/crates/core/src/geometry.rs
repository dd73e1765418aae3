//! Hyperbolic plane in the hyperboloid model.
//!
//! Points live on the upper sheet of `x1² + x2² − x3² = −1` in Minkowski
//! space. The Poincaré disk and upper half-plane only appear as conversions.
//! Isometries are `SL(2,R)` matrices acting by Möbius transformations on the
//! upper half-plane, transported to the hyperboloid through
//! `z = x + iy ↦ ((|z|²−1)/2y, x/y, (|z|²+1)/2y)`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Points beyond this height are rejected: `cosh` growth leaves too few
/// significant digits for distances and log maps.
pub const MAX_X3: f64 = 1e8;

pub type Vec3 = [f64; 3];

#[inline]
pub fn mink(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] - a[2] * b[2]
}

#[inline]
fn add(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn scale(s: f64, a: &Vec3) -> Vec3 {
    [s * a[0], s * a[1], s * a[2]]
}

/// Minkowski cross product: `⟨a ⊠ b, a⟩ = ⟨a ⊠ b, b⟩ = 0`.
#[inline]
pub fn mink_cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        -(a[0] * b[1] - a[1] * b[0]),
    ]
}

/// `sinh(x)/x`, equal to 1 at 0.
pub fn sinhc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 + x2 / 6.0 * (1.0 + x2 / 20.0)
    } else {
        x.sinh() / x
    }
}

/// `arccosh` with its argument clamped to `[1, ∞)`.
pub fn acosh_clamped(c: f64) -> f64 {
    c.max(1.0).acosh()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HPoint {
    x: Vec3,
}

impl HPoint {
    pub const ORIGIN: HPoint = HPoint { x: [0.0, 0.0, 1.0] };

    /// Projects a timelike vector onto the upper sheet.
    pub fn from_minkowski(x: Vec3) -> Result<HPoint> {
        let n2 = -mink(&x, &x);
        if !(n2 > 0.0) || !x[2].is_finite() {
            return Err(Error::CoordinateOverflow { x3: x[2] });
        }
        let s = x[2].signum() / n2.sqrt();
        let p = HPoint { x: scale(s, &x) };
        p.check()?;
        Ok(p)
    }

    /// Lifts `(x1, x2)` to the sheet, recomputing `x3`.
    pub fn from_xy(x1: f64, x2: f64) -> HPoint {
        HPoint { x: [x1, x2, (1.0 + x1 * x1 + x2 * x2).sqrt()] }
    }

    /// Renormalizes without the overflow check; for internal use on values
    /// known to be close to the sheet.
    pub(crate) fn normalized(x: Vec3) -> HPoint {
        let n2 = -mink(&x, &x);
        HPoint { x: scale(x[2].signum() / n2.sqrt(), &x) }
    }

    pub fn coords(&self) -> Vec3 {
        self.x
    }

    pub fn x1(&self) -> f64 {
        self.x[0]
    }

    pub fn x2(&self) -> f64 {
        self.x[1]
    }

    pub fn x3(&self) -> f64 {
        self.x[2]
    }

    pub fn check(&self) -> Result<()> {
        if self.x[2] > MAX_X3 || !self.x.iter().all(|v| v.is_finite()) {
            Err(Error::CoordinateOverflow { x3: self.x[2] })
        } else {
            Ok(())
        }
    }

    /// Upper half-plane point `(x, y)`, `y > 0`.
    pub fn from_uhp(x: f64, y: f64) -> HPoint {
        let r2 = x * x + y * y;
        HPoint::normalized([(r2 - 1.0) / (2.0 * y), x / y, (r2 + 1.0) / (2.0 * y)])
    }

    pub fn to_uhp(&self) -> (f64, f64) {
        let y = 1.0 / (self.x[2] - self.x[0]);
        (self.x[1] * y, y)
    }

    pub fn to_disk(&self) -> (f64, f64) {
        let d = 1.0 + self.x[2];
        (self.x[0] / d, self.x[1] / d)
    }

    pub fn from_disk(u: f64, v: f64) -> HPoint {
        let r2 = u * u + v * v;
        let s = 1.0 / (1.0 - r2);
        HPoint::normalized([2.0 * u * s, 2.0 * v * s, (1.0 + r2) * s])
    }

    /// Beltrami-Klein coordinates; geodesics are straight chords there.
    pub fn to_klein(&self) -> (f64, f64) {
        (self.x[0] / self.x[2], self.x[1] / self.x[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentVec {
    pub base: HPoint,
    pub v: Vec3,
}

impl TangentVec {
    pub fn zero(base: HPoint) -> TangentVec {
        TangentVec { base, v: [0.0; 3] }
    }

    /// Projects an ambient vector onto the tangent plane at `base`.
    pub fn project(base: HPoint, w: Vec3) -> TangentVec {
        let s = mink(&w, &base.x);
        TangentVec { base, v: add(&w, &scale(s, &base.x)) }
    }

    pub fn norm_sq(&self) -> f64 {
        mink(&self.v, &self.v).max(0.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dot(&self, other: &TangentVec) -> f64 {
        mink(&self.v, &other.v)
    }

    pub fn scaled(&self, s: f64) -> TangentVec {
        TangentVec { base: self.base, v: scale(s, &self.v) }
    }

    pub fn plus(&self, other: &TangentVec) -> TangentVec {
        TangentVec { base: self.base, v: add(&self.v, &other.v) }
    }

    pub fn minus(&self, other: &TangentVec) -> TangentVec {
        TangentVec { base: self.base, v: sub(&self.v, &other.v) }
    }

    /// Rotation by +π/2 in the oriented tangent plane.
    pub fn rotate90(&self) -> TangentVec {
        TangentVec { base: self.base, v: mink_cross(&self.base.x, &self.v) }
    }
}

/// Orthonormal basis of the tangent plane at `p`, positively oriented.
pub fn tangent_frame(p: &HPoint) -> (TangentVec, TangentVec) {
    let x = p.x;
    // e1 = boost of (1,0,0) to p, e2 = e1 rotated
    let w = if x[0].abs() <= x[1].abs() { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let e = TangentVec::project(*p, w);
    let e1 = e.scaled(1.0 / e.norm());
    let e2 = e1.rotate90();
    (e1, e2)
}

pub fn dist(a: &HPoint, b: &HPoint) -> f64 {
    let d = sub(&a.x, &b.x);
    let chord = mink(&d, &d).max(0.0).sqrt();
    2.0 * (chord / 2.0).asinh()
}

/// `cosh(dist(a, b))`.
pub fn cosh_dist(a: &HPoint, b: &HPoint) -> f64 {
    (-mink(&a.x, &b.x)).max(1.0)
}

pub fn exp_map(v: &TangentVec) -> HPoint {
    let n = v.norm();
    if n == 0.0 {
        return v.base;
    }
    let x = add(&scale(n.cosh(), &v.base.x), &scale(sinhc(n), &v.v));
    HPoint::normalized(x)
}

pub fn log_map(x: &HPoint, y: &HPoint) -> TangentVec {
    let diff = sub(&y.x, &x.x);
    let half = mink(&diff, &diff).max(0.0) / 2.0;
    if half == 0.0 {
        return TangentVec::zero(*x);
    }
    let d = 2.0 * (half / 2.0).sqrt().asinh();
    // y − cosh(d)·x with cosh(d) − 1 = half
    let u = sub(&diff, &scale(half, &x.x));
    TangentVec::project(*x, scale(1.0 / sinhc(d), &u))
}

pub fn midpoint(a: &HPoint, b: &HPoint) -> HPoint {
    HPoint::normalized(add(&a.x, &b.x))
}

/// Point at parameter `s ∈ [0, 1]` along the geodesic from `a` to `b`.
pub fn geodesic_point(a: &HPoint, b: &HPoint, s: f64) -> HPoint {
    exp_map(&log_map(a, b).scaled(s))
}

pub fn parallel_transport(v: &TangentVec, b: &HPoint) -> TangentVec {
    let a = v.base;
    let denom = 1.0 - mink(&a.x, &b.x);
    let k = mink(&b.x, &v.v) / denom;
    TangentVec::project(*b, add(&v.v, &scale(k, &add(&a.x, &b.x))))
}

/// Unsigned angle at `p` between the geodesics toward `q` and `r`.
pub fn angle_at(p: &HPoint, q: &HPoint, r: &HPoint) -> f64 {
    oriented_angle(&log_map(p, q), &log_map(p, r)).abs()
}

/// Signed angle from `u` to `w` (same base), in `(−π, π]`.
pub fn oriented_angle(u: &TangentVec, w: &TangentVec) -> f64 {
    let c = u.dot(w);
    let s = mink(&u.rotate90().v, &w.v);
    s.atan2(c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleMeasure {
    pub angles: [f64; 3],
    pub area: f64,
}

pub fn triangle_angles_area(a: &HPoint, b: &HPoint, c: &HPoint) -> Result<TriangleMeasure> {
    let pts = [a, b, c];
    let mut angles = [0.0; 3];
    for i in 0..3 {
        let p = pts[i];
        let u = log_map(p, pts[(i + 1) % 3]);
        let w = log_map(p, pts[(i + 2) % 3]);
        if u.norm() < 1e-14 || w.norm() < 1e-14 {
            return Err(Error::DegenerateTriangle);
        }
        angles[i] = oriented_angle(&u, &w).abs();
    }
    let area = PI - angles.iter().sum::<f64>();
    if area <= 1e-12 || angles.iter().any(|&t| t <= 1e-12) {
        return Err(Error::DegenerateTriangle);
    }
    Ok(TriangleMeasure { angles, area })
}

/// Orientation-preserving isometry as a unit-determinant 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Isometry {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Isometry {
    pub const IDENTITY: Isometry = Isometry { a: 1.0, b: 0.0, c: 0.0, d: 1.0 };

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Isometry {
        Isometry { a, b, c, d }
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    /// Rescales to determinant 1 (the determinant must be positive).
    pub fn normalize_det(&self) -> Isometry {
        let s = 1.0 / self.det().sqrt();
        Isometry::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }

    pub fn compose(&self, o: &Isometry) -> Isometry {
        Isometry {
            a: self.a * o.a + self.b * o.c,
            b: self.a * o.b + self.b * o.d,
            c: self.c * o.a + self.d * o.c,
            d: self.c * o.b + self.d * o.d,
        }
    }

    pub fn inverse(&self) -> Isometry {
        Isometry { a: self.d, b: -self.b, c: -self.c, d: self.a }
    }

    pub fn neg(&self) -> Isometry {
        Isometry { a: -self.a, b: -self.b, c: -self.c, d: -self.d }
    }

    /// `self · m · self⁻¹`.
    pub fn conjugate(&self, m: &Isometry) -> Isometry {
        self.compose(m).compose(&self.inverse())
    }

    /// Hyperbolic translation of length `t` along the imaginary axis of the
    /// upper half-plane (through the origin of the hyperboloid, along `x1`).
    pub fn translation(t: f64) -> Isometry {
        let e = (t / 2.0).exp();
        Isometry::new(e, 0.0, 0.0, 1.0 / e)
    }

    /// Rotation by `theta` about the origin.
    pub fn rotation(theta: f64) -> Isometry {
        let (s, c) = (theta / 2.0).sin_cos();
        Isometry::new(c, s, -s, c)
    }

    /// An isometry sending the origin to `p`.
    pub fn moving_origin_to(p: &HPoint) -> Isometry {
        let (x, y) = p.to_uhp();
        let r = y.sqrt();
        Isometry::new(r, x / r, 0.0, 1.0 / r)
    }

    /// Coefficients `(Re α, Im α, Re β, Im β)` of the same isometry acting
    /// on the Poincaré disk as `z ↦ (αz + β)/(β̄z + ᾱ)`.
    pub fn disk_mobius(&self) -> [f64; 4] {
        let (ar, ai) = self.inverse().apply(&HPoint::ORIGIN).to_disk();
        let (gr, gi) = self.apply(&HPoint::ORIGIN).to_disk();
        // g(z) = e^{iθ}(z − a)/(1 − āz) with a = g⁻¹(0), so g(0) = −e^{iθ}a
        let (cr, ci) = if ar * ar + ai * ai > 1e-28 {
            let den = ar * ar + ai * ai;
            (-(gr * ar + gi * ai) / den, -(gi * ar - gr * ai) / den)
        } else {
            let (zr, zi) = self.apply(&HPoint::from_disk(0.5, 0.0)).to_disk();
            let n = (zr * zr + zi * zi).sqrt();
            (zr / n, zi / n)
        };
        let th = ci.atan2(cr) / 2.0;
        let k = 1.0 / (1.0 - ar * ar - ai * ai).sqrt();
        let (er, ei) = (th.cos() * k, th.sin() * k);
        [er, ei, -(er * ar - ei * ai), -(er * ai + ei * ar)]
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.a.abs().max(self.b.abs()).max(self.c.abs()).max(self.d.abs())
    }

    pub fn apply(&self, p: &HPoint) -> HPoint {
        HPoint::normalized(self.apply_vec(&p.x))
    }

    /// The induced linear action on Minkowski space.
    pub fn apply_vec(&self, x: &Vec3) -> Vec3 {
        let (a, b, c, d) = (self.a, self.b, self.c, self.d);
        let p = x[2] + x[0];
        let q = x[1];
        let r = x[2] - x[0];
        let y00 = a * a * p + 2.0 * a * b * q + b * b * r;
        let y01 = a * c * p + (a * d + b * c) * q + b * d * r;
        let y11 = c * c * p + 2.0 * c * d * q + d * d * r;
        [(y00 - y11) / 2.0, y01, (y00 + y11) / 2.0]
    }

    pub fn apply_tangent(&self, v: &TangentVec) -> TangentVec {
        TangentVec { base: self.apply(&v.base), v: self.apply_vec(&v.v) }
    }

    /// The induced 3×3 matrix on Minkowski space (columns are images of the
    /// standard basis).
    pub fn minkowski_matrix(&self) -> [[f64; 3]; 3] {
        let cols = [
            self.apply_vec(&[1.0, 0.0, 0.0]),
            self.apply_vec(&[0.0, 1.0, 0.0]),
            self.apply_vec(&[0.0, 0.0, 1.0]),
        ];
        let mut m = [[0.0; 3]; 3];
        for (j, col) in cols.iter().enumerate() {
            for i in 0..3 {
                m[i][j] = col[i];
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPointSet {
    points: Vec<HPoint>,
    weights: Vec<f64>,
}

impl WeightedPointSet {
    /// Weights must be positive; they are normalized to sum to one.
    pub fn new(points: Vec<HPoint>, weights: Vec<f64>) -> Result<WeightedPointSet> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::InvalidConfig("point and weight counts differ".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidConfig("weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(WeightedPointSet { points, weights })
    }

    pub fn uniform(points: Vec<HPoint>) -> Result<WeightedPointSet> {
        let n = points.len();
        WeightedPointSet::new(points, vec![1.0; n])
    }

    pub fn points(&self) -> &[HPoint] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn map(&self, g: &Isometry) -> WeightedPointSet {
        WeightedPointSet {
            points: self.points.iter().map(|p| g.apply(p)).collect(),
            weights: self.weights.clone(),
        }
    }

    /// `Σ wᵢ log_x(pᵢ)`: vanishes exactly at the Karcher barycenter.
    pub fn karcher_residual(&self, x: &HPoint) -> TangentVec {
        let mut acc = TangentVec::zero(*x);
        for (p, w) in self.points.iter().zip(&self.weights) {
            acc = acc.plus(&log_map(x, p).scaled(*w));
        }
        acc
    }

    /// Newton step `H⁻¹g` for `½Σ wᵢ d²(x, pᵢ)` at `x`, where `g` is the
    /// Karcher residual. Each term's Hessian is 1 along `log_x pᵢ` and
    /// `d coth d` across it.
    pub fn karcher_newton_step(&self, x: &HPoint, g: &TangentVec) -> TangentVec {
        let (e1, e2) = tangent_frame(x);
        let mut h = [[0.0; 2]; 2];
        for (p, w) in self.points.iter().zip(&self.weights) {
            let l = log_map(x, p);
            let d = l.norm();
            let k = if d < 1e-4 { 1.0 + d * d / 3.0 } else { d / d.tanh() };
            let (u1, u2) = if d > 0.0 { (l.dot(&e1) / d, l.dot(&e2) / d) } else { (1.0, 0.0) };
            h[0][0] += w * (k + (1.0 - k) * u1 * u1);
            h[0][1] += w * (1.0 - k) * u1 * u2;
            h[1][1] += w * (k + (1.0 - k) * u2 * u2);
        }
        let (g1, g2) = (g.dot(&e1), g.dot(&e2));
        let det = h[0][0] * h[1][1] - h[0][1] * h[0][1];
        let s1 = (h[1][1] * g1 - h[0][1] * g2) / det;
        let s2 = (h[0][0] * g2 - h[0][1] * g1) / det;
        e1.scaled(s1).plus(&e2.scaled(s2))
    }

    /// `Σ wᵢ sinhc(dᵢ) log_x(pᵢ)`: vanishes exactly at the cosh barycenter.
    pub fn cosh_residual(&self, x: &HPoint) -> TangentVec {
        let mut acc = TangentVec::zero(*x);
        for (p, w) in self.points.iter().zip(&self.weights) {
            let l = log_map(x, p);
            acc = acc.plus(&l.scaled(*w * sinhc(l.norm())));
        }
        acc
    }
}

pub const KARCHER_MAX_ITER: usize = 200;
pub const KARCHER_DEFAULT_TOL: f64 = 1e-10;

/// Minimizer of `Σ wᵢ d(x, pᵢ)²/2`, by Newton iteration with step halving
/// started from the cosh barycenter.
pub fn karcher_barycenter(s: &WeightedPointSet, tol: f64) -> Result<HPoint> {
    karcher_barycenter_from(s, cosh_barycenter(s), tol)
}

pub fn karcher_barycenter_from(s: &WeightedPointSet, start: HPoint, tol: f64) -> Result<HPoint> {
    let mut x = start;
    let mut g = s.karcher_residual(&x);
    for _ in 0..KARCHER_MAX_ITER {
        if g.norm() <= tol {
            return Ok(x);
        }
        // Newton step; halve it while the residual does not drop
        let mut step = s.karcher_newton_step(&x, &g);
        let mut next = exp_map(&step);
        let mut gn = s.karcher_residual(&next);
        for _ in 0..30 {
            if gn.norm() < g.norm() {
                break;
            }
            step = step.scaled(0.5);
            next = exp_map(&step);
            gn = s.karcher_residual(&next);
        }
        if gn.norm() >= g.norm() {
            // no further progress is representable
            break;
        }
        x = next;
        g = gn;
    }
    if g.norm() <= tol {
        return Ok(x);
    }
    Err(Error::BarycenterDiverged { residual: g.norm(), iterations: KARCHER_MAX_ITER })
}

/// Minimizer of `Σ wᵢ (cosh d(x, pᵢ) − 1)`: the Minkowski average pushed
/// back onto the sheet.
pub fn cosh_barycenter(s: &WeightedPointSet) -> HPoint {
    let mut acc = [0.0; 3];
    for (p, w) in s.points.iter().zip(&s.weights) {
        acc = add(&acc, &scale(*w, &p.x));
    }
    HPoint::normalized(acc)
}
