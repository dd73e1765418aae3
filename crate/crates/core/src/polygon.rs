//! Fundamental polygons for the standard generators.
//!
//! For a base point `z₀` the polygon has vertices `pⱼ·z₀`, where `pⱼ` runs
//! over the prefixes of the relator. Side `j` joins `pⱼ z₀` to `pⱼ₊₁ z₀ =
//! pⱼ lⱼ z₀`, so its length is the displacement of `z₀` under the letter
//! `lⱼ`. The base point minimizes the perimeter energy
//! `F(z) = Σⱼ (cosh |side j| − 1) = 2 Σₖ (cosh d(z, gₖ z) − 1)`.

use crate::error::{Error, Result};
use crate::geometry::{
    cosh_barycenter, exp_map, mink, parallel_transport, tangent_frame, HPoint, Isometry, TangentVec, Vec3,
    WeightedPointSet,
};
use crate::surface::{Representation, Word};
use std::f64::consts::PI;

pub const NEWTON_MAX_ITER: usize = 100;
pub const GRADIENT_TOL: f64 = 1e-8;
const HESSIAN_STEP: f64 = 1e-5;

/// `⟨x, R x⟩`-type quadratic forms `cosh d(x, g x) = −⟨x, g·x⟩` for every
/// generator, kept as 3×3 matrices.
struct DisplacementCost {
    mats: Vec<[[f64; 3]; 3]>,
}

impl DisplacementCost {
    fn new(rep: &Representation) -> DisplacementCost {
        DisplacementCost { mats: rep.generators.iter().map(|g| g.minkowski_matrix()).collect() }
    }

    fn value(&self, z: &HPoint) -> f64 {
        let x = z.coords();
        2.0 * self.mats.iter().map(|m| -mink(&x, &mat_vec(m, &x)) - 1.0).sum::<f64>()
    }

    fn gradient(&self, z: &HPoint) -> TangentVec {
        let x = z.coords();
        let mut g = [0.0; 3];
        for m in &self.mats {
            // d/dx of −⟨x, Mx⟩ is −(J M + Mᵀ J) x; raise the index with J.
            let mx = mat_vec(m, &x);
            let mtjx = mat_t_vec(m, &[x[0], x[1], -x[2]]);
            let e = [-mx[0] - mtjx[0], -mx[1] - mtjx[1], mx[2] - mtjx[2]];
            // Euclidean gradient e = −(JMx + MᵀJx); Minkowski gradient Je.
            g[0] += 2.0 * e[0];
            g[1] += 2.0 * e[1];
            g[2] -= 2.0 * e[2];
        }
        TangentVec::project(*z, g)
    }
}

fn mat_vec(m: &[[f64; 3]; 3], x: &Vec3) -> Vec3 {
    [
        m[0][0] * x[0] + m[0][1] * x[1] + m[0][2] * x[2],
        m[1][0] * x[0] + m[1][1] * x[1] + m[1][2] * x[2],
        m[2][0] * x[0] + m[2][1] * x[1] + m[2][2] * x[2],
    ]
}

fn mat_t_vec(m: &[[f64; 3]; 3], x: &Vec3) -> Vec3 {
    [
        m[0][0] * x[0] + m[1][0] * x[1] + m[2][0] * x[2],
        m[0][1] * x[0] + m[1][1] * x[1] + m[2][1] * x[2],
        m[0][2] * x[0] + m[1][2] * x[1] + m[2][2] * x[2],
    ]
}

/// Unit spacelike normal of the plane cutting out the axis of a hyperbolic
/// isometry.
pub fn axis_normal(g: &Isometry) -> Vec3 {
    let n = [(-g.b - g.c) / 2.0, (g.a - g.d) / 2.0, (g.c - g.b) / 2.0];
    let s = mink(&n, &n).sqrt();
    [n[0] / s, n[1] / s, n[2] / s]
}

/// Point of the axis of `g` closest to `p`.
pub fn axis_foot(g: &Isometry, p: &HPoint) -> HPoint {
    let n = axis_normal(g);
    let x = p.coords();
    let k = mink(&x, &n);
    HPoint::normalized([x[0] - k * n[0], x[1] - k * n[1], x[2] - k * n[2]])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimizer {
    pub point: HPoint,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub cost: f64,
}

/// Newton's method for the perimeter energy, with analytic gradient and a
/// finite-difference Hessian in a tangent frame.
pub fn minimize_cost(rep: &Representation, start: HPoint) -> Result<Minimizer> {
    let (m, converged) = newton(&DisplacementCost::new(rep), start, GRADIENT_TOL, NEWTON_MAX_ITER);
    if converged {
        Ok(m)
    } else {
        Err(Error::PolygonOptimizationFailed(format!(
            "gradient norm {:.3e} after {NEWTON_MAX_ITER} Newton iterations",
            m.gradient_norm
        )))
    }
}

fn newton(cost: &DisplacementCost, start: HPoint, tol: f64, max_iter: usize) -> (Minimizer, bool) {
    let mut z = start;
    let mut f = cost.value(&z);
    let mut it = 0;
    loop {
        let g = cost.gradient(&z);
        let gn = g.norm();
        if gn <= tol || it == max_iter {
            return (Minimizer { point: z, iterations: it, gradient_norm: gn, cost: f }, gn <= tol);
        }
        it += 1;
        let (e1, e2) = tangent_frame(&z);
        let gvec = [g.dot(&e1), g.dot(&e2)];
        let mut h = [[0.0; 2]; 2];
        for (j, e) in [e1, e2].iter().enumerate() {
            let plus = exp_map(&e.scaled(HESSIAN_STEP));
            let minus = exp_map(&e.scaled(-HESSIAN_STEP));
            let gp = parallel_transport(&cost.gradient(&plus), &z);
            let gm = parallel_transport(&cost.gradient(&minus), &z);
            h[0][j] = (gp.dot(&e1) - gm.dot(&e1)) / (2.0 * HESSIAN_STEP);
            h[1][j] = (gp.dot(&e2) - gm.dot(&e2)) / (2.0 * HESSIAN_STEP);
        }
        let sym = (h[0][1] + h[1][0]) / 2.0;
        let det = h[0][0] * h[1][1] - sym * sym;
        let step = if det > 0.0 && h[0][0] > 0.0 {
            [-(h[1][1] * gvec[0] - sym * gvec[1]) / det, -(h[0][0] * gvec[1] - sym * gvec[0]) / det]
        } else {
            // not locally convex here: scaled gradient step instead
            let s = 1.0 / (h[0][0].abs() + h[1][1].abs()).max(1.0);
            [-s * gvec[0], -s * gvec[1]]
        };
        let dir = e1.scaled(step[0]).plus(&e2.scaled(step[1]));
        let mut lambda = 1.0;
        loop {
            let cand = exp_map(&dir.scaled(lambda));
            let fc = cost.value(&cand);
            if fc <= f || lambda < 1e-12 {
                z = cand;
                f = fc;
                break;
            }
            lambda /= 2.0;
        }
    }
}

/// Initial guess: cosh barycenter of the points of the generator axes
/// closest to the origin.
pub fn initial_guess(rep: &Representation) -> HPoint {
    let pts: Vec<HPoint> = rep
        .generators
        .iter()
        .filter(|g| g.trace().abs() > 2.0)
        .map(|g| axis_foot(g, &HPoint::ORIGIN))
        .collect();
    match WeightedPointSet::uniform(pts) {
        Ok(s) => cosh_barycenter(&s),
        Err(_) => HPoint::ORIGIN,
    }
}

/// Approximate minimizer of the perimeter energy, without a convergence
/// requirement; used to recenter representations.
pub(crate) fn displacement_minimizer(rep: &Representation) -> HPoint {
    let cost = DisplacementCost::new(rep);
    let (m, _) = newton(&cost, initial_guess(rep), GRADIENT_TOL, 30);
    m.point
}

#[derive(Debug, Clone, PartialEq)]
pub struct SidePairing {
    /// Side `j` (from vertex `j` to vertex `j+1`).
    pub side: usize,
    /// Partner side `j'`; `word` maps vertex `j` to `j'+1` and `j+1` to `j'`.
    pub partner: usize,
    pub word: Word,
    pub isometry: Isometry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalPolygon {
    pub base: HPoint,
    pub vertex_words: Vec<Word>,
    pub vertices: Vec<HPoint>,
    pub pairings: Vec<SidePairing>,
    /// `+1` if the vertices run counterclockwise, `−1` otherwise.
    pub orientation: f64,
    pub newton_iterations: usize,
    pub gradient_norm: f64,
}

impl FundamentalPolygon {
    /// Polygon with a prescribed base point for the given relator.
    pub fn with_base(rep: &Representation, relator: &Word, base: HPoint) -> Result<FundamentalPolygon> {
        let n = relator.len();
        let vertex_words: Vec<Word> = (0..n).map(|j| relator.prefix(j)).collect();
        let vertices: Vec<HPoint> = vertex_words.iter().map(|w| rep.eval(w).apply(&base)).collect();
        let mut pairings = Vec::new();
        for j in 0..n {
            let l = relator.0[j];
            let jp = relator.0.iter().position(|&m| m == -l).expect("each letter appears with its inverse");
            if jp < j {
                continue;
            }
            let word = relator.prefix(jp + 1).mul(&relator.prefix(j).inverse());
            let isometry = rep.eval(&word);
            pairings.push(SidePairing { side: j, partner: jp, word, isometry });
        }
        let klein: Vec<(f64, f64)> = vertices.iter().map(|v| v.to_klein()).collect();
        let mut area2 = 0.0;
        for i in 0..n {
            let (a, b) = (klein[i], klein[(i + 1) % n]);
            area2 += a.0 * b.1 - a.1 * b.0;
        }
        Ok(FundamentalPolygon {
            base,
            vertex_words,
            vertices,
            pairings,
            orientation: area2.signum(),
            newton_iterations: 0,
            gradient_norm: f64::NAN,
        })
    }

    pub fn side_count(&self) -> usize {
        self.vertices.len()
    }

    /// Pairing carrying side `j` onto its partner, with the isometry in the
    /// direction `j → partner`.
    pub fn pairing_of(&self, j: usize) -> (usize, Isometry, Word, bool) {
        for p in &self.pairings {
            if p.side == j {
                return (p.partner, p.isometry, p.word.clone(), true);
            }
            if p.partner == j {
                return (p.side, p.isometry.inverse(), p.word.inverse(), false);
            }
        }
        unreachable!("every side is paired")
    }

    /// First pair of non-adjacent sides that cross, if any (tested in the
    /// Klein model, where geodesics are straight).
    pub fn first_crossing(&self) -> Option<(usize, usize)> {
        let n = self.side_count();
        let k: Vec<(f64, f64)> = self.vertices.iter().map(|v| v.to_klein()).collect();
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                let (a, b) = (k[i], k[(i + 1) % n]);
                let (c, d) = (k[j], k[(j + 1) % n]);
                if adjacent {
                    // adjacent sides must not fold back onto each other
                    let shared = if j == i + 1 { b } else { a };
                    let (p, q) = if j == i + 1 { (a, d) } else { (b, c) };
                    if cross(shared, p, q).abs() < 1e-14 && dot(shared, p, q) > 0.0 {
                        return Some((i, j));
                    }
                } else if segments_intersect(a, b, c, d) {
                    return Some((i, j));
                }
            }
        }
        None
    }

    /// Interior angle at each corner.
    pub fn corner_angles(&self) -> Vec<f64> {
        let n = self.side_count();
        (0..n)
            .map(|i| {
                let p = &self.vertices[i];
                let next = crate::geometry::log_map(p, &self.vertices[(i + 1) % n]);
                let prev = crate::geometry::log_map(p, &self.vertices[(i + n - 1) % n]);
                let a = crate::geometry::oriented_angle(&next, &prev) * self.orientation;
                if a < 0.0 {
                    a + 2.0 * PI
                } else {
                    a
                }
            })
            .collect()
    }

    pub fn side_lengths(&self) -> Vec<f64> {
        let n = self.side_count();
        (0..n).map(|i| crate::geometry::dist(&self.vertices[i], &self.vertices[(i + 1) % n])).collect()
    }
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn dot(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.0 - o.0) + (a.1 - o.1) * (b.1 - o.1)
}

/// Closed-segment intersection test, touching included.
pub(crate) fn segments_intersect(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let eps = 1e-14;
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > eps && d2 < -eps) || (d1 < -eps && d2 > eps)) && ((d3 > eps && d4 < -eps) || (d3 < -eps && d4 > eps)) {
        return true;
    }
    let on = |p: (f64, f64), q: (f64, f64), r: (f64, f64), c: f64| {
        c.abs() <= eps && r.0 >= p.0.min(q.0) - eps && r.0 <= p.0.max(q.0) + eps && r.1 >= p.1.min(q.1) - eps && r.1 <= p.1.max(q.1) + eps
    };
    on(c, d, a, d1) || on(c, d, b, d2) || on(a, b, c, d3) || on(a, b, d, d4)
}

/// Optimizes the base point and builds the polygon; rejects non-simple
/// results.
pub fn optimize_fundamental_polygon(rep: &Representation, relator: &Word) -> Result<FundamentalPolygon> {
    let m = minimize_cost(rep, initial_guess(rep))?;
    let mut poly = FundamentalPolygon::with_base(rep, relator, m.point)?;
    poly.newton_iterations = m.iterations;
    poly.gradient_norm = m.gradient_norm;
    if let Some((i, j)) = poly.first_crossing() {
        return Err(Error::PolygonSelfIntersecting(i, j));
    }
    Ok(poly)
}

/// Conjugates `rep` by the isometry taking the cosh-center of the polygon's
/// vertices to the origin and moves the polygon along, so that coordinates
/// stay small and distances between images keep full precision.
pub fn recenter(
    rep: &Representation,
    poly: &FundamentalPolygon,
    relator: &Word,
) -> Result<(Representation, FundamentalPolygon)> {
    let c = cosh_barycenter(&WeightedPointSet::uniform(poly.vertices.clone())?);
    let h = Isometry::moving_origin_to(&c).inverse();
    let moved = Representation { generators: rep.generators.iter().map(|g| h.conjugate(g)).collect() };
    let mut p = FundamentalPolygon::with_base(&moved, relator, h.apply(&poly.base))?;
    p.newton_iterations = poly.newton_iterations;
    p.gradient_norm = poly.gradient_norm;
    Ok((moved, p))
}

/// Gradient norm of the perimeter energy at `z`.
pub fn cost_gradient_norm(rep: &Representation, z: &HPoint) -> f64 {
    DisplacementCost::new(rep).gradient(z).norm()
}

pub fn cost_value(rep: &Representation, z: &HPoint) -> f64 {
    DisplacementCost::new(rep).value(z)
}
