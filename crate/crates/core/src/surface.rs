//! Surface groups, pants decompositions, and Fenchel-Nielsen coordinates.
//!
//! Generators are indexed `0..2g` with `a_k = 2k` and `b_k = 2k + 1`; the
//! relator is `[a_1,b_1]···[a_g,b_g]`. Pants curves are numbered with the
//! `a_k` curves first (`0..g`), followed by the edges of a balanced binary
//! tree over the handles. The two top-level subtrees are glued along a
//! single curve.
//!
//! Twist convention: a twist `t` on the curve shared by a child and its
//! parent conjugates the child by a translation of length `t` along the
//! shared axis, oriented as the parent's boundary element. Only
//! conjugation-invariant quantities (traces, relator defect) are stable
//! across conventions.

use crate::error::{Error, Result};
use crate::geometry::Isometry;
use crate::polygon;
use serde::{Deserialize, Serialize};

/// Tolerance on the relator defect and on pants-curve traces.
pub const REPRESENTATION_TOL: f64 = 1e-8;

/// A word in the generators: letter `k + 1` is generator `k`, `−(k + 1)` its
/// inverse. Kept freely reduced.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub struct Word(pub Vec<i16>);

impl Word {
    pub fn identity() -> Word {
        Word(Vec::new())
    }

    pub fn generator(k: usize) -> Word {
        Word(vec![k as i16 + 1])
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn inverse(&self) -> Word {
        Word(self.0.iter().rev().map(|l| -l).collect())
    }

    pub fn mul(&self, other: &Word) -> Word {
        let mut out = self.0.clone();
        for &l in &other.0 {
            if out.last() == Some(&-l) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        Word(out)
    }

    pub fn commutator(a: usize, b: usize) -> Word {
        let (a, b) = (a as i16 + 1, b as i16 + 1);
        Word(vec![a, b, -a, -b])
    }

    /// Prefix of length `n`.
    pub fn prefix(&self, n: usize) -> Word {
        Word(self.0[..n].to_vec())
    }

    /// Human-readable form, e.g. `a1 b1 A1 B1` (capitals are inverses).
    pub fn label(&self, _genus: usize) -> String {
        self.0
            .iter()
            .map(|&l| {
                let k = (l.unsigned_abs() - 1) as usize;
                let (lo, hi) = if k % 2 == 0 { ('a', 'A') } else { ('b', 'B') };
                format!("{}{}", if l > 0 { lo } else { hi }, k / 2 + 1)
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PantsKind {
    /// Pants `(a_k, a_k, c)`: handle `k` closed up along its `a` curve.
    Handle { handle: usize },
    /// Pants joining two subtrees.
    Junction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pants {
    pub kind: PantsKind,
    /// Boundary curve indices.
    pub boundary: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tree {
    Leaf(usize),
    Node(Box<Tree>, Box<Tree>),
}

impl Tree {
    fn balanced(lo: usize, hi: usize) -> Tree {
        if hi - lo == 1 {
            Tree::Leaf(lo)
        } else {
            let mid = (lo + hi) / 2;
            Tree::Node(Box::new(Tree::balanced(lo, mid)), Box::new(Tree::balanced(mid, hi)))
        }
    }

    fn range(&self) -> (usize, usize) {
        match self {
            Tree::Leaf(k) => (*k, k + 1),
            Tree::Node(l, r) => (l.range().0, r.range().1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PantsCurve {
    /// Handles `lo..hi` on one side of the curve; for an `a` curve this is
    /// the single handle it belongs to.
    pub handles: (usize, usize),
    pub is_a_curve: bool,
    /// A word whose image is a hyperbolic element with this curve as axis.
    pub word: Word,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGroup {
    genus: usize,
    tree: Tree,
    curves: Vec<PantsCurve>,
    pants: Vec<Pants>,
}

impl SurfaceGroup {
    pub fn new(genus: usize) -> Result<SurfaceGroup> {
        if genus < 2 {
            return Err(Error::UnsupportedGenus(genus));
        }
        let tree = Tree::balanced(0, genus);
        let mut curves: Vec<PantsCurve> = (0..genus)
            .map(|k| PantsCurve { handles: (k, k + 1), is_a_curve: true, word: Word::generator(2 * k) })
            .collect();
        let mut pants = Vec::new();
        let subtree_curve = |curves: &mut Vec<PantsCurve>, t: &Tree| {
            let (lo, hi) = t.range();
            let word = (lo..hi).fold(Word::identity(), |w, k| w.mul(&Word::commutator(2 * k, 2 * k + 1)));
            curves.push(PantsCurve { handles: (lo, hi), is_a_curve: false, word });
            curves.len() - 1
        };
        fn walk(
            t: &Tree,
            curve: usize,
            curves: &mut Vec<PantsCurve>,
            pants: &mut Vec<Pants>,
            new_curve: &dyn Fn(&mut Vec<PantsCurve>, &Tree) -> usize,
        ) {
            match t {
                Tree::Leaf(k) => pants.push(Pants { kind: PantsKind::Handle { handle: *k }, boundary: [*k, *k, curve] }),
                Tree::Node(l, r) => {
                    let cl = new_curve(curves, l);
                    let cr = new_curve(curves, r);
                    pants.push(Pants { kind: PantsKind::Junction, boundary: [cl, cr, curve] });
                    walk(l, cl, curves, pants, new_curve);
                    walk(r, cr, curves, pants, new_curve);
                }
            }
        }
        let (left, right) = match &tree {
            Tree::Node(l, r) => (l.as_ref().clone(), r.as_ref().clone()),
            Tree::Leaf(_) => unreachable!("genus >= 2"),
        };
        let root = subtree_curve(&mut curves, &left);
        walk(&left, root, &mut curves, &mut pants, &subtree_curve);
        walk(&right, root, &mut curves, &mut pants, &subtree_curve);
        Ok(SurfaceGroup { genus, tree, curves, pants })
    }

    pub fn genus(&self) -> usize {
        self.genus
    }

    pub fn generator_count(&self) -> usize {
        2 * self.genus
    }

    pub fn relator(&self) -> Word {
        (0..self.genus).fold(Word::identity(), |w, k| w.mul(&Word::commutator(2 * k, 2 * k + 1)))
    }

    pub fn curves(&self) -> &[PantsCurve] {
        &self.curves
    }

    pub fn pants(&self) -> &[Pants] {
        &self.pants
    }

    pub fn curve_count(&self) -> usize {
        3 * self.genus - 3
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FnCoordinates {
    pub lengths: Vec<f64>,
    pub twists: Vec<f64>,
}

impl FnCoordinates {
    pub fn new(lengths: Vec<f64>, twists: Vec<f64>) -> FnCoordinates {
        FnCoordinates { lengths, twists }
    }

    pub fn validate(&self, genus: usize) -> Result<()> {
        let n = 3 * genus - 3;
        for got in [self.lengths.len(), self.twists.len()] {
            if got != n {
                return Err(Error::DimensionMismatch { expected: n, got });
            }
        }
        if let Some(l) = self.lengths.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidCoordinates(format!("length {l} is not positive")));
        }
        if let Some(t) = self.twists.iter().find(|t| !t.is_finite()) {
            return Err(Error::InvalidCoordinates(format!("twist {t} is not finite")));
        }
        Ok(())
    }
}

/// Images of the generators `a_1, b_1, …, a_g, b_g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Representation {
    pub generators: Vec<Isometry>,
}

impl Representation {
    pub fn eval(&self, w: &Word) -> Isometry {
        w.0.iter().fold(Isometry::IDENTITY, |m, &l| m.compose(&self.letter(l)))
    }

    pub fn letter(&self, l: i16) -> Isometry {
        let g = self.generators[(l.unsigned_abs() - 1) as usize];
        if l > 0 {
            g
        } else {
            g.inverse()
        }
    }

    pub fn conjugated(&self, g: &Isometry) -> Representation {
        Representation { generators: self.generators.iter().map(|m| g.conjugate(m)).collect() }
    }

    pub fn genus(&self) -> usize {
        self.generators.len() / 2
    }
}

/// Min over signs of the entrywise max `|ρ(relator) ∓ I|`.
pub fn relator_defect(rep: &Representation, relator: &Word) -> f64 {
    let m = rep.eval(relator);
    let plus = (m.a - 1.0).abs().max(m.b.abs()).max(m.c.abs()).max((m.d - 1.0).abs());
    let minus = (m.a + 1.0).abs().max(m.b.abs()).max(m.c.abs()).max((m.d + 1.0).abs());
    plus.min(minus)
}

pub fn translation_length(g: &Isometry) -> Result<f64> {
    let t = g.trace().abs();
    if t < 2.0 {
        return Err(Error::NotHyperbolic(t));
    }
    Ok(2.0 * (t / 2.0).acosh())
}

/// Fuchsian representations of domain and target on the same group.
#[derive(Debug, Clone, PartialEq)]
pub struct FuchsianPair {
    pub group: SurfaceGroup,
    pub rho_l: Representation,
    pub rho_r: Representation,
}

/// Result of the gluing before consistency checks.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationReport {
    pub rep: Representation,
    pub relator_defect: f64,
    /// `| |tr ρ(c)| − 2 cosh(ℓ/2) |` per pants curve.
    pub trace_errors: Vec<f64>,
}

/// Builds the representation and checks relator and pants-curve traces.
pub fn fn_to_representation(group: &SurfaceGroup, fnc: &FnCoordinates) -> Result<Representation> {
    let report = fn_to_representation_report(group, fnc)?;
    if report.relator_defect > REPRESENTATION_TOL {
        return Err(Error::RepresentationInconsistent(format!(
            "relator defect {:.3e} exceeds {:.0e}",
            report.relator_defect, REPRESENTATION_TOL
        )));
    }
    if let Some((i, e)) = report.trace_errors.iter().enumerate().find(|(_, e)| **e > REPRESENTATION_TOL) {
        return Err(Error::RepresentationInconsistent(format!("trace of pants curve {i} off by {e:.3e}")));
    }
    if let Some(k) = report.rep.generators.iter().position(|g| g.trace().abs() <= 2.0) {
        return Err(Error::RepresentationInconsistent(format!("generator {k} is not hyperbolic")));
    }
    Ok(report.rep)
}

/// Builds the representation and reports its numerical consistency without
/// rejecting it.
///
/// The result is conjugated so that the origin approximately minimizes the
/// total displacement `Σ cosh d(x, gₖ x)` of the generators; entries are then
/// as small as the geometry allows, which keeps the relator product accurate.
pub fn fn_to_representation_report(group: &SurfaceGroup, fnc: &FnCoordinates) -> Result<RepresentationReport> {
    fnc.validate(group.genus)?;
    let mut outer = Isometry::IDENTITY;
    let mut rep = glue(group, fnc, &outer);
    for _ in 0..2 {
        let center = polygon::displacement_minimizer(&rep);
        outer = Isometry::moving_origin_to(&center).inverse().compose(&outer);
        rep = glue(group, fnc, &outer);
    }
    let relator_defect = relator_defect(&rep, &group.relator());
    let trace_errors = group
        .curves
        .iter()
        .zip(&fnc.lengths)
        .map(|(c, l)| (rep.eval(&c.word).trace().abs() - 2.0 * (l / 2.0).cosh()).abs())
        .collect();
    Ok(RepresentationReport { rep, relator_defect, trace_errors })
}

fn diag(x: f64) -> Isometry {
    Isometry::translation(2.0 * x)
}

/// Half-translation `[[cosh(d/2), sinh(d/2)], [sinh(d/2), cosh(d/2)]]`.
fn cross_translation(d: f64) -> Isometry {
    let (s, c) = ((d / 2.0).sinh(), (d / 2.0).cosh());
    Isometry::new(c, s, s, c)
}

/// Generators `(X, Y, Z)` of a pair of pants with `XYZ = 1` and traces
/// `−2cosh(lᵢ/2)`. `X` is diagonal.
fn pants(l1: f64, l2: f64, l3: f64) -> (Isometry, Isometry, Isometry) {
    let (u, v, w) = (l1 / 2.0, l2 / 2.0, l3 / 2.0);
    let d = ((w.cosh() + u.cosh() * v.cosh()) / (u.sinh() * v.sinh())).acosh();
    let t = cross_translation(d);
    let x = diag(u).neg();
    let y = t.compose(&diag(-v)).compose(&t.inverse()).neg();
    let z = x.compose(&y).inverse();
    (x, y, z)
}

/// Unit eigenvector of `m` for eigenvalue `mu`.
fn eigvec(m: &Isometry, mu: f64) -> (f64, f64) {
    let v1 = (m.b, mu - m.a);
    let v2 = (mu - m.d, m.c);
    let n1 = v1.0.hypot(v1.1);
    let n2 = v2.0.hypot(v2.1);
    if n1 >= n2 {
        (v1.0 / n1, v1.1 / n1)
    } else {
        (v2.0 / n2, v2.1 / n2)
    }
}

/// `V ∈ SL(2,R)` with `V⁻¹ m V = diag(σλ, σ/λ)`, `λ > 1`, `σ = sign tr m`.
fn eigen_frame(m: &Isometry) -> Isometry {
    let tr = m.trace();
    let s = tr.signum();
    let h = tr.abs() / 2.0;
    let lam = h + (h * h - 1.0).sqrt();
    let (p0, p1) = eigvec(m, s * lam);
    let (mut q0, mut q1) = eigvec(m, s / lam);
    let mut det = p0 * q1 - q0 * p1;
    if det < 0.0 {
        q0 = -q0;
        q1 = -q1;
        det = -det;
    }
    let r = 1.0 / det.sqrt();
    Isometry::new(p0 * r, q0 * r, p1 * r, q1 * r)
}

/// `S` with `S⁻¹ m S` diagonal (attracting fixed point at ∞) and `S(i)` the
/// foot on the axis of `m` of the common perpendicular to the axis of `n`.
fn standardizer(m: &Isometry, n: &Isometry) -> Isometry {
    let v = eigen_frame(m);
    let w = v.inverse().compose(&eigen_frame(n));
    let prod = (w.a * w.b) / (w.c * w.d);
    let s = prod.abs().powf(0.25);
    v.compose(&Isometry::new(s, 0.0, 0.0, 1.0 / s))
}

/// Local generators of handle `k` and the conjugator putting its boundary
/// commutator into standard position.
fn handle(l: f64, boundary: f64, twist: f64) -> (Isometry, Isometry, Isometry) {
    let a = diag(l / 2.0);
    let u = l / 2.0;
    let d = (((boundary / 2.0).cosh() + u.cosh().powi(2)) / u.sinh().powi(2)).acosh();
    let b = cross_translation(d).compose(&diag(twist / 2.0));
    let delta = a.compose(&b).compose(&a.inverse()).compose(&b.inverse());
    (a, b, standardizer(&delta, &a).inverse())
}

/// Glues handles along the pants tree. Every child subtree is first put in
/// standard position (boundary element diagonal, seam foot at `i`), then
/// carried to its slot in the parent pants. Conjugators are composed before
/// being applied so each generator is conjugated exactly once.
fn glue(group: &SurfaceGroup, fnc: &FnCoordinates, outer: &Isometry) -> Representation {
    let g = group.genus;
    let lengths = &fnc.lengths;
    let twists = &fnc.twists;
    let mut gens = vec![Isometry::IDENTITY; 2 * g];
    let mut next_curve = g;

    fn sub(
        t: &Tree,
        curve: usize,
        conj: Isometry,
        lengths: &[f64],
        twists: &[f64],
        next_curve: &mut usize,
        gens: &mut [Isometry],
    ) {
        match t {
            Tree::Leaf(k) => {
                let (a, b, s) = handle(lengths[*k], lengths[curve], twists[*k]);
                let h = conj.compose(&s);
                gens[2 * k] = h.conjugate(&a);
                gens[2 * k + 1] = h.conjugate(&b);
            }
            Tree::Node(l, r) => {
                let cl = *next_curve;
                let cr = cl + 1;
                *next_curve += 2;
                let (x, y, z) = pants(lengths[cl], lengths[cr], lengths[curve]);
                let s = standardizer(&x.compose(&y), &x).inverse();
                let base = conj.compose(&s);
                let left = base.compose(&standardizer(&x, &z)).compose(&diag(twists[cl] / 2.0));
                let right = base.compose(&standardizer(&y, &z)).compose(&diag(twists[cr] / 2.0));
                sub(l, cl, left, lengths, twists, next_curve, gens);
                sub(r, cr, right, lengths, twists, next_curve, gens);
            }
        }
    }

    let (left, right) = match &group.tree {
        Tree::Node(l, r) => (l, r),
        Tree::Leaf(_) => unreachable!("genus >= 2"),
    };
    let root = next_curve;
    next_curve += 1;
    // The left boundary becomes −diag(e^{L/2}, e^{−L/2}); the right one its
    // inverse, by the half-turn about i followed by the root twist.
    let half_turn = Isometry::new(0.0, -1.0, 1.0, 0.0);
    let right_conj = outer.compose(&half_turn).compose(&diag(twists[root] / 2.0));
    sub(left, root, *outer, lengths, twists, &mut next_curve, &mut gens);
    sub(right, root, right_conj, lengths, twists, &mut next_curve, &mut gens);
    debug_assert_eq!(next_curve, 3 * g - 3);
    Representation { generators: gens }
}

/// Applies a full Dehn twist about curve `c` to the coordinates.
pub fn dehn_twist(fnc: &FnCoordinates, c: usize) -> FnCoordinates {
    let mut out = fnc.clone();
    out.twists[c] += out.lengths[c];
    out
}
