//! Invariant triangulated meshes of the domain and their biweighted graphs.
//!
//! A mesh is stored on the quotient: one representative point per vertex
//! orbit, and faces given by three lifts `(vertex, word)`, each placed at
//! `ρ(word)·rep[vertex]`. Edge orbits are recovered from the faces by
//! comparing lifted positions, so equal group elements written as different
//! words are identified correctly.

use crate::error::{Error, Result};
use crate::geometry::{
    dist, geodesic_point, midpoint, triangle_angles_area, HPoint, Isometry,
};
use crate::polygon::{segments_intersect, FundamentalPolygon};
use crate::surface::{Representation, Word};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, VecDeque};
use std::f64::consts::PI;
use std::fmt::Write as _;

/// Two lifts closer than this are the same point.
const LIFT_TOL: f64 = 1e-7;

pub const DEFAULT_STEINER_PER_SIDE: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum VertexOrigin {
    /// The polygon corners, all one orbit.
    Corner,
    /// Point `index / (steiner + 1)` of the way along polygon side `side`.
    Steiner { side: usize, index: usize },
    /// Midpoint of `rep[a]` and `ρ(word)·rep[b]`.
    Midpoint { a: usize, b: usize, word: Word },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lift {
    pub vertex: usize,
    pub word: Word,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Face {
    pub corners: [Lift; 3],
    /// Index of the depth-0 triangle this face subdivides.
    pub root: usize,
}

/// Edge orbit: `rep[a]` joined to `ρ(word)·rep[b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub word: Word,
}

#[derive(Debug, Clone)]
pub struct TriangulatedMesh {
    pub genus: usize,
    pub steiner_per_side: usize,
    pub depth: usize,
    pub reps: Vec<HPoint>,
    pub origins: Vec<VertexOrigin>,
    pub faces: Vec<Face>,
    pub edges: Vec<Edge>,
    /// For each face and side `k` (from corner `k` to `k+1`): the edge and
    /// whether the side runs along it (`a → b`) or against it.
    pub face_edges: Vec<[(usize, bool); 3]>,
    /// The depth-0 polygon used to build the mesh.
    pub polygon: FundamentalPolygon,
    rho: Representation,
    words: HashMap<Word, Isometry>,
}

impl TriangulatedMesh {
    pub fn rho(&self) -> &Representation {
        &self.rho
    }

    pub fn isometry(&self, w: &Word) -> Isometry {
        match self.words.get(w) {
            Some(m) => *m,
            None => self.rho.eval(w),
        }
    }

    pub fn position(&self, l: &Lift) -> HPoint {
        self.isometry(&l.word).apply(&self.reps[l.vertex])
    }

    /// Mesh from explicit orbit representatives and lifted faces.
    pub fn from_faces(
        rho: &Representation,
        polygon: FundamentalPolygon,
        reps: Vec<HPoint>,
        origins: Vec<VertexOrigin>,
        faces: Vec<Face>,
    ) -> Result<TriangulatedMesh> {
        let mut mesh = TriangulatedMesh {
            genus: rho.genus(),
            steiner_per_side: 0,
            depth: 0,
            reps,
            origins,
            faces,
            edges: Vec::new(),
            face_edges: Vec::new(),
            polygon,
            rho: rho.clone(),
            words: HashMap::new(),
        };
        mesh.rebuild_edges()?;
        mesh.check_locally_cyclic()?;
        Ok(mesh)
    }

    /// Directed neighbor lists: for each orbit, `(orbit, word)` per incident
    /// edge end.
    pub fn neighbors(&self) -> Vec<Vec<(usize, Word)>> {
        let mut nbrs: Vec<Vec<(usize, Word)>> = vec![Vec::new(); self.reps.len()];
        for e in &self.edges {
            nbrs[e.a].push((e.b, e.word.clone()));
            nbrs[e.b].push((e.a, e.word.inverse()));
        }
        nbrs
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        (self.reps.len(), self.edges.len(), self.faces.len())
    }

    pub fn euler_characteristic(&self) -> i64 {
        let (v, e, f) = self.counts();
        v as i64 - e as i64 + f as i64
    }

    /// Builds the edge orbits and face-side incidences from the faces.
    fn rebuild_edges(&mut self) -> Result<()> {
        for f in &self.faces {
            for l in &f.corners {
                if !self.words.contains_key(&l.word) {
                    let m = self.rho.eval(&l.word);
                    self.words.insert(l.word.clone(), m);
                }
            }
        }
        // adjacency: vertex → (edge, forward, other vertex, relative position)
        let mut adj: Vec<Vec<(usize, bool, usize, HPoint)>> = vec![Vec::new(); self.reps.len()];
        let mut edges = Vec::new();
        let mut face_edges = Vec::with_capacity(self.faces.len());
        for f in &self.faces {
            let mut fe = [(0usize, true); 3];
            for k in 0..3 {
                let (p, q) = (&f.corners[k], &f.corners[(k + 1) % 3]);
                let rel = p.word.inverse().mul(&q.word);
                let target = self.rho.eval(&rel).apply(&self.reps[q.vertex]);
                let found = adj[p.vertex]
                    .iter()
                    .find(|(_, _, other, pos)| *other == q.vertex && dist(pos, &target) < LIFT_TOL)
                    .map(|(e, fwd, _, _)| (*e, *fwd));
                let entry = match found {
                    Some(x) => x,
                    None => {
                        let e = edges.len();
                        let back = self.rho.eval(&rel.inverse()).apply(&self.reps[p.vertex]);
                        edges.push(Edge { a: p.vertex, b: q.vertex, word: rel });
                        adj[p.vertex].push((e, true, q.vertex, target));
                        adj[q.vertex].push((e, false, p.vertex, back));
                        (e, true)
                    }
                };
                fe[k] = entry;
            }
            face_edges.push(fe);
        }
        for e in &edges {
            if !self.words.contains_key(&e.word) {
                let m = self.rho.eval(&e.word);
                self.words.insert(e.word.clone(), m);
            }
        }
        self.edges = edges;
        self.face_edges = face_edges;
        Ok(())
    }

    /// Checks that every edge orbit borders exactly two face sides and that
    /// the faces around every vertex orbit close up into a single cycle.
    pub fn check_locally_cyclic(&self) -> Result<()> {
        let mut uses = vec![0usize; self.edges.len()];
        for fe in &self.face_edges {
            for (e, _) in fe {
                uses[*e] += 1;
            }
        }
        if let Some(e) = uses.iter().position(|&u| u != 2) {
            return Err(Error::TriangulationDegenerate(format!("edge {e} borders {} face sides", uses[e])));
        }
        // Link of each vertex: corner incidences joined through shared edges.
        let mut corners: Vec<Vec<(usize, usize)>> = vec![Vec::new(); self.reps.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            for k in 0..3 {
                corners[f.corners[k].vertex].push((fi, k));
            }
        }
        for (v, inc) in corners.iter().enumerate() {
            if inc.is_empty() {
                return Err(Error::TriangulationDegenerate(format!("vertex {v} has no faces")));
            }
            // each corner (f,k) touches edges of sides k (outgoing) and k−1 (incoming)
            let edge_ends = |&(f, k): &(usize, usize)| {
                let out = self.face_edges[f][k];
                let inn = self.face_edges[f][(k + 2) % 3];
                (out, inn)
            };
            // Walk: from a corner, leave through its outgoing side, find the other
            // corner at v that uses the same edge as its incoming side.
            let mut seen = vec![false; inc.len()];
            let mut cur = 0;
            for _ in 0..inc.len() {
                if seen[cur] {
                    return Err(Error::TriangulationDegenerate(format!("vertex {v} link is not a single cycle")));
                }
                seen[cur] = true;
                let (out, _) = edge_ends(&inc[cur]);
                let next = inc.iter().enumerate().position(|(i, c)| {
                    let (_, inn) = edge_ends(c);
                    inn.0 == out.0 && inn.1 != out.1 && (i != cur || inc.len() == 1)
                });
                match next {
                    Some(n) => cur = n,
                    None => {
                        return Err(Error::TriangulationDegenerate(format!("vertex {v} link is open")));
                    }
                }
            }
            if !seen.iter().all(|&s| s) || cur != 0 {
                return Err(Error::TriangulationDegenerate(format!("vertex {v} link is not a single cycle")));
            }
        }
        Ok(())
    }

    /// Midpoint subdivision: each edge orbit gains a midpoint orbit and each
    /// face splits into four.
    pub fn refine(&self) -> Result<TriangulatedMesh> {
        let mut reps = self.reps.clone();
        let mut origins = self.origins.clone();
        let mut mid_of_edge = Vec::with_capacity(self.edges.len());
        for e in &self.edges {
            let q = self.isometry(&e.word).apply(&self.reps[e.b]);
            mid_of_edge.push(reps.len());
            reps.push(midpoint(&self.reps[e.a], &q));
            origins.push(VertexOrigin::Midpoint { a: e.a, b: e.b, word: e.word.clone() });
        }
        let mut faces = Vec::with_capacity(4 * self.faces.len());
        for (f, fe) in self.faces.iter().zip(&self.face_edges) {
            let c = &f.corners;
            let mids: Vec<Lift> = (0..3)
                .map(|k| {
                    let (e, fwd) = fe[k];
                    // the midpoint orbit is stored next to the edge's `a` end
                    let anchor = if fwd { &c[k] } else { &c[(k + 1) % 3] };
                    Lift { vertex: mid_of_edge[e], word: anchor.word.clone() }
                })
                .collect();
            let (m01, m12, m20) = (&mids[0], &mids[1], &mids[2]);
            for corners in [
                [c[0].clone(), m01.clone(), m20.clone()],
                [m01.clone(), c[1].clone(), m12.clone()],
                [m20.clone(), m12.clone(), c[2].clone()],
                [m01.clone(), m12.clone(), m20.clone()],
            ] {
                faces.push(Face { corners, root: f.root });
            }
        }
        let mut out = TriangulatedMesh {
            genus: self.genus,
            steiner_per_side: self.steiner_per_side,
            depth: self.depth + 1,
            reps,
            origins,
            faces,
            edges: Vec::new(),
            face_edges: Vec::new(),
            polygon: self.polygon.clone(),
            rho: self.rho.clone(),
            words: self.words.clone(),
        };
        out.rebuild_edges()?;
        Ok(out)
    }

    pub fn refine_to(&self, depth: usize) -> Result<TriangulatedMesh> {
        let mut m = self.clone();
        while m.depth < depth {
            m = m.refine()?;
        }
        Ok(m)
    }

    /// Line-oriented export: a header, then one line per vertex orbit with
    /// its Minkowski coordinates and its neighbors `orbit:word`.
    pub fn to_text(&self) -> String {
        let nbrs = self.neighbors();
        let mut s = String::new();
        let (v, e, f) = self.counts();
        let _ = writeln!(s, "# mesh genus={} depth={} vertices={} edges={} faces={}", self.genus, self.depth, v, e, f);
        for (i, p) in self.reps.iter().enumerate() {
            let c = p.coords();
            let _ = write!(s, "{} {:.17e} {:.17e} {:.17e}", i, c[0], c[1], c[2]);
            for (j, w) in &nbrs[i] {
                let _ = write!(s, " {}:{}", j, word_token(w));
            }
            s.push('\n');
        }
        s
    }
}

/// Compact word token: letters as signed generator numbers joined by `.`;
/// the identity is `e`.
pub fn word_token(w: &Word) -> String {
    if w.is_identity() {
        "e".to_string()
    } else {
        w.0.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(".")
    }
}

/// Builds the depth-0 mesh: Steiner points on the polygon sides and a max-min-angle
/// triangulation of the resulting boundary ring.
pub fn triangulate_polygon(
    poly: &FundamentalPolygon,
    rho: &Representation,
    steiner_per_side: usize,
) -> Result<TriangulatedMesh> {
    let n = poly.side_count();
    let s = steiner_per_side;
    let mut reps = vec![poly.base];
    let mut origins = vec![VertexOrigin::Corner];
    // Steiner orbits live on the lower-indexed side of each pair.
    let mut steiner_rep = vec![Vec::new(); n];
    for p in &poly.pairings {
        let (a, b) = (&poly.vertices[p.side], &poly.vertices[(p.side + 1) % n]);
        for k in 1..=s {
            steiner_rep[p.side].push(reps.len());
            reps.push(geodesic_point(a, b, k as f64 / (s + 1) as f64));
            origins.push(VertexOrigin::Steiner { side: p.side, index: k });
        }
    }
    let mut ring: Vec<Lift> = Vec::with_capacity(n * (s + 1));
    for j in 0..n {
        ring.push(Lift { vertex: 0, word: poly.vertex_words[j].clone() });
        let (partner, _, word, primary) = poly.pairing_of(j);
        for k in 1..=s {
            if primary {
                ring.push(Lift { vertex: steiner_rep[j][k - 1], word: Word::identity() });
            } else {
                // side j is the image of its partner, traversed backwards;
                // `word` maps side j to the partner, so its inverse maps back
                ring.push(Lift { vertex: steiner_rep[partner][s - k], word: word.inverse() });
            }
        }
    }
    let mut words = HashMap::new();
    for l in &ring {
        words.entry(l.word.clone()).or_insert_with(|| rho.eval(&l.word));
    }
    let pts: Vec<HPoint> = ring.iter().map(|l| words[&l.word].apply(&reps[l.vertex])).collect();
    let tris = max_min_angle_triangulation(&pts)?;
    let faces = tris
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut t = *t;
            if poly.orientation < 0.0 {
                t.swap(1, 2);
            }
            Face { corners: [ring[t[0]].clone(), ring[t[1]].clone(), ring[t[2]].clone()], root: i }
        })
        .collect();
    let mut mesh = TriangulatedMesh {
        genus: rho.genus(),
        steiner_per_side: s,
        depth: 0,
        reps,
        origins,
        faces,
        edges: Vec::new(),
        face_edges: Vec::new(),
        polygon: poly.clone(),
        rho: rho.clone(),
        words,
    };
    mesh.rebuild_edges()?;
    mesh.check_locally_cyclic()?;
    Ok(mesh)
}

fn triangle_min_angle(pts: &[HPoint], t: [usize; 3]) -> f64 {
    match triangle_angles_area(&pts[t[0]], &pts[t[1]], &pts[t[2]]) {
        Ok(m) => m.angles.iter().cloned().fold(PI, f64::min),
        Err(_) => 0.0,
    }
}

/// Whether chord `(i, j)` of the sub-polygon `idx` (positions `pts`) lies
/// inside it and meets the boundary only at its endpoints.
fn is_diagonal(k: &[(f64, f64)], idx: &[usize], i: usize, j: usize) -> bool {
    let m = idx.len();
    let (a, b) = (k[idx[i]], k[idx[j]]);
    for e in 0..m {
        let f = (e + 1) % m;
        if e == i || f == i || e == j || f == j {
            continue;
        }
        if segments_intersect(a, b, k[idx[e]], k[idx[f]]) {
            return false;
        }
    }
    // chord must not pass through any other vertex (collinear Steiner points)
    for v in 0..m {
        if v == i || v == j {
            continue;
        }
        let p = k[idx[v]];
        let cr = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
        let within = (p.0 - a.0) * (p.0 - b.0) + (p.1 - a.1) * (p.1 - b.1) <= 0.0;
        if cr.abs() < 1e-13 && within {
            return false;
        }
    }
    // midpoint inside (Klein model: straight chords)
    let mid = ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0);
    let mut inside = false;
    for e in 0..m {
        let (p, q) = (k[idx[e]], k[idx[(e + 1) % m]]);
        if (p.1 > mid.1) != (q.1 > mid.1) {
            let x = p.0 + (mid.1 - p.1) / (q.1 - p.1) * (q.0 - p.0);
            if x > mid.0 {
                inside = !inside;
            }
        }
    }
    inside
}

/// Triangulation of a simple polygon maximizing its smallest angle, by
/// dynamic programming over the sub-polygons cut off by interior diagonals.
/// Ties go to the lowest apex index.
pub fn max_min_angle_triangulation(pts: &[HPoint]) -> Result<Vec<[usize; 3]>> {
    let n = pts.len();
    if n < 3 {
        return Err(Error::TriangulationDegenerate(format!("{n} vertices")));
    }
    let klein: Vec<(f64, f64)> = pts.iter().map(|p| p.to_klein()).collect();
    let idx: Vec<usize> = (0..n).collect();
    let chord = |i: usize, j: usize| j == i + 1 || (i == 0 && j == n - 1) || is_diagonal(&klein, &idx, i, j);
    let valid: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| i < j && chord(i, j)).collect()).collect();
    // best[i][j]: largest smallest angle over triangulations of i..=j
    let mut best = vec![vec![f64::NEG_INFINITY; n]; n];
    let mut apex = vec![vec![usize::MAX; n]; n];
    for i in 0..n - 1 {
        best[i][i + 1] = PI;
    }
    for len in 2..n {
        for i in 0..n - len {
            let j = i + len;
            if !valid[i][j] {
                continue;
            }
            for k in i + 1..j {
                if !(valid[i][k] && valid[k][j]) {
                    continue;
                }
                let score = best[i][k].min(best[k][j]).min(triangle_min_angle(pts, [i, k, j]));
                if score > best[i][j] {
                    best[i][j] = score;
                    apex[i][j] = k;
                }
            }
        }
    }
    if !(best[0][n - 1] > 1e-9) {
        return Err(Error::TriangulationDegenerate("no nondegenerate triangulation".into()));
    }
    let mut out = Vec::with_capacity(n - 2);
    let mut stack = vec![(0, n - 1)];
    while let Some((i, j)) = stack.pop() {
        if j - i < 2 {
            continue;
        }
        let k = apex[i][j];
        out.push([i, k, j]);
        stack.push((i, k));
        stack.push((k, j));
    }
    Ok(out)
}

/// Triangulation fanning out from vertex 0, for comparison.
pub fn fan_triangulation(n: usize) -> Vec<[usize; 3]> {
    (1..n - 1).map(|i| [0, i, i + 1]).collect()
}

pub fn min_angle(pts: &[HPoint], tris: &[[usize; 3]]) -> f64 {
    tris.iter().map(|t| triangle_min_angle(pts, *t)).fold(PI, f64::min)
}

/// One directed neighbor of a vertex orbit: the lift `ρ(word)·rep[vertex]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub vertex: usize,
    pub word: Word,
    pub edge: usize,
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphStatistics {
    /// Hop diameter of the quotient graph.
    pub diameter: usize,
    /// Total vertex weight.
    pub area: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub mu_min: f64,
    pub max_valence: usize,
}

#[derive(Debug, Clone)]
pub struct BiweightedGraph {
    pub genus: usize,
    pub edges: Vec<Edge>,
    pub omega: Vec<f64>,
    pub mu: Vec<f64>,
    pub neighbors: Vec<Vec<Neighbor>>,
    pub stats: GraphStatistics,
}

impl BiweightedGraph {
    pub fn vertex_count(&self) -> usize {
        self.mu.len()
    }

    /// Kernel `η(x, y) = ω_xy / (2 μ(x) μ(y))` on an edge orbit.
    pub fn kernel(&self, edge: usize) -> f64 {
        let e = &self.edges[edge];
        self.omega[edge] / (2.0 * self.mu[e.a] * self.mu[e.b])
    }

    /// Builds a graph from raw data (weights are taken as given).
    pub fn from_parts(genus: usize, edges: Vec<Edge>, omega: Vec<f64>, mu: Vec<f64>) -> Result<BiweightedGraph> {
        let mut neighbors = vec![Vec::new(); mu.len()];
        for (i, e) in edges.iter().enumerate() {
            neighbors[e.a].push(Neighbor { vertex: e.b, word: e.word.clone(), edge: i, omega: omega[i] });
            neighbors[e.b].push(Neighbor { vertex: e.a, word: e.word.inverse(), edge: i, omega: omega[i] });
        }
        let stats = graph_statistics_raw(&neighbors, &omega, &mu)?;
        Ok(BiweightedGraph { genus, edges, omega, mu, neighbors, stats })
    }
}

/// Opposite-angle cotangent weights and one-third-area vertex weights.
///
/// Fails with `NonAcuteTriangulation` on the first edge whose weight is not
/// positive unless `force` is set.
pub fn extract_biweighted_graph(m: &TriangulatedMesh, force: bool) -> Result<BiweightedGraph> {
    let mut cot_sum = vec![0.0; m.edges.len()];
    let mut first_face = vec![usize::MAX; m.edges.len()];
    let mut mu = vec![0.0; m.reps.len()];
    for (fi, (f, fe)) in m.faces.iter().zip(&m.face_edges).enumerate() {
        let p: Vec<HPoint> = f.corners.iter().map(|l| m.position(l)).collect();
        let t = triangle_angles_area(&p[0], &p[1], &p[2])
            .map_err(|_| Error::TriangulationDegenerate(format!("face {fi} is degenerate")))?;
        for k in 0..3 {
            // side k joins corners k and k+1; the opposite angle is at k+2
            let (e, _) = fe[k];
            cot_sum[e] += 1.0 / t.angles[(k + 2) % 3].tan();
            if first_face[e] == usize::MAX {
                first_face[e] = fi;
            }
            mu[f.corners[k].vertex] += t.area / 3.0;
        }
    }
    let omega: Vec<f64> = cot_sum.iter().map(|c| c / 2.0).collect();
    if !force {
        if let Some(e) = omega.iter().position(|w| !(*w > 0.0)) {
            return Err(Error::NonAcuteTriangulation { edge: e, triangle: first_face[e], weight: omega[e] });
        }
    }
    BiweightedGraph::from_parts(m.genus, m.edges.clone(), omega, mu)
}

fn graph_statistics_raw(neighbors: &[Vec<Neighbor>], omega: &[f64], mu: &[f64]) -> Result<GraphStatistics> {
    let n = mu.len();
    let mut diameter = 0;
    for s in 0..n {
        let mut d = vec![usize::MAX; n];
        d[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(v) = q.pop_front() {
            for nb in &neighbors[v] {
                if d[nb.vertex] == usize::MAX {
                    d[nb.vertex] = d[v] + 1;
                    q.push_back(nb.vertex);
                }
            }
        }
        if d.iter().any(|&x| x == usize::MAX) {
            return Err(Error::GraphDisconnected);
        }
        diameter = diameter.max(*d.iter().max().unwrap_or(&0));
    }
    Ok(GraphStatistics {
        diameter,
        area: mu.iter().sum(),
        omega_min: omega.iter().cloned().fold(f64::INFINITY, f64::min),
        omega_max: omega.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        mu_min: mu.iter().cloned().fold(f64::INFINITY, f64::min),
        max_valence: neighbors.iter().map(|v| v.len()).max().unwrap_or(0),
    })
}

pub fn graph_statistics(g: &BiweightedGraph) -> Result<GraphStatistics> {
    graph_statistics_raw(&g.neighbors, &g.omega, &g.mu)
}
