//! Snapshot stream format and the static geometry served to viewers.
//!
//! A snapshot file is line-delimited JSON: one header object, then one
//! record per recorded flow state. The live stream sends the same lines.

use crate::flow::{FlowState, Method};
use crate::mesh::word_token;
use crate::pipeline::{Pipeline, RunConfig};
use serde::{Deserialize, Serialize};

pub const SCHEMA: &str = "hypmap.snapshot";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub schema: String,
    pub version: u32,
    pub genus: usize,
    pub vertex_count: usize,
    pub config: RunConfig,
    pub alpha: f64,
    pub beta: f64,
}

impl SnapshotHeader {
    pub fn new(p: &Pipeline, alpha: f64, beta: f64) -> SnapshotHeader {
        SnapshotHeader {
            schema: SCHEMA.to_string(),
            version: SCHEMA_VERSION,
            genus: p.group.genus(),
            vertex_count: p.mesh.reps.len(),
            config: p.config.clone(),
            alpha,
            beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub iteration: usize,
    pub energy: f64,
    pub tension_norm: f64,
    pub stepsize: f64,
    pub method: Method,
    /// Image of each vertex-orbit representative in disk coordinates.
    pub points: Vec<[f64; 2]>,
}

impl SnapshotRecord {
    pub fn from_state(s: &FlowState) -> SnapshotRecord {
        SnapshotRecord {
            iteration: s.iteration,
            energy: s.energy,
            tension_norm: s.tension_norm,
            stepsize: s.last_stepsize,
            method: s.method,
            points: s
                .map
                .points
                .iter()
                .map(|p| {
                    let (u, v) = p.to_disk();
                    [u, v]
                })
                .collect(),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

pub fn header_line(h: &SnapshotHeader) -> String {
    serde_json::to_string(h).expect("header serializes")
}

#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("missing header line")]
    MissingHeader,
    #[error("unsupported schema {0} version {1}")]
    Schema(String, u32),
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
}

/// Parses a snapshot file back into its header and records.
pub fn parse_snapshots(text: &str) -> Result<(SnapshotHeader, Vec<SnapshotRecord>), ParseError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or(ParseError::MissingHeader)?;
    let header: SnapshotHeader =
        serde_json::from_str(first).map_err(|source| ParseError::Json { line: 1, source })?;
    if header.schema != SCHEMA || header.version != SCHEMA_VERSION {
        return Err(ParseError::Schema(header.schema, header.version));
    }
    let records = lines
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| ParseError::Json { line: i + 1, source }))
        .collect::<Result<Vec<SnapshotRecord>, _>>()?;
    Ok((header, records))
}

/// One face corner: the vertex orbit, its lift word, and the target gluing
/// `ρ_R(word)` as disk Möbius coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryCorner {
    pub vertex: usize,
    pub word: String,
    pub domain: [f64; 2],
    pub target_mobius: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryFace {
    /// Depth-0 triangle containing this face; faces sharing it are matched
    /// with the same target triangle by the initial map.
    pub root: usize,
    pub corners: [GeometryCorner; 3],
}

/// Static data for drawing: polygons, generator axes and the lifted faces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub genus: usize,
    pub depth: usize,
    pub domain_polygon: Vec<[f64; 2]>,
    pub target_polygon: Vec<[f64; 2]>,
    /// Endpoints on the unit circle of the domain generator axes.
    pub domain_axes: Vec<[[f64; 2]; 2]>,
    pub target_axes: Vec<[[f64; 2]; 2]>,
    pub faces: Vec<GeometryFace>,
}

fn disk(p: &crate::geometry::HPoint) -> [f64; 2] {
    let (u, v) = p.to_disk();
    [u, v]
}

/// Boundary point of the disk for a real upper-half-plane coordinate
/// (`None` is the point at infinity).
fn boundary_disk(t: Option<f64>) -> [f64; 2] {
    match t {
        Some(t) => {
            let n = t * t + 1.0;
            [(t * t - 1.0) / n, 2.0 * t / n]
        }
        None => [1.0, 0.0],
    }
}

/// Repelling and attracting fixed points of a hyperbolic isometry on the
/// boundary circle, from the roots of `cz² + (d − a)z − b = 0`.
fn axis_endpoints(g: &crate::geometry::Isometry) -> [[f64; 2]; 2] {
    let (a, b, c, d) = (g.a, g.b, g.c, g.d);
    let disc = ((a + d).powi(2) - 4.0).max(0.0).sqrt();
    let scale = a.abs().max(b.abs()).max(c.abs()).max(d.abs());
    let (z1, z2) = if c.abs() <= 1e-14 * scale {
        (Some(b / (d - a)), None)
    } else {
        // the root without cancellation first, the other from the product −b/c
        let s = if a - d >= 0.0 { 1.0 } else { -1.0 };
        let r = (a - d + s * disc) / (2.0 * c);
        let other = if r != 0.0 { -b / (c * r) } else { (a - d - s * disc) / (2.0 * c) };
        (Some(r), Some(other))
    };
    // derivative at a fixed point is 1/(cz + d)²; attracting when |cz + d| > 1
    let attracting = |z: Option<f64>| match z {
        Some(z) => (c * z + d).abs() > 1.0,
        None => a.abs() > d.abs(),
    };
    if attracting(z1) {
        [boundary_disk(z2), boundary_disk(z1)]
    } else {
        [boundary_disk(z1), boundary_disk(z2)]
    }
}

impl Geometry {
    pub fn new(p: &Pipeline) -> Geometry {
        let faces = p
            .mesh
            .faces
            .iter()
            .map(|f| {
                let corner = |k: usize| {
                    let l = &f.corners[k];
                    GeometryCorner {
                        vertex: l.vertex,
                        word: word_token(&l.word),
                        domain: disk(&p.mesh.position(l)),
                        target_mobius: p.rho_r.eval(&l.word).disk_mobius(),
                    }
                };
                GeometryFace { root: f.root, corners: [corner(0), corner(1), corner(2)] }
            })
            .collect();
        Geometry {
            genus: p.group.genus(),
            depth: p.mesh.depth,
            domain_polygon: p.domain_polygon.vertices.iter().map(disk).collect(),
            target_polygon: p.target_polygon.vertices.iter().map(disk).collect(),
            domain_axes: p.rho_l.generators.iter().map(axis_endpoints).collect(),
            target_axes: p.rho_r.generators.iter().map(axis_endpoints).collect(),
            faces,
        }
    }
}

/// Writes a header and records as snapshot-file text.
pub fn snapshot_text(header: &SnapshotHeader, records: &[SnapshotRecord]) -> String {
    let mut s = header_line(header);
    s.push('\n');
    for r in records {
        s.push_str(&r.to_line());
        s.push('\n');
    }
    s
}
