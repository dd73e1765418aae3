//! Run configuration and the end-to-end construction: representations,
//! polygons, mesh, biweighted graph and initial map.

use crate::error::{Error, Result};
use crate::flow::{initial_map, EquivariantMap, FlowConfig, FlowProblem, Method, DEFAULT_TOLERANCE};
use crate::mesh::{extract_biweighted_graph, triangulate_polygon, BiweightedGraph, TriangulatedMesh};
use crate::polygon::{initial_guess, minimize_cost, optimize_fundamental_polygon, recenter, FundamentalPolygon};
use crate::surface::{fn_to_representation, FnCoordinates, Representation, SurfaceGroup};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Domain used for the reference runs: all three lengths 2.15, no twists.
pub const REFERENCE_DOMAIN_LENGTH: f64 = 2.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub genus: usize,
    pub domain: FnCoordinates,
    pub target: FnCoordinates,
    pub depth: usize,
    pub steiner_per_side: usize,
    pub method: Method,
    /// Fixed-step stepsize; `None` means `1/β`.
    pub stepsize: Option<f64>,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub stride: usize,
    pub output: Option<PathBuf>,
    pub port: Option<u16>,
    /// Accept non-positive edge weights instead of failing.
    pub force: bool,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig::reference()
    }
}

impl RunConfig {
    /// Genus 2, target lengths (2, 2, 0.5) and twists (−1.5, 2, 0.5), depth 2.
    pub fn reference() -> RunConfig {
        RunConfig {
            genus: 2,
            domain: FnCoordinates::new(vec![REFERENCE_DOMAIN_LENGTH; 3], vec![0.0; 3]),
            target: FnCoordinates::new(vec![2.0, 2.0, 0.5], vec![-1.5, 2.0, 0.5]),
            depth: 2,
            steiner_per_side: crate::mesh::DEFAULT_STEINER_PER_SIDE,
            method: Method::Fixed,
            stepsize: None,
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: 2_000_000,
            stride: 1000,
            output: None,
            port: None,
            force: false,
            seed: 0,
        }
    }

    /// Checks every field before any computation starts.
    pub fn validate(&self) -> Result<()> {
        let group = SurfaceGroup::new(self.genus)?;
        self.domain.validate(group.genus())?;
        self.target.validate(group.genus())?;
        self.flow_config().validate()
    }

    pub fn flow_config(&self) -> FlowConfig {
        FlowConfig {
            method: self.method,
            stepsize: self.stepsize,
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            stride: self.stride,
        }
    }

    pub fn from_json(text: &str) -> Result<RunConfig> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        RunConfig::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Everything the flow needs, built from a [`RunConfig`]. Both
/// representations are conjugated so that their polygons are centered at
/// the origin.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: RunConfig,
    pub group: SurfaceGroup,
    pub rho_l: Representation,
    pub rho_r: Representation,
    pub domain_polygon: FundamentalPolygon,
    pub target_polygon: FundamentalPolygon,
    pub mesh: TriangulatedMesh,
    pub graph: BiweightedGraph,
    pub problem: FlowProblem,
    pub initial: EquivariantMap,
}

/// The target polygon only anchors the initial map, so it is not required
/// to be simple.
pub fn target_polygon(rho: &Representation, group: &SurfaceGroup) -> Result<FundamentalPolygon> {
    let m = minimize_cost(rho, initial_guess(rho))?;
    let mut p = FundamentalPolygon::with_base(rho, &group.relator(), m.point)?;
    p.newton_iterations = m.iterations;
    p.gradient_norm = m.gradient_norm;
    Ok(p)
}

impl Pipeline {
    pub fn build(config: &RunConfig) -> Result<Pipeline> {
        config.validate()?;
        let group = SurfaceGroup::new(config.genus)?;
        let rho_l = fn_to_representation(&group, &config.domain)?;
        let rho_r = fn_to_representation(&group, &config.target)?;
        let (rho_l, domain_polygon) =
            recenter(&rho_l, &optimize_fundamental_polygon(&rho_l, &group.relator())?, &group.relator())?;
        let (rho_r, target_polygon) = recenter(&rho_r, &target_polygon(&rho_r, &group)?, &group.relator())?;
        let mesh = triangulate_polygon(&domain_polygon, &rho_l, config.steiner_per_side)?.refine_to(config.depth)?;
        let graph = extract_biweighted_graph(&mesh, config.force)?;
        let initial = initial_map(&mesh, &target_polygon, &rho_r)?;
        let problem = FlowProblem::new(graph.clone(), rho_r.clone());
        Ok(Pipeline {
            config: config.clone(),
            group,
            rho_l,
            rho_r,
            domain_polygon,
            target_polygon,
            mesh,
            graph,
            problem,
            initial,
        })
    }
}
