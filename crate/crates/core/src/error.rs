//! Error type shared by every stage of the pipeline.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("barycenter iteration did not converge (residual {residual:.3e} after {iterations} steps)")]
    BarycenterDiverged { residual: f64, iterations: usize },
    #[error("point too far from the origin (x3 = {x3:.3e})")]
    CoordinateOverflow { x3: f64 },
    #[error("degenerate triangle")]
    DegenerateTriangle,
    #[error("degenerate quadrilateral")]
    DegenerateQuadrilateral,
    #[error("genus {0} is not supported (need genus >= 2)")]
    UnsupportedGenus(usize),
    #[error("Fenchel-Nielsen input has {got} entries, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid Fenchel-Nielsen coordinates: {0}")]
    InvalidCoordinates(String),
    #[error("representation inconsistent: {0}")]
    RepresentationInconsistent(String),
    #[error("isometry is not hyperbolic (|trace| = {0})")]
    NotHyperbolic(f64),
    #[error("fundamental polygon optimization failed: {0}")]
    PolygonOptimizationFailed(String),
    #[error("fundamental polygon is not simple (sides {0} and {1} cross)")]
    PolygonSelfIntersecting(usize, usize),
    #[error("triangulation degenerate: {0}")]
    TriangulationDegenerate(String),
    #[error("non-acute triangulation: edge {edge} has weight {weight:.3e} (triangle {triangle})")]
    NonAcuteTriangulation { edge: usize, triangle: usize, weight: f64 },
    #[error("quotient graph is disconnected")]
    GraphDisconnected,
    #[error("initial map mismatch: {0}")]
    InitialMapMismatch(String),
    #[error("line search failed")]
    LineSearchFailed,
    #[error("stepsize {t:.3e} exceeds 1/beta = {max:.3e}")]
    StepsizeOutOfRange { t: f64, max: f64 },
    #[error("flow did not converge within {iterations} iterations (tension {tension:.3e})")]
    FlowNotConverged { iterations: usize, tension: f64 },
    #[error("quadrature did not converge")]
    QuadratureFailed,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// The variant name, used as a stable error code.
    pub fn name(&self) -> &'static str {
        match self {
            Error::BarycenterDiverged { .. } => "BarycenterDiverged",
            Error::CoordinateOverflow { .. } => "CoordinateOverflow",
            Error::DegenerateTriangle => "DegenerateTriangle",
            Error::DegenerateQuadrilateral => "DegenerateQuadrilateral",
            Error::UnsupportedGenus(..) => "UnsupportedGenus",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::InvalidCoordinates(..) => "InvalidCoordinates",
            Error::RepresentationInconsistent(..) => "RepresentationInconsistent",
            Error::NotHyperbolic(..) => "NotHyperbolic",
            Error::PolygonOptimizationFailed(..) => "PolygonOptimizationFailed",
            Error::PolygonSelfIntersecting(..) => "PolygonSelfIntersecting",
            Error::TriangulationDegenerate(..) => "TriangulationDegenerate",
            Error::NonAcuteTriangulation { .. } => "NonAcuteTriangulation",
            Error::GraphDisconnected => "GraphDisconnected",
            Error::InitialMapMismatch(..) => "InitialMapMismatch",
            Error::LineSearchFailed => "LineSearchFailed",
            Error::StepsizeOutOfRange { .. } => "StepsizeOutOfRange",
            Error::FlowNotConverged { .. } => "FlowNotConverged",
            Error::QuadratureFailed => "QuadratureFailed",
            Error::InvalidConfig(..) => "InvalidConfig",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
