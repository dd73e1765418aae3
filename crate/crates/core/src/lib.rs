//! Discrete equivariant harmonic maps between closed hyperbolic surfaces.
//!
//! The pipeline turns Fenchel-Nielsen coordinates for a domain and a target
//! surface into Fuchsian representations, builds an invariant triangulated
//! mesh of the domain, and minimizes the discrete energy of equivariant maps
//! with heat-flow or center-of-mass iterations.

pub mod error;
pub mod flow;
pub mod geometry;
pub mod mesh;
pub mod pipeline;
pub mod polygon;
pub mod snapshot;
pub mod surface;

pub use error::{Error, Result};
