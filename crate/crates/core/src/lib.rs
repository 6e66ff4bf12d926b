//! Numerical laboratory for pseudo-orbit shadowing of flows on plane charts and the flat torus.
//!
//! The crate is organised bottom-up:
//!
//! * [`flow`]: surfaces, vector fields, RK4 flow maps, transversals.
//! * [`pseudo`]: pseudotrajectories built from glued orbit arcs, and their validation.
//! * [`reparam`]: piecewise-linear time changes and the minimax warping shadowing verifiers.
//! * [`sectors`]: base orbits and sector decomposition around a singularity.
//! * [`critical`]: critical elements, return maps, connection graphs and case diagnosis.
//! * [`witnesses`]: pseudotrajectories that no true orbit can shadow, and their confirmation.

pub mod critical;
pub mod error;
pub mod flow;
pub mod geom;
pub mod pseudo;
pub mod reparam;
pub mod sectors;
pub mod witnesses;

pub use error::{Error, Result};
pub use flow::{
    build_transversal, CatalogField, FieldSpec, Flow, OrbitSegment, Surface, Transversal, VectorField,
};
pub use geom::Point;
pub use pseudo::{jump_size, validate_pseudotrajectory, ExtensionRule, Pseudotrajectory, ShadowingConfig};
pub use reparam::{
    verify_shadowing, Mode, Reparametrization, SearchConfig, ShadowingResult,
};
