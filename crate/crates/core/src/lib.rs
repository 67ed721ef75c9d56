//! Multi-class occupancy mapping with closed-form Shannon mutual information.
//!
//! The crate covers the full pipeline of semantic exploration: categorical
//! log-odds beliefs, a dense grid and a pruning semantic octree, exact
//! per-beam mutual information over dense and run-length encoded rays,
//! frontier planning, and a deterministic headless simulator.

pub mod error;
pub mod geometry;
pub mod grid;
mod io;
pub mod logodds;
pub mod mi;
pub mod octree;
pub mod planner;
pub mod registry;
pub mod sim;

pub use error::{Error, Result};
pub use geometry::BeamMeasurement;
pub use grid::{GridMap, RayTrace};
pub use logodds::{CategoricalPmf, CellRelation, LogOdds, SensorParams};
pub use mi::{BeliefMap, SrleRay};
pub use octree::SemanticOctree;
