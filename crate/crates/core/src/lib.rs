//! Desk-scale crash-simulation benchmark.
//!
//! [`assembly`] holds the mesh and design types, [`solver`] integrates them,
//! [`signals`] reduces histories to scalar responses, [`doe`] plans
//! campaigns, [`datastore`] persists cases, [`surrogate`] learns field
//! trajectories and [`evalstats`] scores models against each other.

pub mod assembly;
pub mod cli;
pub mod datastore;
pub mod doe;
pub mod evalstats;
pub mod signals;
pub mod surrogate;
pub mod solver;
pub mod vec3;
