//! Simulation and design toolkit for a magnetically actuated elastic fin.
//!
//! The plant is a point mass on an elastic restoring force, suspended in the
//! gap between two opposing permanent magnets and driven by a pair of
//! anti-parallel solenoids. The library covers the full workflow:
//!
//! * [`model`]: the per-unit-mass equations of motion and conserved energy.
//! * [`equilibria`]: fixed points, their linear stability, and the
//!   magnet-strength threshold where the center orbit collapses.
//! * [`sim`]: adaptive and fixed-step integration with drive laws, capture
//!   detection, and deterministic sampling on a uniform output grid.
//! * [`spectral`]: oscillation frequency extraction by two independent
//!   routes (discrete spectrum and zero crossings) that must agree, plus
//!   amplitude-to-frequency tables for the softening backbone.
//! * [`control`]: PID tracking of a reference orbit and the steady-state
//!   force it costs.
//! * [`design`]: physical-unit sizing, from beam and magnet catalog data to
//!   model constants and solenoid turn counts.
//!
//! All dynamics run per unit mass; [`model::PhysicalParams`] converts lab
//! quantities into that normalization and [`design`] converts back.

pub mod control;
pub mod design;
pub mod equilibria;
pub mod error;
pub mod model;
pub mod sim;
pub mod spectral;

pub use error::Error;
pub use model::{State, SystemParams};
pub use sim::{simulate, SimOptions, Trajectory};
