//! Exact and Monte Carlo tools for the solid-on-solid interface on ℤ².
//!
//! The crate is organised bottom-up: [`lattice`] holds geometry and height
//! fields, [`contours`] the dual-lattice level lines, [`exact`] finite-volume
//! partition functions, [`mc`] the heat-bath sampler and [`free_energy`] the
//! estimators built on top of it.

pub mod contours;
pub mod error;
pub mod exact;
pub mod free_energy;
pub mod lattice;
pub mod mc;
pub mod numerics;

pub use error::{Error, Result};
pub use lattice::{BoundaryCondition, HeightConfig, InverseTemperature, Region, Site, Staircase};
