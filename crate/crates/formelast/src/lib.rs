//! Bundle-valued exterior calculus for nonlinear elasticity on structured grids.
//!
//! Fields are sampled at the nodes of a body chart (Cartesian box or cylindrical
//! sector) and carried in three representations: spatial, material, and convective.
//! The modules build up from grids and metrics to forms, covariant calculus, mass and
//! momentum, the stress web, and time integration; [`harness`] checks the identities
//! that tie them together and drives the command-line tool.

// `!(x > 0.0)` is used on purpose throughout: unlike `x <= 0.0` it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Per-node loops index several parallel arrays by the same node; iterator chains
// over four or five zipped slices read worse.
#![allow(clippy::needless_range_loop)]

pub mod config;
pub mod error;
pub mod forms;
pub mod geometry;
pub mod grid;
pub mod tensor;
pub mod calculus;
pub mod masskinetics;
pub mod stress;
pub mod dynamics;
pub mod harness;

pub use error::{Error, Result};
pub use grid::{Chart, CoordSystem, Grid};
pub use tensor::{Representation, M3, V3};
