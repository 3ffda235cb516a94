//! Solvers for Euclidean Steiner and single-sink Gilbert-Steiner problems in
//! dimension `n >= 3`.
//!
//! The crate is organised around one pipeline:
//!
//! * [`currents`] represents candidate networks as polyhedral 1-currents with
//!   integer multiplicity vectors and evaluates their `Psi`-masses,
//! * [`calibration`] checks constant-form calibration certificates of
//!   minimality against a candidate current,
//! * [`exact`] solves small instances by full Steiner topology enumeration
//!   plus convex position optimisation,
//! * [`geometry`] builds the tube-excised computational domain and the
//!   winding boundary data,
//! * [`field`] discretises and minimises the vector Ginzburg-Landau energies
//!   over pinned lattice fields,
//! * [`extract`] recovers the concentration set of the Jacobians from a
//!   minimised field as a polyline network via plaquette winding numbers.

pub mod calibration;
pub mod currents;
pub mod error;
pub mod exact;
pub mod extract;
pub mod field;
pub mod geometry;
pub mod linalg;

pub use error::{Error, Result};
