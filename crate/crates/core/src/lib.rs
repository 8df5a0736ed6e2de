//! Numerical laboratory for self-similar expanders of the corotational
//! harmonic map heat flow into the sphere.
//!
//! * [`ode_core`]: adaptive Dormand–Prince integration and the origin series.
//! * [`profile_solver`]: shooting for expander profiles, branch scans, and the
//!   linear companion equations.
//! * [`asymptotics`]: large-ρ basis, tail extrapolation, decay fits.
//! * [`pde_simulator`]: the radial flow in physical and self-similar variables,
//!   plus the comparison, energy and regularity checkers.
//! * [`gl_regularization`]: the Ginzburg–Landau relaxation and ε → 0 selection.
//! * [`io`]: manifests, configs and CSV output shared by the command line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod gl_regularization;
pub mod io;
pub mod ode_core;
pub mod pde_simulator;
pub mod profile_solver;

pub use ode_core::{Dimension, Pole, Scalar};

/// Double-precision aliases used throughout the higher-level modules.
pub type Trajectory = ode_core::Trajectory<f64>;
pub type SeriesLaunch = ode_core::SeriesLaunch<f64>;
/// Single-precision trajectory, mostly useful for quick exploratory runs.
pub type Trajectory32 = ode_core::Trajectory<f32>;
