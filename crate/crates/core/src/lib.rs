//! Exponential Magnus-Rosenbrock time integration for semilinear parabolic
//! problems, semi-discretized with P1 finite elements on structured 2D
//! meshes.
//!
//! The crate is organized bottom-up:
//! - [`mesh`]: structured triangulations of rectangles with boundary tags;
//! - [`assembly`]: mass/stiffness assembly, projections, Dirichlet lifting;
//! - [`nonlinear`]: pointwise reaction terms and their linearizations;
//! - [`expmath`]: matrix exponential and phi-function actions (dense and
//!   Krylov);
//! - [`integrator`]: the exponential integrators and reference solvers;
//! - [`harness`]: convergence, comparison, and snapshot studies;
//! - [`report`]: order fitting, tables, and CSV output.

pub mod assembly;
pub mod error;
pub mod expmath;
pub mod harness;
pub mod integrator;
pub mod mesh;
pub mod nonlinear;
pub mod problems;
pub mod quadrature;
pub mod report;
pub mod sparse;
pub mod system;

pub use error::{Error, Result};
