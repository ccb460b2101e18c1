//! Radial vortex solutions of the SO(5) Ginzburg–Landau model.
//!
//! Two systems are covered: the finite-κ system in `(f, S, m)` and the
//! high-κ limit in `(f, m)`. The crate solves both, continues the
//! antiferromagnetic-core branch in `g`, computes the bifurcation threshold,
//! and evaluates the exact identities solutions must satisfy.

pub mod banded;
pub mod continuation;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod io;
pub mod model;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{Grading, GridSpec, OriginBc, RadialGrid};
pub use model::{EnergyBreakdown, Hessian, Kappa, Model, ModelParams, Pohozaev, Profile, TangentDirection};
pub use solver::{Seed, SolveOptions, SolveReport};
