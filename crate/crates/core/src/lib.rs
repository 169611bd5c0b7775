//! Optimal control of a nonlocal evaporation model for a binary mixture.
//!
//! The state is the pair `(m, φ)` on a doubly periodic rectangle, driven by
//! a nonlocal drift `∇J ∗ m` and a distributed source control `θ` in the
//! `φ` equation. The crate provides the discrete forward solver, its
//! linearization, the exact discrete adjoint and a projected-gradient
//! optimizer, plus the `evapctl` command line tool.

pub mod adjoint;
pub mod config;
pub mod control;
pub mod error;
pub mod forward;
pub mod grid;
pub mod io;
pub mod kernel;
pub mod optimize;
pub mod sensitivity;
pub mod spectral;
pub mod verify;

pub use control::{project_admissible, Bounds, ControlField};
pub use error::{Error, Result};
pub use forward::{InitData, Model, ModelParams, Trajectory};
pub use grid::{Field, Grid, VectorField};
pub use kernel::{Kernel, KernelKind};
