//! Compiler and simulator for programmable Mach-Zehnder interferometer
//! meshes.
//!
//! The crate models a square (Clements-style) mesh of tunable beam
//! splitters: it compiles arbitrary unitaries to per-cell phase settings,
//! computes classical scattering matrices under realistic imperfections,
//! synthesizes and fits thermo-optic calibration fringes, and predicts
//! two-photon Hong-Ou-Mandel interference observables.
//!
//! All values are immutable after construction and every operation is a
//! pure function of its inputs, so anything here can be shared freely
//! across threads.

pub mod calibration;
pub mod compiler;
pub mod error;
pub mod matrix;
pub mod mesh;
pub mod quantum;
pub mod seed;
pub mod targets;

pub use error::{Error, Result};
pub use matrix::{ComplexMatrix, UnitaryMatrix};
pub use mesh::{ImperfectionModel, MeshSpec, PhaseConfig, ScatteringMatrix};
