//! Simulation and verification laboratory for reaction–advection–anisotropic
//! diffusion systems with triangular mass-action kinetics.

pub mod cli;
pub mod coeffs;
pub mod duality;
pub mod error;
pub mod estimates;
pub mod expr;
pub mod grid;
pub mod network;
pub mod presets;
pub mod scenario;
pub mod solver;
pub mod verification;

pub use error::{Error, Result};
