//! Pseudo-spectral simulator for viscoelastic phase separation on a periodic
//! 2D domain, with a relative-energy twin-run verification harness.

pub mod cli;
pub mod coeffs;
pub mod config;
pub mod dynamics;
pub mod energetics;
pub mod error;
pub mod grid;
pub mod par;
pub mod relenergy;
pub mod state;
pub mod timestep;

pub use error::{Result, VpsError};
