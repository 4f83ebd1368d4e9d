//! Simulation toolkit for shaping two-photon wavefronts through scattering
//! media: states, media, coincidence measurement, optimizers and the induced
//! multi-spin Hamiltonian.

pub mod cli;
pub mod error;
pub mod ising;
pub mod formats;
pub mod measure;
pub mod medium;
pub mod rng;
pub mod shape;
pub mod state;

pub use error::{Error, Result};
