//! Link-level Monte Carlo simulator for one-shot beam alignment in cell-free
//! mmWave massive MIMO networks.
//!
//! A drop places access points, users and scatterers in a square area
//! ([`scenario`]), assigns data patterns to the access points
//! ([`patterns`]), synthesizes the averaged beamspace energies every user
//! measures during the beacon phase ([`airlink`]) and estimates the dominant
//! (AoD, AoA) grid pair per pattern ([`estimators`]). [`harness`] runs drops
//! and measures detection probability.

pub mod airlink;
pub mod beamspace;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod params;
pub mod patterns;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
pub use params::SimParams;
