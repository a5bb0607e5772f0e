//! Mean-field market model of interacting assets.
//!
//! Each asset's period log-return moves in a log-Gaussian-mixture potential
//! and is coupled to the market mean through a quadratic (Curie-Weiss)
//! interaction. The crate provides the closed-form stationary theory, phase
//! diagnostics, heterogeneous linear response, particle and density
//! dynamics, and an option-calibration pipeline.

pub mod calibration;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod hetero;
pub mod numerics;
pub mod phase;
pub mod mean_field;
pub mod micro_flow;
pub mod potential;

pub use error::{Error, Result};
pub use potential::{
    invert_renormalization, potential, renormalize, stationary_density, symmetrize,
    MixtureComponent, MixtureStationary, Potential, PotentialParams, RenormalizedParams,
    SymmetricDecomposition,
};
