//! Guaranteed finite-horizon boundary control for spatially discretized 1D
//! reaction-diffusion equations.
//!
//! The pipeline: discretize the PDE by finite differences ([`model`]),
//! certify per-mode one-sided Lipschitz and error-ball constants
//! ([`bounds`]), integrate with subsampled explicit Euler ([`integrate`]),
//! abstract the state box onto a lattice with a precomputed successor table
//! ([`grid`]), synthesize a mode pattern by backward value iteration with a
//! `(2k + 1) epsilon` distance guarantee ([`synth`]), and optionally halve
//! the spatial dimension with a certified projection ([`reduce`]).

pub mod artifact;
pub mod bounds;
pub mod error;
pub mod grid;
pub mod integrate;
pub mod model;
pub mod reduce;
pub mod synth;

pub use error::{Error, Result};
pub use model::{DiscreteSystem, ExtendedMode, Mode, ReactionSpec, SystemParams};
