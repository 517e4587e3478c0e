//! SLE martingales for boundary WZW correlators.
//!
//! The crate covers four layers:
//!
//! * [`lie_algebra`]: su(n) generators, Casimirs and conformal weights;
//! * [`conditions`]: the depth-two null-vector conditions fixing (κ, τ, ρ);
//! * [`invariant_space`] and [`blocks`]: invariant subspaces of four-fold
//!   tensor products, closed-form one-point conformal blocks, KZ residuals
//!   and the algebraic martingale matrices;
//! * [`sle_sim`]: Monte Carlo simulation of SLE_κ / SLE_{κ,ρ} with a
//!   group-valued Brownian gauge factor and a statistical martingale test.
//!
//! [`verify`] bundles the acceptance checks and [`cli`] exposes everything on
//! the command line.

pub mod blocks;
pub mod branch;
pub mod cli;
pub mod conditions;
pub mod error;
pub mod exact;
pub mod invariant_space;
pub mod lie_algebra;
pub(crate) mod serde_q;
pub mod sle_sim;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
