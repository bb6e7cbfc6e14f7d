//! Coarse correlated equilibria for symmetric stochastic differential games
//! and their mean field limit.
//!
//! The crate is `no_std` with `alloc`. Enable the `parallel` feature to fan
//! Monte Carlo replications out over a rayon pool; results are identical with
//! or without it because every replication owns its random streams.
//!
//! Modules:
//!
//! - [`model`]: game primitives (drift, costs, action box, initial law) and the
//!   bang-bang instance.
//! - [`analytic`]: closed forms for the bang-bang example (consistency weights,
//!   the affine `h·m + k` margin, region sweeps, finite-`N` gap oracle).
//! - [`sde`]: Euler–Maruyama simulation of the `N`-player system and of the
//!   representative player, measure flows, and the McKean–Vlasov particle
//!   fixed point.
//! - [`correlation`]: finite correlation devices and the consistency check.
//! - [`equilibrium`]: payoff estimation, `ε`-gap estimation and propagation of
//!   chaos diagnostics.
//! - [`metrics`]: one-dimensional Wasserstein distances and moments.
#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod analytic;
pub mod correlation;
pub mod equilibrium;
mod error;
mod exec;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod sde;
mod special;
pub mod strategy;

pub use error::{Error, Result};
pub use model::{ActionBox, InitialLaw, MeasureUse, MeasureView, ModelSpec, Sense};
pub use strategy::{ConstantAction, Strategy, StrategyContext};
