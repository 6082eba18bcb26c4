//! Simulation and equilibrium analysis for a coupled popularity model on a
//! user network.
//!
//! Influencers compete for user attention. Each user mixes neighbor
//! influence, a global popularity index, and intrinsic influencer quality
//! with per-user convex weights. The crate provides:
//!
//! - [`graph`]: row-stochastic interaction matrices, seeded random graphs,
//!   and the reachability / aperiodicity queries behind stability checks;
//! - [`spectral`]: spectral radii, subdominant magnitudes, stationary
//!   distributions, and matrix power decay;
//! - [`model`]: the state types and the one-step update law;
//! - [`series`]: the polynomial family behind closed-form perturbation
//!   bounds;
//! - [`equilibria`]: closed-form limits, consensus functionals, and
//!   machine-checkable stability certificates for each weight regime;
//! - [`sim`]: trajectory simulation, convergence detection, and
//!   theory-versus-simulation verification;
//! - [`io`]: the JSON/CSV wire formats for scenarios, matrices, and
//!   trajectories.

#![forbid(unsafe_code)]
// Negated comparisons such as `!(x >= 0.0)` are deliberate: they reject
// NaN together with out-of-range values. Index loops frequently walk
// parallel arrays, where `for i in 0..n` is the clearer form.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod equilibria;
pub mod error;
pub mod graph;
pub mod io;
pub mod model;
pub mod series;
pub mod sim;
pub mod spectral;

pub use error::{Error, Hypothesis, Result};
