//! Link-level simulator and schedulers for uplink training in multi-cell
//! massive MIMO.
//!
//! The crate models a TDD network in which every base station observes user
//! channels through a unitary DFT beam basis. On top of that it provides:
//!
//! - spatial signatures: the beam index sets that carry almost all of a
//!   link's average power, plus per-beam power profiles;
//! - copilot user grouping inside each cell, either power-agnostic
//!   (maximum beam coverage) or power-aware (maximum captured power with a
//!   per-beam best-owner rule);
//! - cross-cell pilot allocation by a greedy maximum-τ-cut over a group
//!   interference graph whose edge weights scale signature overlap by the
//!   intruding link's large-scale gain;
//! - a training and uplink-detection chain for the proposed schemes and a
//!   conventional orthogonal-pilot baseline, with per-user MSE / SINR /
//!   spectral-efficiency metrics;
//! - a scenario harness (flat key=value configs, seeded Monte Carlo runs,
//!   CSV output) driving all of the above, also exposed through the
//!   `beamcover` command-line binary.
//!
//! Exhaustive brute-force oracles for the grouping and pilot-allocation
//! problems are part of the public API so the greedy solvers can be checked
//! against exact optima on small instances.

pub mod channel;
pub mod error;
pub mod grouping;
pub mod harness;
pub mod link_sim;
pub mod math;
pub mod pilot_graph;
pub mod rng;
pub mod signature;
mod textio;

pub use error::{Error, Result};
