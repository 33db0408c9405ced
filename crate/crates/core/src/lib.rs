//! Deterministic simulator for a blockchain-secured digital-twin network.
//!
//! N industrial devices stream inference workloads to M gateways; each
//! gateway runs the bottom part of a per-device DNN and offloads the rest
//! to its access point, where the APs also mine blocks under a
//! reputation-eased proof-of-work race. A drift-plus-penalty controller
//! picks the partition points and frequencies each slot, trading latency
//! against a long-term per-AP reputation band.
//!
//! Layering, bottom to top:
//!
//! - [`profile`]: DNN layer shapes, FLOPs, and intermediate output sizes.
//! - [`env`]: topology, per-slot randomness, physical-layer closed forms.
//! - [`consensus`]: reputation, difficulty, block race, mining energy.
//! - [`queues`]: virtual queues for the long-term reputation constraint.
//! - [`solver`]: the three per-slot subproblem solvers.
//! - [`dpra`]: drift-plus-penalty objective and the per-slot BCD step.
//! - [`bounds`]: Lyapunov drift audit and the latency lower bound.
//! - [`baselines`]: fixed-partition and fixed-difficulty comparison policies.
//! - [`config`], [`harness`], [`trace`]: experiment plumbing.
//! - [`stats`], [`validate`]: statistical checks and solver oracles.

pub mod baselines;
pub mod bounds;
pub mod config;
pub mod consensus;
pub mod dpra;
pub mod env;
pub mod error;
pub mod harness;
pub mod profile;
pub mod queues;
pub mod rng;
pub mod solver;
pub mod stats;
pub mod trace;
pub mod validate;

pub use error::{Result, SimError};
