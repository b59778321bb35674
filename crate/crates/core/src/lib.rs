//! Cooperative multi-agent navigation on a 2-D particle world, learned with
//! PPO over a graph-attention encoder.
//!
//! Module map:
//! - [`world`]: the particle environment (dynamics, rewards, collisions).
//! - [`obsgraph`]: observation encodings — flat vectors and per-agent
//!   agent-entity graphs, plus graph batching.
//! - [`tensor`]: reverse-mode autodiff over dense f64 arrays, initializers,
//!   Adam, and a finite-difference gradient checker.
//! - [`gnn`]: the graph-transformer encoder producing per-agent aggregates.
//! - [`marl`]: policies (graph and flat), rollout storage, advantage
//!   estimation, running normalizers, and the PPO update.
//! - [`harness`]: training loop, greedy evaluation, and the comparison
//!   experiments (radius sweep, observation modes, critic ablation, transfer).
//! - [`config`] / [`checkpoint`] / [`cli`]: run configuration, binary
//!   parameter persistence, and the command-line front end.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod gnn;
pub mod harness;
pub mod marl;
pub mod obsgraph;
pub mod rng;
pub mod tensor;
pub mod world;
