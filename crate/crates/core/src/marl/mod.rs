//! Multi-agent actor-critic training: policy abstractions, rollout storage,
//! generalized advantage estimation, running normalizers, and the clipped
//! proximal-policy update.
//!
//! All agents share one set of parameters (one actor, one critic); the
//! per-agent view comes entirely from the observation. Two policy families
//! implement the same [`PolicyModel`] interface: the graph policy (encoder +
//! heads) and the flat-observation policy used by the information-mode
//! baselines. The trainer in the harness is generic over the family.

pub mod buffer;
pub mod gae;
pub mod mlp;
pub mod norm;
pub mod policy;
pub mod ppo;

pub use buffer::{prepare_batch, RolloutBuffer, TrainBatch, Transition};
pub use gae::compute_gae;
pub use mlp::Mlp;
pub use norm::RunningNorm;
pub use policy::{CriticMode, FlatPolicy, GraphObs, GraphPolicy};
pub use ppo::{ppo_update, PpoConfig, TrainError, UpdateStats};

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::params::{BoundParams, ParamStore};
use crate::tensor::{Tape, Tensor};
use crate::world::WorldState;

/// Result of one stochastic action selection for a full team.
#[derive(Clone, Debug)]
pub struct ActResult {
    pub actions: Vec<usize>,
    /// Log-probability of each chosen action under the current policy.
    pub log_probs: Vec<f64>,
    /// Critic output for the state (in the critic's own, possibly
    /// normalized, scale — the trainer denormalizes).
    pub value: f64,
}

/// Training-forward outputs for a batch of `B` states × `N` agents, all
/// recorded on the caller's tape. Agent-sample rows are state-major:
/// row `b·N + i` is agent `i` of state `b`.
pub struct EvalBatch {
    /// Log-probability of each stored action, `(B·N,)`.
    pub chosen_logp: Tensor,
    /// Per-agent-sample policy entropy, `(B·N,)`.
    pub entropy: Tensor,
    /// Critic outputs, `(B, 1)`.
    pub values: Tensor,
}

/// A policy family: how to observe a state, act on it, and re-evaluate
/// stored observations differentiably during the update.
pub trait PolicyModel {
    /// Everything the policy needs to recompute its forward pass for one
    /// state later (observations are stored in the rollout buffer).
    type Obs: Clone;

    fn n_agents(&self) -> usize;
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;

    fn observe(&self, state: &WorldState) -> Self::Obs;

    /// Sample one action per agent; deterministic given the generator state.
    fn act(&self, obs: &Self::Obs, rng: &mut ChaCha8Rng) -> ActResult;

    /// Argmax action per agent (ties resolve to the lowest index).
    fn greedy_actions(&self, obs: &Self::Obs) -> Vec<usize>;

    /// Critic output alone (same scale as [`ActResult::value`]).
    fn value(&self, obs: &Self::Obs) -> f64;

    /// Inference forward over many states at once: state-major actor logits
    /// `(B·N, 5)` and one critic value per state. Row `b·N + i` is agent `i`
    /// of state `b`. Bit-identical to running the single-state path per
    /// observation (rows of a matrix product do not interact).
    fn logits_values_batch(&self, obs: &[Self::Obs]) -> (Array2<f64>, Vec<f64>);

    /// Critic outputs for a batch of states.
    fn values_batch(&self, obs: &[Self::Obs]) -> Vec<f64> {
        if obs.is_empty() {
            return Vec::new();
        }
        self.logits_values_batch(obs).1
    }

    /// Differentiable re-evaluation of stored observations and actions.
    fn evaluate_batch(
        &self,
        tape: &Tape,
        params: &BoundParams,
        obs: &[Self::Obs],
        actions: &[Vec<usize>],
    ) -> EvalBatch;
}

/// Draw an index from a probability row via inverse-CDF walk.
pub fn sample_categorical(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
