//! Rollout storage and its conversion into a training batch.
//!
//! The buffer records parallel-environment trajectories step-major. Batch
//! preparation walks each environment's trajectory, optionally normalizes
//! rewards, segments at episode boundaries, and runs advantage estimation
//! per segment — bootstrapping every segment end (episode terminations and
//! the buffer tail alike) from the critic's value of the state that
//! followed, so horizon cutoffs do not masquerade as zero-value states.

use super::gae::compute_gae;
use super::norm::RunningNorm;
use super::ppo::PpoConfig;

/// One environment step of one parallel environment.
#[derive(Clone, Debug)]
pub struct Transition<O> {
    pub obs: O,
    pub actions: Vec<usize>,
    /// Behavior log-probability per agent, aligned with `actions`.
    pub log_probs: Vec<f64>,
    /// Critic value of `obs` (in normalized space when value normalization
    /// is on — exactly as the critic emitted it).
    pub value: f64,
    /// Raw joint reward (never pre-normalized).
    pub reward: f64,
    pub done: bool,
    /// Critic value of the state the step produced; present exactly when
    /// `done` so the episode end can be bootstrapped.
    pub terminal_value: Option<f64>,
    /// Fingerprint of the pre-step world state (determinism audits).
    pub state_hash: u64,
}

/// Step-major storage for a fixed set of parallel environments.
#[derive(Clone, Debug)]
pub struct RolloutBuffer<O> {
    pub n_envs: usize,
    pub n_agents: usize,
    /// `steps[t][e]`: step `t` of environment `e`.
    pub steps: Vec<Vec<Transition<O>>>,
    /// Critic value of each environment's state after the last stored step
    /// (bootstrap for trajectories the buffer cut mid-episode).
    pub final_values: Vec<f64>,
}

impl<O> RolloutBuffer<O> {
    pub fn new(n_envs: usize, n_agents: usize) -> Self {
        RolloutBuffer { n_envs, n_agents, steps: Vec::new(), final_values: Vec::new() }
    }

    /// Append one step across all environments.
    pub fn push_step(&mut self, row: Vec<Transition<O>>) {
        assert_eq!(row.len(), self.n_envs, "step row covers every environment");
        for t in &row {
            assert_eq!(t.actions.len(), self.n_agents);
            assert_eq!(t.log_probs.len(), self.n_agents);
            assert_eq!(t.done, t.terminal_value.is_some(), "terminal value iff done");
        }
        self.steps.push(row);
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    /// Total environment-step count (`B`).
    pub fn n_samples(&self) -> usize {
        self.n_steps() * self.n_envs
    }
}

/// Flattened, advantage-annotated training data. Sample order is
/// environment-major: index `e·T + t`. Per-agent rows (`old_logp`) are
/// sample-major: row `b·N + i`.
#[derive(Clone, Debug)]
pub struct TrainBatch<O> {
    pub obs: Vec<O>,
    pub actions: Vec<Vec<usize>>,
    pub old_logp: Vec<f64>,
    pub advantages: Vec<f64>,
    /// Return targets for the critic (normalized when value normalization
    /// is on).
    pub value_targets: Vec<f64>,
}

/// Convert a full buffer into a training batch.
///
/// `reward_norm` standardizes rewards with its current statistics (the
/// caller keeps those statistics up to date during collection).
/// `value_norm` is the running return normalizer: stored values are mapped
/// back to raw space for advantage estimation, its statistics are then
/// updated with this batch's returns, and the critic targets are emitted in
/// the updated normalized space.
pub fn prepare_batch<O: Clone>(
    buffer: &RolloutBuffer<O>,
    cfg: &PpoConfig,
    reward_norm: Option<&RunningNorm>,
    mut value_norm: Option<&mut RunningNorm>,
) -> TrainBatch<O> {
    let t_len = buffer.n_steps();
    assert!(t_len > 0, "empty rollout buffer");
    assert_eq!(buffer.final_values.len(), buffer.n_envs, "final values recorded");
    let b = buffer.n_samples();

    let mut obs = Vec::with_capacity(b);
    let mut actions = Vec::with_capacity(b);
    let mut old_logp = Vec::with_capacity(b * buffer.n_agents);
    let mut advantages = Vec::with_capacity(b);
    let mut returns = Vec::with_capacity(b);

    let denorm = |v: f64, vn: &Option<&mut RunningNorm>| match vn {
        Some(n) => n.denormalize(v),
        None => v,
    };

    for e in 0..buffer.n_envs {
        // Per-environment reward/value traces in estimation (raw) space.
        let rewards: Vec<f64> = (0..t_len)
            .map(|t| {
                let r = buffer.steps[t][e].reward;
                match reward_norm {
                    Some(n) => n.normalize(r),
                    None => r,
                }
            })
            .collect();
        let values: Vec<f64> =
            (0..t_len).map(|t| denorm(buffer.steps[t][e].value, &value_norm)).collect();

        // Advantage estimation per episode segment, each bootstrapped from
        // the critic's view of the state that followed its last step.
        let mut start = 0;
        while start < t_len {
            let mut end = start;
            while end < t_len && !buffer.steps[end][e].done {
                end += 1;
            }
            let bootstrap = if end < t_len {
                let term = buffer.steps[end][e]
                    .terminal_value
                    .expect("done step carries a terminal value");
                denorm(term, &value_norm)
            } else {
                end = t_len - 1;
                denorm(buffer.final_values[e], &value_norm)
            };
            let seg = start..=end;
            let seg_rewards = &rewards[seg.clone()];
            let seg_values = &values[seg];
            let no_cuts = vec![false; seg_rewards.len()];
            let (adv, ret) = compute_gae(
                seg_rewards,
                seg_values,
                &no_cuts,
                bootstrap,
                cfg.gamma,
                cfg.gae_lambda,
            );
            advantages.extend(adv);
            returns.extend(ret);
            start = end + 1;
        }

        for t in 0..t_len {
            let tr = &buffer.steps[t][e];
            obs.push(tr.obs.clone());
            actions.push(tr.actions.clone());
            old_logp.extend_from_slice(&tr.log_probs);
        }
    }
    assert_eq!(advantages.len(), b);

    let value_targets = match value_norm.as_deref_mut() {
        Some(n) => {
            n.update_many(&returns);
            returns.iter().map(|&r| n.normalize(r)).collect()
        }
        None => returns,
    };

    TrainBatch { obs, actions, old_logp, advantages, value_targets }
}
