//! Parallel rollout collection.
//!
//! Environments are split into contiguous slices, one per worker. Each
//! worker owns its environments end to end — observe, act, step, reset —
//! and draws actions from its own generator stream, so workers never
//! contend. The merged buffer is ordered by environment index.

use rand_chacha::ChaCha8Rng;

use super::pool::{partition, WorkerPool};
use crate::marl::policy::sample_rows;
use crate::marl::{ActResult, PolicyModel, RolloutBuffer, Transition};
use crate::rng::{mix, stream_rng, STREAM_ACTION, STREAM_WORLD};
use crate::world::{self, WorldConfig, WorldState};

/// Seed for environment `env`'s `episode`-th episode of a run. Nested so
/// every (environment, episode) pair gets an independent world stream.
pub fn episode_seed(run_seed: u64, env: u64, episode: u64) -> u64 {
    mix(mix(run_seed, STREAM_WORLD, env), STREAM_WORLD, episode)
}

/// One persistent parallel environment.
pub struct EnvSlot {
    pub env_index: u64,
    pub state: WorldState,
    /// Episodes begun so far (the next reset uses this as its index).
    pub episodes_started: u64,
}

impl EnvSlot {
    pub fn new(world: &WorldConfig, run_seed: u64, env_index: u64) -> Self {
        let state = world::reset(world, episode_seed(run_seed, env_index, 0))
            .expect("environment reset failed");
        EnvSlot { env_index, state, episodes_started: 1 }
    }

    fn reset(&mut self, world: &WorldConfig, run_seed: u64) {
        self.state =
            world::reset(world, episode_seed(run_seed, self.env_index, self.episodes_started))
                .expect("environment reset failed");
        self.episodes_started += 1;
    }
}

/// A rollout worker: a slice of environments plus a private action stream.
pub struct Worker {
    pub envs: Vec<EnvSlot>,
    pub rng: ChaCha8Rng,
}

/// Build workers owning contiguous slices of `n_envs` environments.
/// Worker `w` samples actions from the stream keyed by `(run_seed, w)`.
pub fn make_workers(
    world: &WorldConfig,
    run_seed: u64,
    n_envs: usize,
    n_workers: usize,
) -> Vec<Worker> {
    partition(n_envs, n_workers)
        .into_iter()
        .enumerate()
        .map(|(w, range)| Worker {
            envs: range.map(|e| EnvSlot::new(world, run_seed, e as u64)).collect(),
            rng: stream_rng(run_seed, STREAM_ACTION, w as u64),
        })
        .collect()
}

/// Sample a team action per state from one batched forward pass. Draws are
/// consumed state-major, matching a sequence of single-state `act` calls
/// on the same generator.
pub fn act_batch<P: PolicyModel + ?Sized>(
    policy: &P,
    obs: &[P::Obs],
    rng: &mut ChaCha8Rng,
) -> Vec<ActResult> {
    let n = policy.n_agents();
    let (logits, values) = policy.logits_values_batch(obs);
    (0..obs.len())
        .map(|b| {
            let block = logits.slice(ndarray::s![b * n..(b + 1) * n, ..]).to_owned();
            let (actions, log_probs) = sample_rows(&block, rng);
            ActResult { actions, log_probs, value: values[b] }
        })
        .collect()
}

/// One worker's share of a rollout: transitions `[t][local env]` plus the
/// bootstrap value of each environment's state after the last step.
fn worker_rollout<P: PolicyModel>(
    policy: &P,
    world: &WorldConfig,
    run_seed: u64,
    steps: usize,
    worker: &mut Worker,
) -> (Vec<Vec<Transition<P::Obs>>>, Vec<f64>) {
    let mut rows = Vec::with_capacity(steps);
    for _ in 0..steps {
        let obs: Vec<P::Obs> = worker.envs.iter().map(|s| policy.observe(&s.state)).collect();
        let hashes: Vec<u64> = worker.envs.iter().map(|s| world::state_hash(&s.state)).collect();
        let acts = act_batch(policy, &obs, &mut worker.rng);

        let mut row = Vec::with_capacity(worker.envs.len());
        let mut done_local = Vec::new();
        for (k, (slot, (ob, act))) in
            worker.envs.iter_mut().zip(obs.into_iter().zip(acts)).enumerate()
        {
            let res = world::step(world, &mut slot.state, &act.actions);
            if res.done {
                done_local.push(k);
            }
            row.push(Transition {
                obs: ob,
                actions: act.actions,
                log_probs: act.log_probs,
                value: act.value,
                reward: res.joint_reward,
                done: res.done,
                terminal_value: None,
                state_hash: hashes[k],
            });
        }

        // Episodes end by time limit, so the final state still has value:
        // record it for bootstrapping, then start the next episode.
        if !done_local.is_empty() {
            let term_obs: Vec<P::Obs> = done_local
                .iter()
                .map(|&k| policy.observe(&worker.envs[k].state))
                .collect();
            let term_values = policy.values_batch(&term_obs);
            for (j, &k) in done_local.iter().enumerate() {
                row[k].terminal_value = Some(term_values[j]);
                worker.envs[k].reset(world, run_seed);
            }
        }
        rows.push(row);
    }

    let tail_obs: Vec<P::Obs> = worker.envs.iter().map(|s| policy.observe(&s.state)).collect();
    let final_values = policy.values_batch(&tail_obs);
    (rows, final_values)
}

/// Collect a fixed-length rollout across every worker's environments,
/// merged into one buffer ordered by environment index.
pub fn collect_rollout<P>(
    policy: &P,
    world: &WorldConfig,
    pool: &WorkerPool,
    workers: &mut [Worker],
    run_seed: u64,
    buffer_len: usize,
) -> RolloutBuffer<P::Obs>
where
    P: PolicyModel + Sync,
    P::Obs: Send,
{
    assert!(buffer_len > 0);
    let n_envs: usize = workers.iter().map(|w| w.envs.len()).sum();
    let parts =
        pool.run(workers, |_, w| worker_rollout(policy, world, run_seed, buffer_len, w));

    let mut buffer = RolloutBuffer::new(n_envs, policy.n_agents());
    let mut step_iters: Vec<_> = Vec::with_capacity(parts.len());
    for (rows, final_values) in parts {
        step_iters.push(rows.into_iter());
        buffer.final_values.extend(final_values);
    }
    for _ in 0..buffer_len {
        let mut merged = Vec::with_capacity(n_envs);
        for it in &mut step_iters {
            merged.extend(it.next().expect("worker produced every step"));
        }
        buffer.push_step(merged);
    }
    buffer
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marl::{CriticMode, GraphPolicy};
    use crate::world::{ObstacleCount, WorldConfig};

    fn world() -> WorldConfig {
        WorldConfig { n_agents: 2, n_obstacles: ObstacleCount::Fixed(2), ..WorldConfig::default() }
    }

    #[test]
    fn rollout_shape_and_episode_boundaries() {
        let world = world();
        let policy = GraphPolicy::new(2, 1.0, CriticMode::Pooled, 0);
        let pool = WorkerPool::with_workers(1);
        let mut workers = make_workers(&world, 7, 3, 1);
        // Two buffers of 25 against a 25-step horizon: every episode ends
        // exactly at the last step of each buffer.
        for _ in 0..2 {
            let buffer = collect_rollout(&policy, &world, &pool, &mut workers, 7, 25);
            assert_eq!(buffer.n_steps(), 25);
            assert_eq!(buffer.n_envs, 3);
            assert_eq!(buffer.final_values.len(), 3);
            for (t, row) in buffer.steps.iter().enumerate() {
                for tr in row {
                    assert_eq!(tr.done, t == 24);
                    assert_eq!(tr.done, tr.terminal_value.is_some());
                }
            }
        }
        // Each env has begun its third episode after two full buffers.
        for slot in &workers[0].envs {
            assert_eq!(slot.episodes_started, 3);
            assert_eq!(slot.state.step_index, 0);
        }
    }

    #[test]
    fn act_batch_matches_sequential_single_acts() {
        let world = world();
        let policy = GraphPolicy::new(2, 1.0, CriticMode::Pooled, 0);
        let obs: Vec<_> = (0..4)
            .map(|k| policy.observe(&crate::world::reset(&world, 50 + k).unwrap()))
            .collect();

        let mut rng_batch = stream_rng(9, STREAM_ACTION, 0);
        let batched = act_batch(&policy, &obs, &mut rng_batch);

        let mut rng_seq = stream_rng(9, STREAM_ACTION, 0);
        for (b, ob) in obs.iter().enumerate() {
            let single = policy.act(ob, &mut rng_seq);
            assert_eq!(batched[b].actions, single.actions);
            for (x, y) in batched[b].log_probs.iter().zip(&single.log_probs) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            assert_eq!(batched[b].value.to_bits(), single.value.to_bits());
        }
    }

    #[test]
    fn identical_seeds_reproduce_identical_rollouts() {
        let world = world();
        let policy = GraphPolicy::new(2, 1.0, CriticMode::Pooled, 0);
        let pool = WorkerPool::with_workers(1);
        let run = |seed: u64| {
            let mut workers = make_workers(&world, seed, 2, 1);
            let buffer = collect_rollout(&policy, &world, &pool, &mut workers, seed, 25);
            buffer
                .steps
                .iter()
                .flat_map(|row| row.iter())
                .map(|tr| (tr.state_hash, tr.actions.clone(), tr.reward.to_bits()))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn episode_seeds_are_distinct_across_envs_and_episodes() {
        let mut seen = std::collections::HashSet::new();
        for env in 0..8 {
            for ep in 0..8 {
                assert!(seen.insert(episode_seed(0, env, ep)), "seed collision");
            }
        }
    }
}
