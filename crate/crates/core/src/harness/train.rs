//! The per-seed training loop: collect, update, periodically evaluate,
//! and snapshot the best and final parameters.

use serde::{Deserialize, Serialize};

use super::collect::{collect_rollout, make_workers};
use super::eval::{evaluate, EvalReport};
use super::pool::WorkerPool;
use crate::checkpoint::Checkpoint;
use crate::config::TrainConfig;
use crate::marl::{ppo_update, prepare_batch, PolicyModel, RunningNorm, TrainError, UpdateStats};
use crate::rng::{mix, STREAM_EVAL};
use crate::tensor::optim::{Adam, AdamConfig};

/// Evaluation points whose mean is "final performance" in comparisons.
pub const FINAL_WINDOW_POINTS: usize = 5;

/// Evaluation-point index reserved for the 100-episode report that closes
/// a run (periodic points use 0, 1, 2, …).
pub const FINAL_EVAL_POINT: u64 = u64::MAX;

/// Episodes in the closing report, per the headline-metric convention.
pub const FINAL_EVAL_EPISODES: usize = 100;

/// One learning-curve record: an evaluation pass at a step count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub seed: u64,
    pub env_steps: u64,
    pub mean_episode_reward: f64,
    /// Standard deviation of the episode reward across this point's
    /// evaluation episodes.
    pub std_episode_reward: f64,
    pub success_pct: f64,
    pub mean_t: f64,
    pub mean_collisions: f64,
}

/// Everything produced by one seed's training run.
pub struct SeedRun {
    pub seed: u64,
    pub rows: Vec<CurveRow>,
    /// `(env steps, statistics)` for every optimizer update.
    pub updates: Vec<(u64, UpdateStats)>,
    /// Snapshot at the evaluation point with the highest mean episode
    /// reward (ties keep the earlier point).
    pub best: Checkpoint,
    /// Snapshot at the end of training.
    pub last: Checkpoint,
    /// 100-episode greedy report for the best snapshot.
    pub best_eval: EvalReport,
    /// Same worlds, final snapshot.
    pub final_eval: EvalReport,
}

/// A non-finite loss halted training; the parameters at the failure are
/// preserved for inspection.
pub struct TrainHalt {
    pub error: TrainError,
    pub diagnostic: Checkpoint,
}

fn snapshot<P: PolicyModel + ?Sized>(
    policy: &P,
    cfg: &TrainConfig,
    seed: u64,
    env_steps: u64,
    adam: &Adam,
    reward_norm: &RunningNorm,
    value_norm: &RunningNorm,
) -> Checkpoint {
    let store = policy.store();
    let (m, v) = adam.moments();
    Checkpoint {
        config: cfg.clone(),
        seed,
        env_steps,
        params: store.names.iter().cloned().zip(store.values.iter().cloned()).collect(),
        adam: Some((adam.step_count, m.to_vec(), v.to_vec())),
        reward_norm: Some(reward_norm.clone()),
        value_norm: Some(value_norm.clone()),
    }
}

fn eval_point<P: PolicyModel + ?Sized>(
    policy: &P,
    cfg: &TrainConfig,
    seed: u64,
    point: u64,
    env_steps: u64,
) -> CurveRow {
    let (report, outcomes) =
        evaluate(policy, &cfg.world, cfg.run.eval_episodes, mix(seed, STREAM_EVAL, point));
    let mean = report.mean_episode_reward;
    let var = outcomes.iter().map(|o| (o.total_reward - mean).powi(2)).sum::<f64>()
        / outcomes.len() as f64;
    CurveRow {
        seed,
        env_steps,
        mean_episode_reward: mean,
        std_episode_reward: var.sqrt(),
        success_pct: report.success_pct,
        mean_t: report.mean_t,
        mean_collisions: report.mean_collisions,
    }
}

/// Train one seed to `total_steps`, reporting each curve row through
/// `on_row` as it is produced (so long runs can stream progress to disk).
pub fn train_one_seed<P>(
    cfg: &TrainConfig,
    seed: u64,
    mut policy: P,
    on_row: &mut dyn FnMut(&CurveRow),
) -> Result<SeedRun, Box<TrainHalt>>
where
    P: PolicyModel + Sync,
    P::Obs: Send + Clone,
{
    let run = &cfg.run;
    assert!(run.total_steps > 0 && !run.seeds.is_empty());
    let steps_per_iter = (run.num_envs * run.buffer_len) as u64;

    let pool = WorkerPool::new(run.num_envs);
    let mut workers = make_workers(&cfg.world, seed, run.num_envs, pool.n_workers());
    let mut adam = Adam::new(
        AdamConfig { learning_rate: cfg.ppo.learning_rate, ..AdamConfig::default() },
        &policy.store().values,
    );
    let mut reward_norm = RunningNorm::new();
    let mut value_norm = RunningNorm::new();

    let mut env_steps: u64 = 0;
    let mut rows: Vec<CurveRow> = Vec::new();
    let mut updates: Vec<(u64, UpdateStats)> = Vec::new();
    let mut best: Option<(f64, Checkpoint)> = None;
    let mut point: u64 = 0;
    // Always set by the unconditional first evaluation below.
    let mut last_eval_at: Option<u64>;

    // One evaluation pass plus best-candidate bookkeeping.
    macro_rules! run_eval {
        () => {{
            let row = eval_point(&policy, cfg, seed, point, env_steps);
            let better = best
                .as_ref()
                .is_none_or(|(best_reward, _)| row.mean_episode_reward > *best_reward);
            if better {
                best = Some((
                    row.mean_episode_reward,
                    snapshot(&policy, cfg, seed, env_steps, &adam, &reward_norm, &value_norm),
                ));
            }
            on_row(&row);
            rows.push(row);
            point += 1;
            last_eval_at = Some(env_steps);
        }};
    }

    run_eval!();
    let mut next_eval_at = run.eval_interval.max(1);

    while env_steps < run.total_steps {
        let buffer =
            collect_rollout(&policy, &cfg.world, &pool, &mut workers, seed, run.buffer_len);
        env_steps += steps_per_iter;

        // The reward normalizer absorbs this batch (step-major, then by
        // environment index) before the batch is standardized with it.
        for row in &buffer.steps {
            for tr in row {
                reward_norm.update(tr.reward);
            }
        }
        let batch =
            prepare_batch(&buffer, &cfg.ppo, Some(&reward_norm), Some(&mut value_norm));
        match ppo_update(&mut policy, &mut adam, &batch, &cfg.ppo) {
            Ok(stats) => updates.push((env_steps, stats)),
            Err(error) => {
                return Err(Box::new(TrainHalt {
                    error,
                    diagnostic: snapshot(
                        &policy,
                        cfg,
                        seed,
                        env_steps,
                        &adam,
                        &reward_norm,
                        &value_norm,
                    ),
                }));
            }
        }

        if env_steps >= next_eval_at {
            run_eval!();
            next_eval_at = (env_steps / run.eval_interval + 1) * run.eval_interval;
        }
    }
    if last_eval_at != Some(env_steps) {
        run_eval!();
    }
    let _ = (point, last_eval_at);

    let last = snapshot(&policy, cfg, seed, env_steps, &adam, &reward_norm, &value_norm);
    let (_, best_ckpt) = best.expect("at least one evaluation ran");

    // Final 100-episode reports for both snapshots, on identical worlds.
    let final_seed = mix(seed, STREAM_EVAL, FINAL_EVAL_POINT);
    let (final_eval, _) = evaluate(&policy, &cfg.world, FINAL_EVAL_EPISODES, final_seed);
    crate::checkpoint::apply_params(policy.store_mut(), &best_ckpt.params)
        .expect("own snapshot reapplies");
    let (best_eval, _) = evaluate(&policy, &cfg.world, FINAL_EVAL_EPISODES, final_seed);

    Ok(SeedRun { seed, rows, updates, best: best_ckpt, last, best_eval, final_eval })
}

/// Mean of the last [`FINAL_WINDOW_POINTS`] curve rows' episode rewards:
/// the "final performance" number used by comparisons.
pub fn final_window_mean(rows: &[CurveRow]) -> f64 {
    assert!(!rows.is_empty());
    let tail = rows.len().saturating_sub(FINAL_WINDOW_POINTS);
    let window = &rows[tail..];
    window.iter().map(|r| r.mean_episode_reward).sum::<f64>() / window.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TrainConfig;
    use crate::marl::{CriticMode, GraphPolicy};

    fn tiny_config() -> TrainConfig {
        let mut cfg = TrainConfig::default();
        cfg.world.n_agents = 1;
        cfg.world.n_obstacles = crate::world::ObstacleCount::Fixed(1);
        cfg.run.num_envs = 4;
        cfg.run.buffer_len = 25;
        cfg.run.total_steps = 200; // exactly two updates
        cfg.run.eval_interval = 100;
        cfg.run.eval_episodes = 2;
        cfg.run.seeds = vec![0];
        cfg.ppo.ppo_epochs = 2;
        cfg
    }

    #[test]
    fn step_budget_yields_exact_update_count_and_curve_rows() {
        let cfg = tiny_config();
        let policy = GraphPolicy::new(1, 1.0, CriticMode::Pooled, 0);
        let mut streamed = Vec::new();
        let run = train_one_seed(&cfg, 0, policy, &mut |row| streamed.push(row.clone()))
            .unwrap_or_else(|halt| panic!("halted: {}", halt.error));
        // 200 steps at 4×25 per iteration → exactly 2 updates.
        assert_eq!(run.updates.len(), 2);
        assert_eq!(run.updates[0].0, 100);
        assert_eq!(run.updates[1].0, 200);
        // Evaluations at 0, 100, 200 steps.
        let steps: Vec<u64> = run.rows.iter().map(|r| r.env_steps).collect();
        assert_eq!(steps, vec![0, 100, 200]);
        assert_eq!(streamed, run.rows);
        assert_eq!(run.last.env_steps, 200);
        assert!(run.best.env_steps <= 200);
        assert_eq!(run.best_eval.episodes, FINAL_EVAL_EPISODES);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let cfg = tiny_config();
        let go = || {
            let policy = GraphPolicy::new(1, 1.0, CriticMode::Pooled, 0);
            train_one_seed(&cfg, 7, policy, &mut |_| {}).ok().unwrap()
        };
        let a = go();
        let b = go();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.best.to_bytes().unwrap(), b.best.to_bytes().unwrap());
        assert_eq!(a.last.to_bytes().unwrap(), b.last.to_bytes().unwrap());
        assert_eq!(a.final_eval, b.final_eval);
    }

    #[test]
    fn snapshots_round_trip_through_bytes() {
        let cfg = tiny_config();
        let policy = GraphPolicy::new(1, 1.0, CriticMode::Pooled, 0);
        let run = train_one_seed(&cfg, 0, policy, &mut |_| {}).ok().unwrap();
        let bytes = run.last.to_bytes().unwrap();
        let re = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(re.to_bytes().unwrap(), bytes);
        assert_eq!(re.config, cfg);
        // Reapplying the snapshot reproduces the final evaluation exactly.
        let mut policy = GraphPolicy::new(1, 1.0, CriticMode::Pooled, 99);
        crate::checkpoint::apply_params(&mut policy.store, &re.params).unwrap();
        let final_seed = mix(0, STREAM_EVAL, FINAL_EVAL_POINT);
        let (report, _) =
            evaluate(&policy, &cfg.world, FINAL_EVAL_EPISODES, final_seed);
        assert_eq!(report, run.final_eval);
    }

    #[test]
    fn final_window_mean_uses_the_tail() {
        let row = |steps: u64, reward: f64| CurveRow {
            seed: 0,
            env_steps: steps,
            mean_episode_reward: reward,
            std_episode_reward: 0.0,
            success_pct: 0.0,
            mean_t: 1.0,
            mean_collisions: 0.0,
        };
        let rows: Vec<CurveRow> =
            (0..8).map(|k| row(k, if k < 3 { -100.0 } else { k as f64 })).collect();
        // Last five rewards are 3, 4, 5, 6, 7.
        assert_eq!(final_window_mean(&rows), 5.0);
        assert_eq!(final_window_mean(&rows[..2]), -100.0);
    }
}
