//! Deterministic greedy evaluation, the random-policy floor, and
//! cross-team-size transfer tables.
//!
//! All evaluation is sequential and fully determined by `(parameters,
//! seed)`: worlds are drawn from a dedicated stream and greedy action
//! selection needs no randomness.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::marl::PolicyModel;
use crate::rng::{mix, stream_rng, STREAM_EVAL};
use crate::world::{self, WorldConfig};

/// Aggregate metrics over a set of evaluation episodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean total episode reward (joint reward summed over the episode).
    pub mean_episode_reward: f64,
    /// Mean fraction of the episode needed to reach the goal, in `(0, 1]`
    /// (an agent that never arrives scores 1).
    pub mean_t: f64,
    /// Mean number of collision penalties incurred per episode.
    pub mean_collisions: f64,
    /// Percentage of episodes in which every agent reached its goal.
    pub success_pct: f64,
    pub episodes: usize,
}

/// Raw per-episode statistics (the aggregates above are exact functions of
/// these).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub total_reward: f64,
    pub mean_t: f64,
    pub collisions: usize,
    pub success: bool,
}

/// Per-step record for trajectory dumps: enough to recompute every
/// reported metric offline.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub positions: Vec<[f64; 2]>,
    pub velocities: Vec<[f64; 2]>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
}

/// How one episode's actions are chosen.
enum Actor<'a, P: PolicyModel + ?Sized> {
    Greedy(&'a P),
    /// Uniform over the action set, from the supplied stream.
    Random { n_agents: usize, rng: &'a mut ChaCha8Rng },
}

fn run_episode<P: PolicyModel + ?Sized>(
    world: &WorldConfig,
    world_seed: u64,
    actor: &mut Actor<'_, P>,
    mut trace: Option<&mut Vec<TrajectoryStep>>,
) -> EpisodeOutcome {
    let mut state = world::reset(world, world_seed).expect("evaluation reset failed");
    let n = state.n_agents();
    let mut first_reach: Vec<Option<usize>> = vec![None; n];
    let mut total_reward = 0.0;
    let mut collisions = 0usize;
    loop {
        let actions = match actor {
            Actor::Greedy(policy) => {
                let obs = policy.observe(&state);
                policy.greedy_actions(&obs)
            }
            Actor::Random { n_agents, rng } => {
                (0..*n_agents).map(|_| rng.random_range(0..world::N_ACTIONS)).collect()
            }
        };
        let res = world::step(world, &mut state, &actions);
        total_reward += res.joint_reward;
        collisions += res.collisions_this_step;
        for i in 0..n {
            if first_reach[i].is_none() && state.reached_goal[i] {
                // `step_index` is already advanced: this is the 1-based
                // count of steps taken when the agent arrived.
                first_reach[i] = Some(state.step_index);
            }
        }
        if let Some(trace) = trace.as_deref_mut() {
            trace.push(TrajectoryStep {
                positions: state.positions.clone(),
                velocities: state.velocities.clone(),
                actions,
                rewards: res.per_agent_reward,
            });
        }
        if res.done {
            break;
        }
    }
    let horizon = world.episode_length as f64;
    let mean_t = first_reach
        .iter()
        .map(|r| r.map_or(1.0, |s| s as f64 / horizon))
        .sum::<f64>()
        / n as f64;
    EpisodeOutcome {
        total_reward,
        mean_t,
        collisions,
        success: state.reached_goal.iter().all(|&r| r),
    }
}

/// World seed for episode `episode` of the evaluation keyed by `eval_seed`.
pub fn eval_world_seed(eval_seed: u64, episode: u64) -> u64 {
    mix(eval_seed, STREAM_EVAL, episode)
}

fn aggregate(outcomes: &[EpisodeOutcome]) -> EvalReport {
    let n = outcomes.len() as f64;
    EvalReport {
        mean_episode_reward: outcomes.iter().map(|o| o.total_reward).sum::<f64>() / n,
        mean_t: outcomes.iter().map(|o| o.mean_t).sum::<f64>() / n,
        mean_collisions: outcomes.iter().map(|o| o.collisions as f64).sum::<f64>() / n,
        success_pct: 100.0 * outcomes.iter().filter(|o| o.success).count() as f64 / n,
        episodes: outcomes.len(),
    }
}

/// Evaluate a policy with greedy action selection over fresh worlds.
pub fn evaluate<P: PolicyModel + ?Sized>(
    policy: &P,
    world: &WorldConfig,
    episodes: usize,
    eval_seed: u64,
) -> (EvalReport, Vec<EpisodeOutcome>) {
    assert!(episodes > 0);
    let outcomes: Vec<EpisodeOutcome> = (0..episodes)
        .map(|ep| {
            run_episode(
                world,
                eval_world_seed(eval_seed, ep as u64),
                &mut Actor::Greedy(policy),
                None,
            )
        })
        .collect();
    (aggregate(&outcomes), outcomes)
}

/// Like [`evaluate`], also recording every step of every episode.
pub fn evaluate_traced<P: PolicyModel + ?Sized>(
    policy: &P,
    world: &WorldConfig,
    episodes: usize,
    eval_seed: u64,
) -> (EvalReport, Vec<EpisodeOutcome>, Vec<Vec<TrajectoryStep>>) {
    assert!(episodes > 0);
    let mut outcomes = Vec::with_capacity(episodes);
    let mut traces = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let mut trace = Vec::with_capacity(world.episode_length);
        outcomes.push(run_episode(
            world,
            eval_world_seed(eval_seed, ep as u64),
            &mut Actor::Greedy(policy),
            Some(&mut trace),
        ));
        traces.push(trace);
    }
    (aggregate(&outcomes), outcomes, traces)
}

/// Uniform-random policy on the same worlds: the floor every experiment is
/// reported against. Action draws come from a sub-stream of `eval_seed`.
pub fn random_baseline(world: &WorldConfig, episodes: usize, eval_seed: u64) -> EvalReport {
    assert!(episodes > 0);
    let mut rng = stream_rng(eval_seed, STREAM_EVAL, u64::MAX);
    let outcomes: Vec<EpisodeOutcome> = (0..episodes)
        .map(|ep| {
            run_episode::<crate::marl::GraphPolicy>(
                world,
                eval_world_seed(eval_seed, ep as u64),
                &mut Actor::Random { n_agents: world.n_agents, rng: &mut rng },
                None,
            )
        })
        .collect();
    aggregate(&outcomes)
}

/// One row of a transfer table: a policy trained on `n` agents evaluated
/// on `m`-agent worlds, with reward and collisions normalized per agent so
/// team sizes are comparable.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransferRow {
    pub m: usize,
    pub reward_per_agent: f64,
    pub mean_t: f64,
    pub collisions_per_agent: f64,
    pub success_pct: f64,
    pub episodes: usize,
}

/// Evaluate on `m`-agent worlds and normalize the team-sized metrics.
pub fn transfer_row<P: PolicyModel + ?Sized>(
    policy: &P,
    world_for_m: &WorldConfig,
    episodes: usize,
    eval_seed: u64,
) -> TransferRow {
    let m = world_for_m.n_agents;
    assert_eq!(policy.n_agents(), m, "policy team size must match the test world");
    let (report, _) = evaluate(policy, world_for_m, episodes, eval_seed);
    TransferRow {
        m,
        reward_per_agent: report.mean_episode_reward / m as f64,
        mean_t: report.mean_t,
        collisions_per_agent: report.mean_collisions / m as f64,
        success_pct: report.success_pct,
        episodes: report.episodes,
    }
}

/// Sanity bounds every report must satisfy.
pub fn check_report(report: &EvalReport) {
    assert!(report.mean_t > 0.0 && report.mean_t <= 1.0, "T out of range: {}", report.mean_t);
    assert!(
        (0.0..=100.0).contains(&report.success_pct),
        "success percentage out of range: {}",
        report.success_pct
    );
    assert!(report.mean_collisions >= 0.0);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marl::{CriticMode, GraphPolicy};
    use crate::world::ObstacleCount;

    fn world() -> WorldConfig {
        WorldConfig { n_agents: 3, n_obstacles: ObstacleCount::Fixed(3), ..WorldConfig::default() }
    }

    #[test]
    fn greedy_evaluation_is_deterministic() {
        let world = world();
        let policy = GraphPolicy::new(3, 1.0, CriticMode::Pooled, 0);
        let (r1, o1) = evaluate(&policy, &world, 5, 11);
        let (r2, o2) = evaluate(&policy, &world, 5, 11);
        assert_eq!(r1, r2);
        assert_eq!(o1, o2);
        let (r3, _) = evaluate(&policy, &world, 5, 12);
        assert_ne!(r1, r3, "different seeds draw different worlds");
        check_report(&r1);
    }

    #[test]
    fn random_baseline_mostly_fails_and_t_is_high() {
        let report = random_baseline(&world(), 40, 0);
        check_report(&report);
        assert!(report.success_pct <= 10.0, "random success {}", report.success_pct);
        assert!(report.mean_t > 0.8, "random T {}", report.mean_t);
        assert!(report.mean_episode_reward < 0.0);
    }

    #[test]
    fn untrained_policy_scores_near_the_random_floor() {
        let world = world();
        let policy = GraphPolicy::new(3, 1.0, CriticMode::Pooled, 3);
        let (report, _) = evaluate(&policy, &world, 20, 5);
        // The near-zero-logit initial policy is uniform-ish: no success.
        assert!(report.success_pct <= 15.0);
    }

    #[test]
    fn aggregates_are_exact_functions_of_outcomes() {
        let outcomes = vec![
            EpisodeOutcome { total_reward: -10.0, mean_t: 0.5, collisions: 2, success: true },
            EpisodeOutcome { total_reward: -30.0, mean_t: 1.0, collisions: 0, success: false },
        ];
        let r = aggregate(&outcomes);
        assert_eq!(r.mean_episode_reward, -20.0);
        assert_eq!(r.mean_t, 0.75);
        assert_eq!(r.mean_collisions, 1.0);
        assert_eq!(r.success_pct, 50.0);
        assert_eq!(r.episodes, 2);
    }

    #[test]
    fn traces_recompute_the_reported_reward() {
        let world = world();
        let policy = GraphPolicy::new(3, 1.0, CriticMode::Pooled, 1);
        let (report, outcomes, traces) = evaluate_traced(&policy, &world, 3, 2);
        assert_eq!(traces.len(), 3);
        for (outcome, trace) in outcomes.iter().zip(&traces) {
            assert_eq!(trace.len(), world.episode_length);
            let replayed: f64 =
                trace.iter().map(|s| s.rewards.iter().sum::<f64>()).sum();
            assert!((replayed - outcome.total_reward).abs() < 1e-12);
        }
        check_report(&report);
    }

    #[test]
    fn transfer_row_normalizes_per_agent() {
        let world = world();
        let policy = GraphPolicy::new(3, 1.0, CriticMode::Pooled, 0);
        let row = transfer_row(&policy, &world, 4, 3);
        let (report, _) = evaluate(&policy, &world, 4, 3);
        assert!((row.reward_per_agent - report.mean_episode_reward / 3.0).abs() < 1e-12);
        assert!((row.collisions_per_agent - report.mean_collisions / 3.0).abs() < 1e-12);
        assert_eq!(row.m, 3);
    }
}
