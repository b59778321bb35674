//! Multi-seed experiment orchestration: configured training plus the four
//! comparisons (cross-team transfer, sensing-radius sweep, information
//! modes, critic ablation).
//!
//! Every function here is deterministic given its configuration; variants
//! within a comparison share the seed list so curves are paired.

use serde::{Deserialize, Serialize};

use super::eval::{transfer_row, TransferRow};
use super::train::{final_window_mean, train_one_seed, CurveRow, SeedRun, TrainHalt};
use crate::checkpoint::{apply_params, Checkpoint, CheckpointError};
use crate::config::{ObsMode, TrainConfig};
use crate::marl::{CriticMode, FlatPolicy, GraphPolicy};
use crate::rng::{mix, STREAM_EVAL};
use crate::world::{ObstacleCount, WorldConfig};

/// Entity count of a world (agents + goals + the obstacle maximum) — the
/// width anchor for width-bound flat observations.
pub fn max_entities(world: &WorldConfig) -> usize {
    2 * world.n_agents + world.n_obstacles.max()
}

/// Build the graph policy a config describes (config must be graph mode).
pub fn build_graph_policy(cfg: &TrainConfig, seed: u64) -> GraphPolicy {
    assert!(matches!(cfg.graph.mode, ObsMode::Graph), "config selects a flat policy");
    GraphPolicy::new(cfg.world.n_agents, cfg.graph.rho, cfg.graph.critic, seed)
}

/// Build the flat policy a config describes (config must not be graph
/// mode).
pub fn build_flat_policy(cfg: &TrainConfig, seed: u64) -> FlatPolicy {
    let mode = cfg.info_mode().expect("config selects the graph policy");
    FlatPolicy::new(cfg.world.n_agents, mode, max_entities(&cfg.world), seed)
}

/// Train every configured seed with the policy family the config selects.
pub fn train_configured(
    cfg: &TrainConfig,
    on_row: &mut dyn FnMut(&CurveRow),
) -> Result<Vec<SeedRun>, Box<TrainHalt>> {
    let mut runs = Vec::with_capacity(cfg.run.seeds.len());
    for &seed in &cfg.run.seeds {
        runs.push(match cfg.graph.mode {
            ObsMode::Graph => train_one_seed(cfg, seed, build_graph_policy(cfg, seed), on_row)?,
            _ => train_one_seed(cfg, seed, build_flat_policy(cfg, seed), on_row)?,
        });
    }
    Ok(runs)
}

/// Cross-seed aggregate of aligned learning curves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregatePoint {
    pub env_steps: u64,
    /// Mean across seeds of the per-seed mean episode reward.
    pub mean_episode_reward: f64,
    /// Population standard deviation across seeds.
    pub std_episode_reward: f64,
}

pub fn aggregate_curves(runs: &[SeedRun]) -> Vec<AggregatePoint> {
    assert!(!runs.is_empty());
    let n_points = runs[0].rows.len();
    for run in runs {
        assert_eq!(run.rows.len(), n_points, "seed curves misaligned");
    }
    (0..n_points)
        .map(|p| {
            let steps = runs[0].rows[p].env_steps;
            for run in runs {
                assert_eq!(run.rows[p].env_steps, steps, "seed curves misaligned");
            }
            let rewards: Vec<f64> =
                runs.iter().map(|r| r.rows[p].mean_episode_reward).collect();
            let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
            let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>()
                / rewards.len() as f64;
            AggregatePoint {
                env_steps: steps,
                mean_episode_reward: mean,
                std_episode_reward: var.sqrt(),
            }
        })
        .collect()
}

/// One arm of a comparison: a labeled config plus its trained seeds.
pub struct Variant {
    pub label: String,
    pub config: TrainConfig,
    pub runs: Vec<SeedRun>,
    /// Learnable scalar count of this variant's model.
    pub param_count: usize,
}

/// Cross-seed summary of a variant, for comparison reports.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VariantSummary {
    pub label: String,
    pub param_count: usize,
    /// Per-seed final-window mean episode rewards, in seed order.
    pub final_window_per_seed: Vec<f64>,
    pub final_window_mean: f64,
    /// Population standard deviation of the per-seed final windows.
    pub final_window_std: f64,
}

pub fn summarize_variant(v: &Variant) -> VariantSummary {
    let per_seed: Vec<f64> = v.runs.iter().map(|r| final_window_mean(&r.rows)).collect();
    let mean = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
    let var = per_seed.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / per_seed.len() as f64;
    VariantSummary {
        label: v.label.clone(),
        param_count: v.param_count,
        final_window_per_seed: per_seed,
        final_window_mean: mean,
        final_window_std: var.sqrt(),
    }
}

fn run_variant(
    label: String,
    cfg: TrainConfig,
    on_row: &mut dyn FnMut(&str, &CurveRow),
) -> Result<Variant, Box<TrainHalt>> {
    let param_count = match cfg.graph.mode {
        ObsMode::Graph => build_graph_policy(&cfg, 0).store.n_scalars(),
        _ => build_flat_policy(&cfg, 0).store.n_scalars(),
    };
    let mut rows = |row: &CurveRow| on_row(&label, row);
    let runs = train_configured(&cfg, &mut rows)?;
    Ok(Variant { label, config: cfg, runs, param_count })
}

/// Train one variant per sensing radius, seeds shared across variants.
pub fn radius_sweep(
    base: &TrainConfig,
    rhos: &[f64],
    on_row: &mut dyn FnMut(&str, &CurveRow),
) -> Result<Vec<Variant>, Box<TrainHalt>> {
    assert!(!rhos.is_empty() && rhos.iter().all(|&r| r > 0.0));
    rhos.iter()
        .map(|&rho| {
            let mut cfg = base.clone();
            cfg.graph.mode = ObsMode::Graph;
            cfg.graph.rho = rho;
            run_variant(format!("rho_{rho}"), cfg, on_row)
        })
        .collect()
}

/// Train one flat-policy variant per information mode.
pub fn info_mode_comparison(
    base: &TrainConfig,
    modes: &[ObsMode],
    on_row: &mut dyn FnMut(&str, &CurveRow),
) -> Result<Vec<Variant>, Box<TrainHalt>> {
    assert!(!modes.is_empty());
    modes
        .iter()
        .map(|&mode| {
            assert!(!matches!(mode, ObsMode::Graph), "information modes are flat policies");
            let mut cfg = base.clone();
            cfg.graph.mode = mode;
            let label = match mode {
                ObsMode::Local => "local",
                ObsMode::Global => "global",
                ObsMode::Neighborhood => "nbd",
                ObsMode::Graph => unreachable!(),
            };
            run_variant(label.to_string(), cfg, on_row)
        })
        .collect()
}

/// Train the paired critic variants (team-pooled vs width-bound
/// concatenation) on shared seeds.
pub fn critic_ablation(
    base: &TrainConfig,
    on_row: &mut dyn FnMut(&str, &CurveRow),
) -> Result<Vec<Variant>, Box<TrainHalt>> {
    [(CriticMode::Pooled, "critic_pooled"), (CriticMode::Concat, "critic_concat")]
        .into_iter()
        .map(|(critic, label)| {
            let mut cfg = base.clone();
            cfg.graph.mode = ObsMode::Graph;
            cfg.graph.critic = critic;
            run_variant(label.to_string(), cfg, on_row)
        })
        .collect()
}

/// Rebuild the graph policy a checkpoint describes, resized to `m` agents.
pub fn graph_policy_from_checkpoint(
    ck: &Checkpoint,
    m: usize,
) -> Result<GraphPolicy, CheckpointError> {
    if !matches!(ck.config.graph.mode, ObsMode::Graph) {
        return Err(CheckpointError::Corrupt {
            field: "config",
            reason: "flat-observation checkpoints are width-bound; transfer needs the graph policy"
                .into(),
        });
    }
    let trained_n = ck.config.world.n_agents;
    if m != trained_n && ck.config.graph.critic != CriticMode::Pooled {
        return Err(CheckpointError::Corrupt {
            field: "config",
            reason: format!(
                "width-bound critic was trained for {trained_n} agents; cannot resize to {m}"
            ),
        });
    }
    let mut policy = GraphPolicy::new(trained_n, ck.config.graph.rho, ck.config.graph.critic, 0);
    apply_params(&mut policy.store, &ck.params)?;
    Ok(if m == trained_n { policy } else { policy.with_team_size(m) })
}

/// Evaluate a trained checkpoint across team sizes `ms`, each on worlds
/// with an obstacle count drawn fresh per episode from `0..=10`.
pub fn transfer_table(
    ck: &Checkpoint,
    ms: &[usize],
    episodes: usize,
    eval_seed: u64,
) -> Result<Vec<TransferRow>, CheckpointError> {
    ms.iter()
        .map(|&m| {
            let policy = graph_policy_from_checkpoint(ck, m)?;
            let world = WorldConfig {
                n_agents: m,
                n_obstacles: ObstacleCount::Range { min: 0, max: 10 },
                ..ck.config.world.clone()
            };
            Ok(transfer_row(&policy, &world, episodes, mix(eval_seed, STREAM_EVAL, m as u64)))
        })
        .collect()
}
