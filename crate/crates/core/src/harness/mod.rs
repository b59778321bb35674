//! Training, evaluation, and experiment orchestration.
//!
//! The training loop alternates parallel rollout collection with clipped
//! policy updates, evaluates greedily at fixed step intervals, and
//! snapshots the best and final parameters. Experiments wrap that loop
//! across seeds and paired variants; all of it is deterministic given the
//! configuration, the seed list, and the worker count.

pub mod collect;
pub mod eval;
pub mod experiments;
pub mod output;
pub mod pool;
pub mod train;

pub use collect::{act_batch, collect_rollout, episode_seed, make_workers, EnvSlot, Worker};
pub use eval::{
    evaluate, evaluate_traced, random_baseline, transfer_row, EpisodeOutcome, EvalReport,
    TrajectoryStep, TransferRow,
};
pub use experiments::{
    aggregate_curves, critic_ablation, graph_policy_from_checkpoint, info_mode_comparison,
    radius_sweep, summarize_variant, train_configured, transfer_table, AggregatePoint, Variant,
    VariantSummary,
};
pub use pool::WorkerPool;
pub use train::{
    final_window_mean, train_one_seed, CurveRow, SeedRun, TrainHalt, FINAL_EVAL_EPISODES,
    FINAL_EVAL_POINT, FINAL_WINDOW_POINTS,
};
