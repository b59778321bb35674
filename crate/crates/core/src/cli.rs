//! Command-line entry point: configuration resolution, subcommand
//! dispatch, and artifact writing.
//!
//! Exit codes: 0 success, 2 configuration errors (unreadable or invalid
//! config, bad overrides), 1 runtime failures (training halt, I/O,
//! incompatible checkpoints). Every training command writes a manifest
//! into its output directory before any training step; output files are
//! never silently overwritten.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::config::{ObsMode, TrainConfig};
use crate::harness::{
    aggregate_curves, eval::check_report, evaluate, evaluate_traced, graph_policy_from_checkpoint,
    output, random_baseline, summarize_variant, train_one_seed, transfer_table, CurveRow, SeedRun,
    Variant, WorkerPool, FINAL_EVAL_EPISODES,
};
#[derive(Parser, Debug)]
#[command(
    name = "swarm",
    version,
    about = "Graph-based multi-agent cooperative navigation: training, evaluation, and experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the configured policy on every configured seed.
    Train(TrainArgs),
    /// Evaluate a checkpoint greedily and report the four headline metrics.
    Eval(EvalArgs),
    /// Evaluate a checkpoint across team sizes (per-agent normalized).
    Transfer(TransferArgs),
    /// Train one variant per sensing radius and compare final windows.
    SweepRadius(SweepRadiusArgs),
    /// Train flat-observation baselines, one per information mode.
    InfoModes(InfoModesArgs),
    /// Train the paired critic variants (pooled vs concatenated input).
    AblateCritic(TrainArgs),
}

/// Options shared by every subcommand: the config file plus targeted
/// overrides.
#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// Configuration file (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replace the configured seed list with this single seed (training),
    /// or set the evaluation seed (eval/transfer).
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of agents.
    #[arg(long)]
    agents: Option<usize>,
    /// Override the sensing radius.
    #[arg(long)]
    rho: Option<f64>,
    /// Override the total environment-step budget.
    #[arg(long)]
    steps: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Checkpoint to evaluate.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Evaluation episodes.
    #[arg(long, default_value_t = FINAL_EVAL_EPISODES)]
    episodes: usize,
    /// Also write per-step trajectories (requires --out).
    #[arg(long)]
    dump_trajectories: bool,
}

#[derive(Args, Debug)]
struct TransferArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Checkpoint to evaluate.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Team sizes to test on.
    #[arg(long, value_delimiter = ',', default_values_t = [3usize, 7, 10, 15])]
    test_agents: Vec<usize>,
    /// Evaluation episodes per team size.
    #[arg(long, default_value_t = FINAL_EVAL_EPISODES)]
    episodes: usize,
}

#[derive(Args, Debug)]
struct SweepRadiusArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Sensing radii to train, one variant each.
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 1.0, 2.0])]
    rhos: Vec<f64>,
}

#[derive(Args, Debug)]
struct InfoModesArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Information modes to train (local, nbd, global).
    #[arg(long, value_delimiter = ',', default_values = ["local", "nbd", "global"])]
    modes: Vec<String>,
}

/// Failures, split by exit code.
#[derive(Debug)]
pub enum AppError {
    /// Unreadable or invalid configuration → exit 2.
    Config(String),
    /// Anything that failed at run time → exit 1.
    Runtime(String),
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::Config(m) => write!(f, "configuration error: {m}"),
            AppError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Runtime(e.to_string())
    }
}

impl From<crate::checkpoint::CheckpointError> for AppError {
    fn from(e: crate::checkpoint::CheckpointError) -> Self {
        AppError::Runtime(e.to_string())
    }
}

/// Parse the process arguments and run to completion.
pub fn run() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage and parse problems print clap's message; --help and
            // --version exit cleanly.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                AppError::Config(_) => ExitCode::from(2),
                AppError::Runtime(_) => ExitCode::from(1),
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Transfer(args) => cmd_transfer(args),
        Command::SweepRadius(args) => cmd_sweep_radius(args),
        Command::InfoModes(args) => cmd_info_modes(args),
        Command::AblateCritic(args) => cmd_ablate_critic(args),
    }
}

/// Load the config file (or defaults), apply overrides, validate.
fn resolved_config(common: &CommonArgs) -> Result<TrainConfig, AppError> {
    let mut cfg = match &common.config {
        Some(path) => TrainConfig::load(path).map_err(|e| AppError::Config(e.to_string()))?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.run.seeds = vec![seed];
    }
    if let Some(agents) = common.agents {
        cfg.world.n_agents = agents;
    }
    if let Some(rho) = common.rho {
        cfg.graph.rho = rho;
    }
    if let Some(steps) = common.steps {
        cfg.run.total_steps = steps;
    }
    if let Some(out) = &common.out {
        cfg.run.out_dir = out.display().to_string();
    }
    cfg.validate().map_err(|e| AppError::Config(e.to_string()))?;
    Ok(cfg)
}

#[derive(Serialize)]
struct RunManifest<'a> {
    /// The invocation, echoed.
    command: String,
    version: &'a str,
    started_unix_secs: u64,
    /// Effective rollout workers (part of the run's identity: it
    /// partitions the action streams).
    workers: usize,
    config: &'a TrainConfig,
    /// Artifacts this run intends to write.
    outputs: Vec<String>,
}

fn write_manifest(dir: &Path, cfg: &TrainConfig, outputs: Vec<String>) -> Result<(), AppError> {
    let manifest = RunManifest {
        command: std::env::args().collect::<Vec<_>>().join(" "),
        version: env!("CARGO_PKG_VERSION"),
        started_unix_secs: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        workers: WorkerPool::new(cfg.run.num_envs).n_workers(),
        config: cfg,
        outputs,
    };
    output::write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(())
}

/// Per-seed report file contents.
#[derive(Serialize)]
struct SeedEvalFile<'a> {
    seed: u64,
    /// Step count of the best-evaluation snapshot.
    best_env_steps: u64,
    /// 100-episode greedy report for the best snapshot.
    best: &'a crate::harness::EvalReport,
    /// Same worlds, final parameters.
    r#final: &'a crate::harness::EvalReport,
}

fn seed_artifacts(dir: &Path, run: &SeedRun) -> Result<(), AppError> {
    let k = run.seed;
    output::write_updates_csv(&dir.join(format!("updates_seed{k}.csv")), &run.updates)?;
    run.best
        .save(&dir.join(format!("checkpoint_seed{k}_best.ckpt")))
        .map_err(|e| AppError::Runtime(e.to_string()))?;
    run.last
        .save(&dir.join(format!("checkpoint_seed{k}_final.ckpt")))
        .map_err(|e| AppError::Runtime(e.to_string()))?;
    check_report(&run.best_eval);
    check_report(&run.final_eval);
    output::write_json(
        &dir.join(format!("eval_seed{k}.json")),
        &SeedEvalFile {
            seed: k,
            best_env_steps: run.best.env_steps,
            best: &run.best_eval,
            r#final: &run.final_eval,
        },
    )?;
    println!(
        "[seed {k}] done: best reward {:.2} at {} steps (success {:.0}%), final reward {:.2}",
        run.best_eval.mean_episode_reward,
        run.best.env_steps,
        run.best_eval.success_pct,
        run.final_eval.mean_episode_reward
    );
    Ok(())
}

/// Train every seed of `cfg`, streaming curve rows to per-seed CSVs in
/// `dir` and writing checkpoints and reports as each seed finishes.
fn run_and_write_seeds(cfg: &TrainConfig, dir: &Path) -> Result<Vec<SeedRun>, AppError> {
    std::fs::create_dir_all(dir)?;
    let mut runs = Vec::with_capacity(cfg.run.seeds.len());
    for &seed in &cfg.run.seeds {
        let mut csv = output::CurveCsv::create(&dir.join(format!("curve_seed{seed}.csv")))?;
        let mut io_error: Option<std::io::Error> = None;
        let mut on_row = |row: &CurveRow| {
            println!(
                "[seed {seed}] steps {:>9} reward {:8.2} success {:5.1}% T {:.2} collisions {:.2}",
                row.env_steps,
                row.mean_episode_reward,
                row.success_pct,
                row.mean_t,
                row.mean_collisions
            );
            let _ = std::io::stdout().flush();
            if let Err(e) = csv.append(row) {
                io_error = Some(e);
            }
        };
        let result = match cfg.graph.mode {
            ObsMode::Graph => train_one_seed(
                cfg,
                seed,
                crate::harness::experiments::build_graph_policy(cfg, seed),
                &mut on_row,
            ),
            _ => train_one_seed(
                cfg,
                seed,
                crate::harness::experiments::build_flat_policy(cfg, seed),
                &mut on_row,
            ),
        };
        if let Some(e) = io_error {
            return Err(e.into());
        }
        match result {
            Ok(run) => {
                seed_artifacts(dir, &run)?;
                runs.push(run);
            }
            Err(halt) => {
                let path = dir.join(format!("diagnostic_seed{seed}.ckpt"));
                halt.diagnostic.save(&path).map_err(|e| AppError::Runtime(e.to_string()))?;
                return Err(AppError::Runtime(format!(
                    "training halted ({}); diagnostic checkpoint at {}",
                    halt.error,
                    path.display()
                )));
            }
        }
    }
    output::write_aggregate_csv(&dir.join("curve_aggregate.csv"), &aggregate_curves(&runs))?;
    Ok(runs)
}

/// Measure and record the uniform-random floor for `cfg`'s world.
fn write_random_baseline(dir: &Path, cfg: &TrainConfig) -> Result<(), AppError> {
    let seed = cfg.run.seeds.first().copied().unwrap_or(0);
    let report = random_baseline(&cfg.world, FINAL_EVAL_EPISODES, seed);
    println!(
        "[random] reward {:.2} success {:.1}% T {:.2}",
        report.mean_episode_reward, report.success_pct, report.mean_t
    );
    output::write_json(&dir.join("random_baseline.json"), &report)?;
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), AppError> {
    let cfg = resolved_config(&args.common)?;
    let dir = PathBuf::from(&cfg.run.out_dir);
    std::fs::create_dir_all(&dir)?;
    let outputs: Vec<String> = std::iter::once("curve_aggregate.csv".to_string())
        .chain(std::iter::once("random_baseline.json".to_string()))
        .chain(cfg.run.seeds.iter().flat_map(|k| {
            [
                format!("curve_seed{k}.csv"),
                format!("updates_seed{k}.csv"),
                format!("checkpoint_seed{k}_best.ckpt"),
                format!("checkpoint_seed{k}_final.ckpt"),
                format!("eval_seed{k}.json"),
            ]
        }))
        .collect();
    write_manifest(&dir, &cfg, outputs)?;
    write_random_baseline(&dir, &cfg)?;
    run_and_write_seeds(&cfg, &dir)?;
    Ok(())
}

/// Train one labeled variant in its own subdirectory and summarize it.
fn run_variant_dir(
    base_dir: &Path,
    label: &str,
    cfg: TrainConfig,
) -> Result<Variant, AppError> {
    let dir = base_dir.join(label);
    let runs = run_and_write_seeds(&cfg, &dir)?;
    let param_count = match cfg.graph.mode {
        ObsMode::Graph => {
            crate::harness::experiments::build_graph_policy(&cfg, 0).store.n_scalars()
        }
        _ => crate::harness::experiments::build_flat_policy(&cfg, 0).store.n_scalars(),
    };
    Ok(Variant { label: label.to_string(), config: cfg, runs, param_count })
}

fn write_comparison_summary(dir: &Path, variants: &[Variant]) -> Result<(), AppError> {
    let summaries: Vec<_> = variants.iter().map(summarize_variant).collect();
    for s in &summaries {
        println!(
            "[{}] final-window reward {:.2} ± {:.2} ({} params)",
            s.label, s.final_window_mean, s.final_window_std, s.param_count
        );
    }
    output::write_json(&dir.join("summary.json"), &summaries)?;
    Ok(())
}

fn comparison_outputs(labels: &[String], seeds: &[u64]) -> Vec<String> {
    let mut outputs = vec!["random_baseline.json".to_string(), "summary.json".to_string()];
    for label in labels {
        outputs.push(format!("{label}/curve_aggregate.csv"));
        for k in seeds {
            outputs.push(format!("{label}/curve_seed{k}.csv"));
        }
    }
    outputs
}

fn cmd_sweep_radius(args: SweepRadiusArgs) -> Result<(), AppError> {
    if args.rhos.is_empty() || args.rhos.iter().any(|&r| !(r > 0.0)) {
        return Err(AppError::Config("sensing radii must be positive".into()));
    }
    let cfg = resolved_config(&args.common)?;
    let dir = PathBuf::from(&cfg.run.out_dir);
    std::fs::create_dir_all(&dir)?;
    let labels: Vec<String> = args.rhos.iter().map(|rho| format!("rho_{rho}")).collect();
    write_manifest(&dir, &cfg, comparison_outputs(&labels, &cfg.run.seeds))?;
    write_random_baseline(&dir, &cfg)?;
    let mut variants = Vec::new();
    for (rho, label) in args.rhos.iter().zip(&labels) {
        let mut vcfg = cfg.clone();
        vcfg.graph.mode = ObsMode::Graph;
        vcfg.graph.rho = *rho;
        vcfg.validate().map_err(|e| AppError::Config(e.to_string()))?;
        variants.push(run_variant_dir(&dir, label, vcfg)?);
    }
    write_comparison_summary(&dir, &variants)
}

fn parse_mode(name: &str) -> Result<ObsMode, AppError> {
    match name {
        "local" => Ok(ObsMode::Local),
        "global" => Ok(ObsMode::Global),
        "nbd" | "neighborhood" => Ok(ObsMode::Neighborhood),
        other => Err(AppError::Config(format!(
            "unknown information mode `{other}` (expected local, nbd, or global)"
        ))),
    }
}

fn cmd_info_modes(args: InfoModesArgs) -> Result<(), AppError> {
    let cfg = resolved_config(&args.common)?;
    let modes: Vec<(String, ObsMode)> = args
        .modes
        .iter()
        .map(|name| parse_mode(name).map(|m| (name.clone(), m)))
        .collect::<Result<_, _>>()?;
    if modes.is_empty() {
        return Err(AppError::Config("at least one information mode is required".into()));
    }
    let dir = PathBuf::from(&cfg.run.out_dir);
    std::fs::create_dir_all(&dir)?;
    let labels: Vec<String> = modes.iter().map(|(name, _)| name.clone()).collect();
    write_manifest(&dir, &cfg, comparison_outputs(&labels, &cfg.run.seeds))?;
    write_random_baseline(&dir, &cfg)?;
    let mut variants = Vec::new();
    for (name, mode) in &modes {
        let mut vcfg = cfg.clone();
        vcfg.graph.mode = *mode;
        vcfg.validate().map_err(|e| AppError::Config(e.to_string()))?;
        variants.push(run_variant_dir(&dir, name, vcfg)?);
    }
    write_comparison_summary(&dir, &variants)
}

fn cmd_ablate_critic(args: TrainArgs) -> Result<(), AppError> {
    let cfg = resolved_config(&args.common)?;
    let dir = PathBuf::from(&cfg.run.out_dir);
    std::fs::create_dir_all(&dir)?;
    let pairs = [
        ("critic_pooled", crate::marl::CriticMode::Pooled),
        ("critic_concat", crate::marl::CriticMode::Concat),
    ];
    let labels: Vec<String> = pairs.iter().map(|(l, _)| l.to_string()).collect();
    write_manifest(&dir, &cfg, comparison_outputs(&labels, &cfg.run.seeds))?;
    write_random_baseline(&dir, &cfg)?;
    let mut variants = Vec::new();
    for (label, critic) in pairs {
        let mut vcfg = cfg.clone();
        vcfg.graph.mode = ObsMode::Graph;
        vcfg.graph.critic = critic;
        vcfg.validate().map_err(|e| AppError::Config(e.to_string()))?;
        variants.push(run_variant_dir(&dir, label, vcfg)?);
    }
    write_comparison_summary(&dir, &variants)
}

fn cmd_eval(args: EvalArgs) -> Result<(), AppError> {
    if args.episodes == 0 {
        return Err(AppError::Config("--episodes must be positive".into()));
    }
    if args.dump_trajectories && args.common.out.is_none() {
        return Err(AppError::Config("--dump-trajectories needs --out".into()));
    }
    let ck = Checkpoint::load(&args.checkpoint)?;
    let m = args.common.agents.unwrap_or(ck.config.world.n_agents);
    let mut world = ck.config.world.clone();
    world.n_agents = m;
    crate::world::validate(&world).map_err(|e| AppError::Config(e.to_string()))?;
    let eval_seed = args.common.seed.unwrap_or(0);

    enum Loaded {
        Graph(crate::marl::GraphPolicy),
        Flat(crate::marl::FlatPolicy),
    }
    let policy = match ck.config.graph.mode {
        ObsMode::Graph => {
            let mut p = graph_policy_from_checkpoint(&ck, m)?;
            if let Some(rho) = args.common.rho {
                if !(rho > 0.0) {
                    return Err(AppError::Config("--rho must be positive".into()));
                }
                p.rho = rho;
            }
            Loaded::Graph(p)
        }
        _ => {
            let mut cfg = ck.config.clone();
            cfg.world.n_agents = m;
            let mut p = crate::harness::experiments::build_flat_policy(&cfg, 0);
            crate::checkpoint::apply_params(&mut p.store, &ck.params)?;
            Loaded::Flat(p)
        }
    };

    let (report, traces) = match (&policy, args.dump_trajectories) {
        (Loaded::Graph(p), false) => (evaluate(p, &world, args.episodes, eval_seed).0, None),
        (Loaded::Flat(p), false) => (evaluate(p, &world, args.episodes, eval_seed).0, None),
        (Loaded::Graph(p), true) => {
            let (r, _, t) = evaluate_traced(p, &world, args.episodes, eval_seed);
            (r, Some(t))
        }
        (Loaded::Flat(p), true) => {
            let (r, _, t) = evaluate_traced(p, &world, args.episodes, eval_seed);
            (r, Some(t))
        }
    };
    check_report(&report);
    println!("{}", serde_json::to_string_pretty(&report).map_err(|e| AppError::Runtime(e.to_string()))?);

    if let Some(out) = &args.common.out {
        std::fs::create_dir_all(out)?;
        output::write_json(&out.join("eval_report.json"), &report)?;
        let floor = random_baseline(&world, args.episodes, eval_seed);
        output::write_json(&out.join("random_baseline.json"), &floor)?;
        if let Some(traces) = traces {
            output::write_json(&out.join("trajectories.json"), &traces)?;
        }
    }
    Ok(())
}

fn cmd_transfer(args: TransferArgs) -> Result<(), AppError> {
    if args.episodes == 0 {
        return Err(AppError::Config("--episodes must be positive".into()));
    }
    if args.test_agents.is_empty() || args.test_agents.contains(&0) {
        return Err(AppError::Config("--test-agents needs positive team sizes".into()));
    }
    let ck = Checkpoint::load(&args.checkpoint)?;
    let eval_seed = args.common.seed.unwrap_or(0);
    let rows = transfer_table(&ck, &args.test_agents, args.episodes, eval_seed)?;
    println!("m,reward_per_agent,mean_t,collisions_per_agent,success_pct,episodes");
    for r in &rows {
        println!(
            "{},{},{},{},{},{}",
            r.m, r.reward_per_agent, r.mean_t, r.collisions_per_agent, r.success_pct, r.episodes
        );
    }
    if let Some(out) = &args.common.out {
        std::fs::create_dir_all(out)?;
        output::write_transfer_csv(&out.join("transfer.csv"), &rows)?;
        // The matching floor: random actions on each tested world.
        let mut floors = Vec::new();
        for &m in &args.test_agents {
            let world = crate::world::WorldConfig {
                n_agents: m,
                n_obstacles: crate::world::ObstacleCount::Range { min: 0, max: 10 },
                ..ck.config.world.clone()
            };
            let report = random_baseline(
                &world,
                args.episodes,
                crate::rng::mix(eval_seed, crate::rng::STREAM_EVAL, m as u64),
            );
            floors.push(serde_json::json!({ "m": m, "report": report }));
        }
        output::write_json(&out.join("random_baseline.json"), &floors)?;
    }
    Ok(())
}
