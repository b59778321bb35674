//! 2-D particle world for cooperative navigation.
//!
//! Entities live in the square `[-half_extent, half_extent]²`: `N` agents,
//! their `N` goals, and a (possibly random) number of static obstacles.
//! Agents are double integrators driven by five discrete acceleration
//! actions; velocity is damped and capped, positions are unbounded (no
//! walls — the reward pulls agents back). An agent that comes within
//! `goal_threshold` of its goal freezes there for the rest of the episode
//! and keeps collecting the goal bonus, which stabilizes the success metric
//! and prevents hovering oscillation around the goal.
//!
//! Entity indexing is canonical throughout the crate: agents `0..N`, goals
//! `N..2N` (goal of agent `i` is entity `N + i`), obstacles `2N..`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Extra center separation required between any two placed entities.
pub const PLACEMENT_MARGIN: f64 = 0.02;
/// Total rejection-sampling retries allowed during one reset.
pub const PLACEMENT_RETRY_CAP: usize = 10_000;
/// Size of the discrete action set.
pub const N_ACTIONS: usize = 5;

/// What an entity is. The discriminant doubles as the embedding-table row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Agent,
    Obstacle,
    Goal,
}

impl EntityKind {
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        match self {
            EntityKind::Agent => 0,
            EntityKind::Obstacle => 1,
            EntityKind::Goal => 2,
        }
    }
}

/// Obstacle count: fixed, or drawn uniformly from an inclusive range at
/// every reset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObstacleCount {
    Fixed(usize),
    Range { min: usize, max: usize },
}

impl ObstacleCount {
    pub fn max(self) -> usize {
        match self {
            ObstacleCount::Fixed(k) => k,
            ObstacleCount::Range { max, .. } => max,
        }
    }
}

/// Environment constants. Defaults give the 3-agent, 3-obstacle navigation
/// task on the 2 m square with 25-step episodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub n_agents: usize,
    pub n_obstacles: ObstacleCount,
    /// World is the square `[-half_extent, half_extent]²` (meters).
    pub half_extent: f64,
    /// Integration step (seconds).
    pub dt: f64,
    /// Per-step velocity decay factor in `[0, 1)`.
    pub damping: f64,
    /// Acceleration applied by the non-idle actions (m/s²).
    pub accel_magnitude: f64,
    /// Speed cap applied to the velocity norm (m/s).
    pub max_speed: f64,
    pub agent_radius: f64,
    pub obstacle_radius: f64,
    pub goal_radius: f64,
    /// Distance below which an agent counts as having reached its goal.
    pub goal_threshold: f64,
    pub episode_length: usize,
    /// Added to an agent's reward on any step it overlaps an agent or
    /// obstacle (negative).
    pub collision_penalty: f64,
    /// Added on any step the agent is within `goal_threshold` of its goal.
    pub goal_bonus: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            n_agents: 3,
            n_obstacles: ObstacleCount::Fixed(3),
            half_extent: 1.0,
            dt: 0.1,
            damping: 0.25,
            accel_magnitude: 5.0,
            max_speed: 1.0,
            agent_radius: 0.05,
            obstacle_radius: 0.05,
            goal_radius: 0.05,
            goal_threshold: 0.05,
            episode_length: 25,
            collision_penalty: -5.0,
            goal_bonus: 5.0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WorldError {
    #[error("invalid world config: {0}")]
    InvalidConfig(String),
    #[error("placement failed after {0} rejection retries: world too dense")]
    PlacementInfeasible(usize),
}

/// Check the structural invariants of a config before use.
pub fn validate(config: &WorldConfig) -> Result<(), WorldError> {
    let fail = |msg: String| Err(WorldError::InvalidConfig(msg));
    if config.n_agents < 1 {
        return fail("n_agents must be at least 1".into());
    }
    if !(config.agent_radius > 0.0 && config.obstacle_radius > 0.0 && config.goal_radius > 0.0) {
        return fail("all radii must be positive".into());
    }
    if !(config.dt > 0.0) {
        return fail(format!("dt must be positive, got {}", config.dt));
    }
    if config.episode_length < 1 {
        return fail("episode_length must be at least 1".into());
    }
    if !(config.half_extent > 2.0 * config.agent_radius) {
        return fail(format!(
            "half_extent {} must exceed twice the agent radius {}",
            config.half_extent, config.agent_radius
        ));
    }
    if !(0.0..1.0).contains(&config.damping) {
        return fail(format!("damping must lie in [0,1), got {}", config.damping));
    }
    if !(config.max_speed > 0.0) {
        return fail("max_speed must be positive".into());
    }
    if !(config.goal_threshold > 0.0) {
        return fail("goal_threshold must be positive".into());
    }
    if let ObstacleCount::Range { min, max } = config.n_obstacles {
        if min > max {
            return fail(format!("obstacle range min {min} exceeds max {max}"));
        }
    }
    Ok(())
}

/// Full simulation state. Cheap to clone; equality is bitwise, including the
/// generator state, so determinism tests can compare whole states.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub kinds: Vec<EntityKind>,
    /// Position per entity (meters).
    pub positions: Vec<[f64; 2]>,
    /// Velocity per agent; non-agents are static.
    pub velocities: Vec<[f64; 2]>,
    /// Entity index of each agent's goal.
    pub goal_of_agent: Vec<usize>,
    pub step_index: usize,
    pub reached_goal: Vec<bool>,
    pub rng: ChaCha8Rng,
}

impl WorldState {
    pub fn n_entities(&self) -> usize {
        self.kinds.len()
    }

    pub fn n_agents(&self) -> usize {
        self.velocities.len()
    }
}

/// Outcome of one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub per_agent_reward: Vec<f64>,
    /// Exact sum of the per-agent rewards; the shared training signal.
    pub joint_reward: f64,
    /// Number of unfrozen agents that incurred the collision penalty.
    pub collisions_this_step: usize,
    pub done: bool,
}

/// Collision radius of an entity kind.
pub fn radius_of(config: &WorldConfig, kind: EntityKind) -> f64 {
    match kind {
        EntityKind::Agent => config.agent_radius,
        EntityKind::Obstacle => config.obstacle_radius,
        EntityKind::Goal => config.goal_radius,
    }
}

pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

/// Place all entities uniformly at random with rejection sampling; fully
/// determined by `seed`.
///
/// Draw order is fixed: obstacle count (if ranged), then agent, goal, and
/// obstacle positions in entity-index order, x before y.
pub fn reset(config: &WorldConfig, seed: u64) -> Result<WorldState, WorldError> {
    validate(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.n_agents;
    let n_obs = match config.n_obstacles {
        ObstacleCount::Fixed(k) => k,
        ObstacleCount::Range { min, max } => rng.random_range(min..=max),
    };
    let mut kinds = Vec::with_capacity(2 * n + n_obs);
    kinds.extend(std::iter::repeat_n(EntityKind::Agent, n));
    kinds.extend(std::iter::repeat_n(EntityKind::Goal, n));
    kinds.extend(std::iter::repeat_n(EntityKind::Obstacle, n_obs));

    let he = config.half_extent;
    let mut positions: Vec<[f64; 2]> = Vec::with_capacity(kinds.len());
    let mut retries = 0usize;
    for &kind in &kinds {
        let r = radius_of(config, kind);
        loop {
            let p = [rng.random_range(-he..he), rng.random_range(-he..he)];
            let clear = positions.iter().zip(&kinds).all(|(q, &qk)| {
                distance(p, *q) >= r + radius_of(config, qk) + PLACEMENT_MARGIN
            });
            if clear {
                positions.push(p);
                break;
            }
            retries += 1;
            if retries >= PLACEMENT_RETRY_CAP {
                return Err(WorldError::PlacementInfeasible(retries));
            }
        }
    }
    Ok(WorldState {
        kinds,
        positions,
        velocities: vec![[0.0, 0.0]; n],
        goal_of_agent: (n..2 * n).collect(),
        step_index: 0,
        reached_goal: vec![false; n],
        rng,
    })
}

/// Discrete action to acceleration: 0 idles, 1..=4 accelerate along
/// +x, −x, +y, −y with magnitude `accel_magnitude`.
pub fn action_to_accel(config: &WorldConfig, action: usize) -> [f64; 2] {
    let a = config.accel_magnitude;
    match action {
        0 => [0.0, 0.0],
        1 => [a, 0.0],
        2 => [-a, 0.0],
        3 => [0.0, a],
        4 => [0.0, -a],
        _ => panic!("action index {action} out of range 0..{N_ACTIONS}"),
    }
}

/// True once the episode has ended: the horizon elapsed or everyone reached
/// their goal.
pub fn is_done(config: &WorldConfig, state: &WorldState) -> bool {
    state.step_index >= config.episode_length || state.reached_goal.iter().all(|&r| r)
}

/// FNV-1a digest of the full dynamic state (kinds, positions, velocities,
/// reached flags, step index). Cheap fingerprint for asserting that two runs
/// visited bit-identical states.
pub fn state_hash(state: &WorldState) -> u64 {
    const OFFSET: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    fn eat(h: &mut u64, v: u64) {
        for byte in v.to_le_bytes() {
            *h ^= byte as u64;
            *h = h.wrapping_mul(PRIME);
        }
    }
    let mut h = OFFSET;
    for k in &state.kinds {
        eat(&mut h, k.index() as u64);
    }
    for arr in [&state.positions, &state.velocities] {
        for &[x, y] in arr {
            eat(&mut h, x.to_bits());
            eat(&mut h, y.to_bits());
        }
    }
    for &r in &state.reached_goal {
        eat(&mut h, r as u64);
    }
    eat(&mut h, state.step_index as u64);
    h
}

/// All overlapping pairs `(i, j)` with `i < j`, by center distance strictly
/// below the radius sum. Agent-goal overlaps are never collisions (goals are
/// markers, not bodies, to the agents they guide).
pub fn detect_collisions(config: &WorldConfig, state: &WorldState) -> Vec<(usize, usize)> {
    let n = state.n_entities();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let (ki, kj) = (state.kinds[i], state.kinds[j]);
            let agent_goal = matches!(
                (ki, kj),
                (EntityKind::Agent, EntityKind::Goal) | (EntityKind::Goal, EntityKind::Agent)
            );
            if agent_goal {
                continue;
            }
            let bound = radius_of(config, ki) + radius_of(config, kj);
            if distance(state.positions[i], state.positions[j]) < bound {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Per-agent flag: an unfrozen agent currently overlapping another agent or
/// an obstacle. Frozen agents are exempt from the penalty, but still act as
/// bodies that others can collide with.
pub fn agent_collision_flags(config: &WorldConfig, state: &WorldState) -> Vec<bool> {
    let n = state.n_agents();
    let mut flags = vec![false; n];
    for (i, j) in detect_collisions(config, state) {
        for e in [i, j] {
            if e < n && !state.reached_goal[e] {
                flags[e] = true;
            }
        }
    }
    flags
}

/// Per-agent reward on the current state: negative goal distance, collision
/// penalty, goal bonus. Frozen agents collect the flat goal bonus only.
pub fn compute_rewards(config: &WorldConfig, state: &WorldState) -> Vec<f64> {
    let flags = agent_collision_flags(config, state);
    (0..state.n_agents())
        .map(|i| {
            if state.reached_goal[i] {
                return config.goal_bonus;
            }
            let d = distance(state.positions[i], state.positions[state.goal_of_agent[i]]);
            let mut r = -d;
            if flags[i] {
                r += config.collision_penalty;
            }
            if d < config.goal_threshold {
                r += config.goal_bonus;
            }
            r
        })
        .collect()
}

/// Advance one step: integrate unfrozen agents, score the post-move state,
/// then freeze agents that arrived this step.
///
/// `v' = (1 − damping)·v + u·dt` clipped to `max_speed` by norm;
/// `p' = p + v'·dt`.
pub fn step(config: &WorldConfig, state: &mut WorldState, actions: &[usize]) -> StepResult {
    assert!(!is_done(config, state), "step called on a finished episode");
    assert_eq!(
        actions.len(),
        state.n_agents(),
        "expected {} actions, got {}",
        state.n_agents(),
        actions.len()
    );
    for i in 0..state.n_agents() {
        if state.reached_goal[i] {
            state.velocities[i] = [0.0, 0.0];
            continue;
        }
        let u = action_to_accel(config, actions[i]);
        let mut v = state.velocities[i];
        v[0] = (1.0 - config.damping) * v[0] + u[0] * config.dt;
        v[1] = (1.0 - config.damping) * v[1] + u[1] * config.dt;
        let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
        if speed > config.max_speed {
            let scale = config.max_speed / speed;
            v[0] *= scale;
            v[1] *= scale;
        }
        state.velocities[i] = v;
        state.positions[i][0] += v[0] * config.dt;
        state.positions[i][1] += v[1] * config.dt;
    }

    let per_agent_reward = compute_rewards(config, state);
    let joint_reward: f64 = per_agent_reward.iter().sum();
    let collisions_this_step =
        agent_collision_flags(config, state).iter().filter(|&&f| f).count();

    // Arrival is judged on the post-move state, after this step's reward.
    for i in 0..state.n_agents() {
        if !state.reached_goal[i] {
            let d = distance(state.positions[i], state.positions[state.goal_of_agent[i]]);
            if d < config.goal_threshold {
                state.reached_goal[i] = true;
                state.velocities[i] = [0.0, 0.0];
            }
        }
    }
    state.step_index += 1;
    let done = is_done(config, state);
    StepResult { per_agent_reward, joint_reward, collisions_this_step, done }
}
