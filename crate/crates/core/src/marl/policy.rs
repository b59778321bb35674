//! The two policy families: graph-encoder actor-critic and the flat
//! (encoder-free) baseline used by the information-mode comparison.
//!
//! Both share one actor and one critic across agents. The graph policy
//! feeds each agent's actor the concatenation of its local observation and
//! its aggregation vector; the critic consumes either the team-pooled
//! aggregation vector (fixed width, any team size) or the concatenation of
//! every agent's actor input (width tied to the team size — the ablation
//! variant).

use ndarray::{s, Array2};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sample_categorical, ActResult, EvalBatch, Mlp, PolicyModel};
use crate::gnn::{Encoder, AGG_DIM};
use crate::obsgraph::{build_all_graphs, flat_observation, AgentGraph, InfoMode, LOCAL_OBS_DIM};
use crate::obsgraph::batch_graphs;
use crate::rng::{stream_rng, STREAM_INIT};
use crate::tensor::params::{BoundParams, ParamStore};
use crate::tensor::{Tape, Tensor};
use crate::world::{WorldState, N_ACTIONS};

/// Hidden width of the actor and critic heads.
pub const HEAD_HIDDEN: usize = 64;
/// Actor input width: local observation plus aggregation vector.
pub const ACTOR_INPUT: usize = LOCAL_OBS_DIM + AGG_DIM;

/// What the centralized critic sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriticMode {
    /// Team-pooled aggregation vector: input width 16, independent of the
    /// number of agents.
    Pooled,
    /// Concatenation of every agent's actor input: width grows with the
    /// team.
    Concat,
}

/// Stored observation of one state for the graph policy.
#[derive(Clone, Debug)]
pub struct GraphObs {
    /// Local observation rows, `(N, 6)`.
    pub o_loc: Array2<f64>,
    /// One ego-relative graph per agent.
    pub graphs: Vec<AgentGraph>,
}

/// Graph-encoder actor-critic.
pub struct GraphPolicy {
    pub store: ParamStore,
    pub encoder: Encoder,
    pub actor: Mlp,
    pub critic: Mlp,
    pub critic_mode: CriticMode,
    pub n_agents: usize,
    /// Sensing radius used to build observation graphs.
    pub rho: f64,
}

impl GraphPolicy {
    pub fn new(n_agents: usize, rho: f64, critic_mode: CriticMode, seed: u64) -> Self {
        assert!(n_agents >= 1 && rho > 0.0);
        let mut store = ParamStore::new();
        let mut rng = stream_rng(seed, STREAM_INIT, 0);
        let encoder = Encoder::new(&mut store, &mut rng, "encoder");
        let actor = Mlp::new(
            &mut store,
            &mut rng,
            "actor",
            &[ACTOR_INPUT, HEAD_HIDDEN, HEAD_HIDDEN, N_ACTIONS],
            0.01,
        );
        let critic_input = match critic_mode {
            CriticMode::Pooled => AGG_DIM,
            CriticMode::Concat => n_agents * ACTOR_INPUT,
        };
        let critic = Mlp::new(
            &mut store,
            &mut rng,
            "critic",
            &[critic_input, HEAD_HIDDEN, HEAD_HIDDEN, 1],
            1.0,
        );
        GraphPolicy { store, encoder, actor, critic, critic_mode, n_agents, rho }
    }

    /// Actor logits for every agent of one observation, `(N, 5)`.
    pub fn logits_for(&self, obs: &GraphObs) -> Array2<f64> {
        self.infer_batch(std::slice::from_ref(obs)).0
    }

    /// The same parameters driving a different team size. The encoder,
    /// actor, and pooled critic never see the team size, so the weights
    /// carry over unchanged; a width-bound critic only permits its
    /// original size.
    pub fn with_team_size(&self, n_agents: usize) -> GraphPolicy {
        assert!(
            n_agents == self.n_agents || self.critic_mode == CriticMode::Pooled,
            "width-bound critic cannot change team size"
        );
        let mut resized = GraphPolicy::new(n_agents, self.rho, self.critic_mode, 0);
        resized.store.values = self.store.values.clone();
        resized
    }

    /// Shared inference forward over `B` states: state-major logits
    /// `(B·N, 5)` and one value per state. All inputs enter as constants on
    /// a throwaway tape.
    fn infer_batch(&self, obs: &[GraphObs]) -> (Array2<f64>, Vec<f64>) {
        let n = self.n_agents;
        let tape = Tape::new();
        let params = self.store.bind_constants();
        let mut graphs = Vec::with_capacity(obs.len() * n);
        let mut o_loc = Array2::zeros((obs.len() * n, LOCAL_OBS_DIM));
        for (bi, ob) in obs.iter().enumerate() {
            graphs.extend(ob.graphs.iter().cloned());
            o_loc.slice_mut(s![bi * n..(bi + 1) * n, ..]).assign(&ob.o_loc);
        }
        let batch = batch_graphs(&graphs);
        let nodes = self.encoder.forward_nodes(&tape, &params, &batch, None);
        let ego = self.encoder.ego_readout(&tape, &nodes, &batch);
        let o_loc = Tensor::constant(o_loc.into_dyn());
        let actor_in = tape.concat_cols(&[&o_loc, &ego]);
        let logits = self.actor.forward(&tape, &params, &actor_in);
        let critic_in = match self.critic_mode {
            CriticMode::Pooled => tape.mean_pool_rows(&ego, n),
            CriticMode::Concat => tape.reshape_rows(&actor_in, n),
        };
        let values = self.critic.forward(&tape, &params, &critic_in);
        let values = values.view2("values").column(0).to_vec();
        (logits.view2("logits").to_owned(), values)
    }
}

impl PolicyModel for GraphPolicy {
    type Obs = GraphObs;

    fn n_agents(&self) -> usize {
        self.n_agents
    }

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn observe(&self, state: &WorldState) -> GraphObs {
        assert_eq!(state.n_agents(), self.n_agents, "team size mismatch");
        let mut o_loc = Array2::zeros((self.n_agents, LOCAL_OBS_DIM));
        for i in 0..self.n_agents {
            o_loc.row_mut(i).assign(&ndarray::arr1(&crate::obsgraph::local_observation(state, i)));
        }
        GraphObs { o_loc, graphs: build_all_graphs(state, self.rho) }
    }

    fn act(&self, obs: &GraphObs, rng: &mut ChaCha8Rng) -> ActResult {
        let (logits, values) = self.infer_batch(std::slice::from_ref(obs));
        let (actions, log_probs) = sample_rows(&logits, rng);
        ActResult { actions, log_probs, value: values[0] }
    }

    fn greedy_actions(&self, obs: &GraphObs) -> Vec<usize> {
        greedy_rows(&self.logits_for(obs))
    }

    fn value(&self, obs: &GraphObs) -> f64 {
        self.infer_batch(std::slice::from_ref(obs)).1[0]
    }

    fn logits_values_batch(&self, obs: &[GraphObs]) -> (Array2<f64>, Vec<f64>) {
        self.infer_batch(obs)
    }

    fn evaluate_batch(
        &self,
        tape: &Tape,
        params: &BoundParams,
        obs: &[GraphObs],
        actions: &[Vec<usize>],
    ) -> EvalBatch {
        let n = self.n_agents;
        let b = obs.len();
        let mut graphs = Vec::with_capacity(b * n);
        let mut o_loc = Array2::zeros((b * n, LOCAL_OBS_DIM));
        for (bi, ob) in obs.iter().enumerate() {
            graphs.extend(ob.graphs.iter().cloned());
            o_loc.slice_mut(s![bi * n..(bi + 1) * n, ..]).assign(&ob.o_loc);
        }
        let batch = batch_graphs(&graphs);
        let nodes = self.encoder.forward_nodes(tape, params, &batch, None);
        let ego = self.encoder.ego_readout(tape, &nodes, &batch);
        let o_loc = Tensor::constant(o_loc.into_dyn());
        let actor_in = tape.concat_cols(&[&o_loc, &ego]);
        let logits = self.actor.forward(tape, params, &actor_in);
        let (chosen_logp, entropy) = chosen_and_entropy(tape, &logits, actions, n);
        let critic_in = match self.critic_mode {
            CriticMode::Pooled => tape.mean_pool_rows(&ego, n),
            CriticMode::Concat => tape.reshape_rows(&actor_in, n),
        };
        let values = self.critic.forward(tape, params, &critic_in);
        EvalBatch { chosen_logp, entropy, values }
    }
}

/// Flat-observation actor-critic (no encoder): the information-mode
/// baselines. The critic always concatenates every agent's observation.
pub struct FlatPolicy {
    pub store: ParamStore,
    pub actor: Mlp,
    pub critic: Mlp,
    pub mode: InfoMode,
    pub n_agents: usize,
    /// Observation width the networks were built for.
    pub obs_dim: usize,
}

impl FlatPolicy {
    /// `n_entities` fixes the observation width for the global mode (the
    /// policy cannot transfer across entity counts there — by design).
    pub fn new(n_agents: usize, mode: InfoMode, n_entities: usize, seed: u64) -> Self {
        assert!(n_agents >= 1);
        mode.validate().expect("invalid information mode");
        let obs_dim = mode.obs_dim(n_entities);
        let mut store = ParamStore::new();
        let mut rng = stream_rng(seed, STREAM_INIT, 1);
        let actor = Mlp::new(
            &mut store,
            &mut rng,
            "actor",
            &[obs_dim, HEAD_HIDDEN, HEAD_HIDDEN, N_ACTIONS],
            0.01,
        );
        let critic = Mlp::new(
            &mut store,
            &mut rng,
            "critic",
            &[n_agents * obs_dim, HEAD_HIDDEN, HEAD_HIDDEN, 1],
            1.0,
        );
        FlatPolicy { store, actor, critic, mode, n_agents, obs_dim }
    }

    pub fn logits_for(&self, obs: &Array2<f64>) -> Array2<f64> {
        self.infer_batch(std::slice::from_ref(obs)).0
    }

    /// Shared inference forward over `B` states (see the graph policy's
    /// counterpart).
    fn infer_batch(&self, obs: &[Array2<f64>]) -> (Array2<f64>, Vec<f64>) {
        let n = self.n_agents;
        let tape = Tape::new();
        let params = self.store.bind_constants();
        let mut rows = Array2::zeros((obs.len() * n, self.obs_dim));
        for (bi, ob) in obs.iter().enumerate() {
            rows.slice_mut(s![bi * n..(bi + 1) * n, ..]).assign(ob);
        }
        let x = Tensor::constant(rows.into_dyn());
        let logits = self.actor.forward(&tape, &params, &x);
        let critic_in = tape.reshape_rows(&x, n);
        let values = self.critic.forward(&tape, &params, &critic_in);
        let values = values.view2("values").column(0).to_vec();
        (logits.view2("logits").to_owned(), values)
    }
}

impl PolicyModel for FlatPolicy {
    /// Observation rows, `(N, obs_dim)`.
    type Obs = Array2<f64>;

    fn n_agents(&self) -> usize {
        self.n_agents
    }

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn observe(&self, state: &WorldState) -> Array2<f64> {
        assert_eq!(state.n_agents(), self.n_agents, "team size mismatch");
        let mut rows = Array2::zeros((self.n_agents, self.obs_dim));
        for i in 0..self.n_agents {
            let o = flat_observation(state, i, &self.mode);
            assert_eq!(
                o.len(),
                self.obs_dim,
                "observation width {} does not match the trained width {} \
                 (entity count changed under a width-bound mode)",
                o.len(),
                self.obs_dim
            );
            rows.row_mut(i).assign(&ndarray::arr1(&o));
        }
        rows
    }

    fn act(&self, obs: &Array2<f64>, rng: &mut ChaCha8Rng) -> ActResult {
        let (logits, values) = self.infer_batch(std::slice::from_ref(obs));
        let (actions, log_probs) = sample_rows(&logits, rng);
        ActResult { actions, log_probs, value: values[0] }
    }

    fn greedy_actions(&self, obs: &Array2<f64>) -> Vec<usize> {
        greedy_rows(&self.logits_for(obs))
    }

    fn value(&self, obs: &Array2<f64>) -> f64 {
        self.infer_batch(std::slice::from_ref(obs)).1[0]
    }

    fn logits_values_batch(&self, obs: &[Array2<f64>]) -> (Array2<f64>, Vec<f64>) {
        self.infer_batch(obs)
    }

    fn evaluate_batch(
        &self,
        tape: &Tape,
        params: &BoundParams,
        obs: &[Array2<f64>],
        actions: &[Vec<usize>],
    ) -> EvalBatch {
        let n = self.n_agents;
        let b = obs.len();
        let mut rows = Array2::zeros((b * n, self.obs_dim));
        for (bi, ob) in obs.iter().enumerate() {
            rows.slice_mut(s![bi * n..(bi + 1) * n, ..]).assign(ob);
        }
        let x = Tensor::constant(rows.into_dyn());
        let logits = self.actor.forward(tape, params, &x);
        let (chosen_logp, entropy) = chosen_and_entropy(tape, &logits, actions, n);
        let critic_in = tape.reshape_rows(&x, n);
        let values = self.critic.forward(tape, params, &critic_in);
        EvalBatch { chosen_logp, entropy, values }
    }
}

/// Log-probabilities of the stored actions and per-row entropies from a
/// logits matrix `(B·N, 5)`.
fn chosen_and_entropy(
    tape: &Tape,
    logits: &Tensor,
    actions: &[Vec<usize>],
    n: usize,
) -> (Tensor, Tensor) {
    let rows = logits.shape()[0];
    assert_eq!(rows, actions.len() * n, "action rows misaligned with logits");
    let logp = tape.log_softmax(logits, 1);
    let mut mask = Array2::zeros((rows, N_ACTIONS));
    for (bi, acts) in actions.iter().enumerate() {
        assert_eq!(acts.len(), n, "team action count mismatch");
        for (i, &a) in acts.iter().enumerate() {
            mask[[bi * n + i, a]] = 1.0;
        }
    }
    let chosen = tape.sum_axis(&tape.mul(&logp, &Tensor::constant(mask.into_dyn())), 1);
    let probs = tape.exp(&logp);
    let entropy = tape.scalar_mul(&tape.sum_axis(&tape.mul(&probs, &logp), 1), -1.0);
    (chosen, entropy)
}

/// Sample per row of a logits matrix; returns actions and their
/// log-probabilities.
pub(crate) fn sample_rows(logits: &Array2<f64>, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<f64>) {
    let logp = stable_log_softmax(logits);
    let mut actions = Vec::with_capacity(logits.nrows());
    let mut lps = Vec::with_capacity(logits.nrows());
    for r in 0..logits.nrows() {
        let probs: Vec<f64> = logp.row(r).iter().map(|&l| l.exp()).collect();
        let a = sample_categorical(rng, &probs);
        actions.push(a);
        let lp = logp[[r, a]];
        assert!(lp.is_finite(), "non-finite log-probability {lp}");
        lps.push(lp);
    }
    (actions, lps)
}

/// Argmax per row; ties resolve to the lowest index.
pub(crate) fn greedy_rows(logits: &Array2<f64>) -> Vec<usize> {
    (0..logits.nrows())
        .map(|r| {
            let row = logits.row(r);
            let mut best = 0;
            for c in 1..row.len() {
                if row[c] > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Numerically stable row-wise log-softmax (inference path; matches the
/// differentiable op bit for bit).
fn stable_log_softmax(logits: &Array2<f64>) -> Array2<f64> {
    let tape = Tape::new();
    let t = Tensor::constant(logits.clone().into_dyn());
    tape.log_softmax(&t, 1).view2("log_softmax").to_owned()
}
