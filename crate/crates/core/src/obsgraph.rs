//! Observation construction: per-agent local vectors, flat baseline
//! observations at three information levels, and the ego-relative
//! agent-entity graph consumed by the graph encoder.
//!
//! The graph has one node per entity with features expressed relative to
//! the ego agent, and a directed edge from every entity to every agent
//! within sensing radius `rho` (closed ball, no self-loops). Agent-agent
//! pairs therefore get both directions; non-agents only send. Topology
//! depends on positions alone, so all egos in one state share it — only
//! node features change with the ego.

use serde::{Deserialize, Serialize};

use crate::world::{distance, EntityKind, WorldState};

/// Length of the per-agent local observation `[p, v, goal − p]`.
pub const LOCAL_OBS_DIM: usize = 6;
/// Length of a node's base feature block `[rel_p, rel_v, rel_goal_p]`.
pub const NODE_BASE_DIM: usize = 6;

/// How much of the world a flat (non-graph) policy observes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfoMode {
    /// Own position, velocity, and relative goal only.
    Local,
    /// Local vector plus relative positions of every other entity, in
    /// entity-index order. Width is tied to the entity count.
    Global,
    /// Local vector plus relative positions of entities within `nbd_dist`,
    /// nearest first, truncated at `max_nbd_entities` and zero-padded.
    Neighborhood { nbd_dist: f64, max_nbd_entities: usize },
}

impl InfoMode {
    pub fn validate(&self) -> Result<(), String> {
        if let InfoMode::Neighborhood { nbd_dist, max_nbd_entities } = self {
            if !(*nbd_dist > 0.0) {
                return Err(format!("neighborhood distance must be positive, got {nbd_dist}"));
            }
            if *max_nbd_entities < 1 {
                return Err("neighborhood entity budget must be at least 1".into());
            }
        }
        Ok(())
    }

    /// Flat-vector width for a world with `n_entities` entities.
    pub fn obs_dim(&self, n_entities: usize) -> usize {
        match self {
            InfoMode::Local => LOCAL_OBS_DIM,
            InfoMode::Global => LOCAL_OBS_DIM + 2 * (n_entities - 1),
            InfoMode::Neighborhood { max_nbd_entities, .. } => {
                LOCAL_OBS_DIM + 2 * max_nbd_entities
            }
        }
    }
}

/// One graph node: kinematics relative to the ego agent plus entity kind.
/// Non-agents carry their own relative position in the goal slot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeFeature {
    pub rel_p: [f64; 2],
    pub rel_v: [f64; 2],
    pub rel_goal_p: [f64; 2],
    pub kind: EntityKind,
}

impl NodeFeature {
    pub fn base(&self) -> [f64; NODE_BASE_DIM] {
        [
            self.rel_p[0],
            self.rel_p[1],
            self.rel_v[0],
            self.rel_v[1],
            self.rel_goal_p[0],
            self.rel_goal_p[1],
        ]
    }
}

/// Ego-relative view of the whole world as a directed graph.
///
/// Edges are `(src, dst)` pairs sorted by `(dst, src)`; every destination
/// is an agent node. `edge_feature[k]` is the center distance of edge `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentGraph {
    pub nodes: Vec<NodeFeature>,
    pub edges: Vec<(usize, usize)>,
    pub edge_feature: Vec<f64>,
    pub ego_index: usize,
}

/// Disjoint union of per-agent graphs, with the bookkeeping the encoder
/// needs to process them in one pass.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchedGraphs {
    pub nodes: Vec<NodeFeature>,
    /// Edges with node indices shifted into the union's row space.
    pub edges: Vec<(usize, usize)>,
    pub edge_feature: Vec<f64>,
    /// Prefix sums: graph `g` owns nodes `node_offset[g]..node_offset[g+1]`.
    pub node_offset: Vec<usize>,
    /// Prefix sums of edge counts, aligned with `node_offset`.
    pub edge_offset: Vec<usize>,
    /// Ego node of each graph, as a union row index.
    pub ego_rows: Vec<usize>,
    /// Union row indices of all agent nodes, graph by graph.
    pub agent_rows: Vec<usize>,
    /// Graph id of each entry in `agent_rows` (for per-graph pooling).
    pub agent_group: Vec<usize>,
}

impl BatchedGraphs {
    pub fn n_graphs(&self) -> usize {
        self.node_offset.len() - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
}

/// `[p, v, goal − p]` for one agent, in the global frame.
pub fn local_observation(state: &WorldState, agent: usize) -> [f64; LOCAL_OBS_DIM] {
    let p = state.positions[agent];
    let v = state.velocities[agent];
    let g = state.positions[state.goal_of_agent[agent]];
    [p[0], p[1], v[0], v[1], g[0] - p[0], g[1] - p[1]]
}

/// Flat observation vector for one agent at the given information level.
pub fn flat_observation(state: &WorldState, agent: usize, mode: &InfoMode) -> Vec<f64> {
    let mut out = Vec::with_capacity(mode.obs_dim(state.n_entities()));
    out.extend_from_slice(&local_observation(state, agent));
    let p = state.positions[agent];
    match mode {
        InfoMode::Local => {}
        InfoMode::Global => {
            for j in 0..state.n_entities() {
                if j != agent {
                    out.push(state.positions[j][0] - p[0]);
                    out.push(state.positions[j][1] - p[1]);
                }
            }
        }
        InfoMode::Neighborhood { nbd_dist, max_nbd_entities } => {
            let mut near: Vec<(f64, usize)> = (0..state.n_entities())
                .filter(|&j| j != agent)
                .map(|j| (distance(state.positions[j], p), j))
                .filter(|&(d, _)| d <= *nbd_dist)
                .collect();
            near.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            near.truncate(*max_nbd_entities);
            for &(_, j) in &near {
                out.push(state.positions[j][0] - p[0]);
                out.push(state.positions[j][1] - p[1]);
            }
            out.resize(LOCAL_OBS_DIM + 2 * max_nbd_entities, 0.0);
        }
    }
    out
}

/// Build the agent-entity graph seen from `ego` with sensing radius `rho`.
pub fn build_graph(state: &WorldState, ego: usize, rho: f64) -> AgentGraph {
    assert!(ego < state.n_agents(), "ego {ego} is not an agent");
    assert!(rho > 0.0, "sensing radius must be positive");
    let ego_p = state.positions[ego];
    let ego_v = state.velocities[ego];
    let nodes: Vec<NodeFeature> = (0..state.n_entities())
        .map(|j| {
            let rel_p = [state.positions[j][0] - ego_p[0], state.positions[j][1] - ego_p[1]];
            let is_agent = state.kinds[j] == EntityKind::Agent;
            let vj = if is_agent { state.velocities[j] } else { [0.0, 0.0] };
            let rel_goal_p = if is_agent {
                let g = state.positions[state.goal_of_agent[j]];
                [g[0] - ego_p[0], g[1] - ego_p[1]]
            } else {
                rel_p
            };
            NodeFeature {
                rel_p,
                rel_v: [vj[0] - ego_v[0], vj[1] - ego_v[1]],
                rel_goal_p,
                kind: state.kinds[j],
            }
        })
        .collect();

    let mut edges = Vec::new();
    let mut edge_feature = Vec::new();
    // Destination-major order: every agent receives from all entities in
    // range; agent sources get their reverse edge when the other loop turn
    // reaches them.
    for dst in 0..state.n_agents() {
        for src in 0..state.n_entities() {
            if src == dst {
                continue;
            }
            let d = distance(state.positions[src], state.positions[dst]);
            if d <= rho {
                edges.push((src, dst));
                edge_feature.push(d);
            }
        }
    }
    AgentGraph { nodes, edges, edge_feature, ego_index: ego }
}

/// Graphs for every agent of one state, in agent order.
pub fn build_all_graphs(state: &WorldState, rho: f64) -> Vec<AgentGraph> {
    (0..state.n_agents()).map(|i| build_graph(state, i, rho)).collect()
}

/// Disjoint union preserving per-graph structure. Node and edge order
/// follow the input order, so unbatching is a pure slicing operation.
pub fn batch_graphs(graphs: &[AgentGraph]) -> BatchedGraphs {
    assert!(!graphs.is_empty(), "cannot batch zero graphs");
    let mut out = BatchedGraphs {
        nodes: Vec::new(),
        edges: Vec::new(),
        edge_feature: Vec::new(),
        node_offset: vec![0],
        edge_offset: vec![0],
        ego_rows: Vec::new(),
        agent_rows: Vec::new(),
        agent_group: Vec::new(),
    };
    for (g, graph) in graphs.iter().enumerate() {
        let base = out.nodes.len();
        out.nodes.extend_from_slice(&graph.nodes);
        out.edges.extend(graph.edges.iter().map(|&(s, d)| (s + base, d + base)));
        out.edge_feature.extend_from_slice(&graph.edge_feature);
        out.ego_rows.push(base + graph.ego_index);
        for (j, node) in graph.nodes.iter().enumerate() {
            if node.kind == EntityKind::Agent {
                out.agent_rows.push(base + j);
                out.agent_group.push(g);
            }
        }
        out.node_offset.push(out.nodes.len());
        out.edge_offset.push(out.edges.len());
    }
    out
}

/// Inverse of [`batch_graphs`].
pub fn unbatch_graphs(batched: &BatchedGraphs) -> Vec<AgentGraph> {
    (0..batched.n_graphs())
        .map(|g| {
            let (n0, n1) = (batched.node_offset[g], batched.node_offset[g + 1]);
            let (e0, e1) = (batched.edge_offset[g], batched.edge_offset[g + 1]);
            AgentGraph {
                nodes: batched.nodes[n0..n1].to_vec(),
                edges: batched.edges[e0..e1].iter().map(|&(s, d)| (s - n0, d - n0)).collect(),
                edge_feature: batched.edge_feature[e0..e1].to_vec(),
                ego_index: batched.ego_rows[g] - n0,
            }
        })
        .collect()
}
