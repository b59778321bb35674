//! Graph-transformer encoder: entity-kind embedding, two attention-based
//! message-passing layers, and a linear projection to the fixed-width
//! aggregation vector read at the ego node.
//!
//! Each layer computes, per attention head,
//!
//! ```text
//! x_i' = W_root·x_i + Σ_{j ∈ N(i)} α_ij · W_msg·x_j
//! α_ij = softmax_j( (W_query·x_i)ᵀ(W_key·x_j + W_edge·e_ij) / √c )
//! ```
//!
//! where `N(i)` are the in-neighbors of node `i`, `e_ij` is the scalar edge
//! distance, and the softmax normalizes over `N(i)`. Head outputs are
//! concatenated (3 heads × 16 channels = 48), ReLU sits between the two
//! layers only, and a final 48 → 16 linear layer produces the per-node
//! feature whose ego row is the agent's aggregation vector. Nodes without
//! in-neighbors (all non-agents, and agents alone in their sensing radius)
//! keep just the root term — there are no self-loops.
//!
//! All paths run on the batched disjoint union of graphs; per-destination
//! softmax and scatter ops touch only each graph's own rows, so batched and
//! one-at-a-time encoding agree to the last bit.

use ndarray::{Array1, Array2, Ix2};
use rand_chacha::ChaCha8Rng;

use crate::obsgraph::{batch_graphs, AgentGraph, BatchedGraphs, NODE_BASE_DIM};
use crate::tensor::init::{orthogonal, zeros1, RELU_GAIN};
use crate::tensor::params::{BoundParams, ParamId, ParamStore};
use crate::tensor::{Tape, Tensor};

/// Attention heads per layer.
pub const N_HEADS: usize = 3;
/// Channels per head (the `c` of the attention scaling).
pub const HEAD_DIM: usize = 16;
/// Message-passing layers.
pub const N_LAYERS: usize = 2;
/// Width of the learned entity-kind embedding.
pub const EMBED_DIM: usize = 3;
/// Per-node input width: base kinematics plus kind embedding.
pub const NODE_INPUT_DIM: usize = NODE_BASE_DIM + EMBED_DIM;
/// Concatenated width of one layer's head outputs.
pub const LAYER_DIM: usize = N_HEADS * HEAD_DIM;
/// Width of the aggregation vector (ego readout and pooled variant alike).
pub const AGG_DIM: usize = 16;

/// One head's five weight matrices, all stored `(input, output)`.
#[derive(Clone, Copy, Debug)]
pub struct HeadParams {
    pub root: ParamId,
    pub msg: ParamId,
    pub query: ParamId,
    pub key: ParamId,
    pub edge: ParamId,
}

#[derive(Clone, Debug)]
pub struct LayerParams {
    pub heads: [HeadParams; N_HEADS],
}

/// Parameter handles of the full encoder. Construction registers everything
/// in a [`ParamStore`]; forward passes go through a [`BoundParams`] view.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub embedding: ParamId,
    pub layers: [LayerParams; N_LAYERS],
    pub proj_w: ParamId,
    pub proj_b: ParamId,
}

/// Attention coefficients observed during one forward pass, for diagnostics
/// and tests: `per_layer[l][h][k]` is the weight on `edges[k]` at layer `l`,
/// head `h`. Edges are listed in the encoder's processing order.
#[derive(Clone, Debug)]
pub struct AttentionMaps {
    pub edges: Vec<(usize, usize)>,
    pub per_layer: Vec<[Vec<f64>; N_HEADS]>,
}

/// Plain-value encoder output for a set of graphs from one world state.
#[derive(Clone, Debug)]
pub struct EncoderOutput {
    /// One aggregation vector per input graph (its ego readout), row-major.
    pub x_agg: Array2<f64>,
    /// Mean of the rows of `x_agg`.
    pub pooled: Array1<f64>,
}

/// Edge bookkeeping for one batched forward: arrays sorted by destination so
/// per-destination softmax segments are contiguous.
struct EdgePlan {
    src: Vec<usize>,
    dst: Vec<usize>,
    features: Array2<f64>,
    /// Half-open `(start, end)` runs of equal destination.
    runs: Vec<(usize, usize)>,
    /// Processing-order edge list (for attention reporting).
    edges: Vec<(usize, usize)>,
}

impl EdgePlan {
    fn new(batch: &BatchedGraphs) -> Self {
        let mut order: Vec<usize> = (0..batch.edges.len()).collect();
        order.sort_unstable_by_key(|&k| (batch.edges[k].1, batch.edges[k].0));
        let edges: Vec<(usize, usize)> = order.iter().map(|&k| batch.edges[k]).collect();
        let src: Vec<usize> = edges.iter().map(|&(s, _)| s).collect();
        let dst: Vec<usize> = edges.iter().map(|&(_, d)| d).collect();
        let features =
            Array2::from_shape_fn((edges.len(), 1), |(k, _)| batch.edge_feature[order[k]]);
        let mut runs = Vec::new();
        let mut start = 0;
        for k in 1..=dst.len() {
            if k == dst.len() || dst[k] != dst[start] {
                runs.push((start, k));
                start = k;
            }
        }
        EdgePlan { src, dst, features, runs, edges }
    }
}

/// Softmax over contiguous index runs of a 1-D tensor (one run per
/// destination node's in-neighborhood).
fn segment_softmax(tape: &Tape, logits: &Tensor, runs: &[(usize, usize)]) -> Tensor {
    let v = logits.view1("segment_softmax");
    let mut alpha = Array1::<f64>::zeros(v.len());
    for &(s, e) in runs {
        let max = (s..e).map(|k| v[k]).fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for k in s..e {
            let w = (v[k] - max).exp();
            alpha[k] = w;
            total += w;
        }
        for k in s..e {
            alpha[k] /= total;
        }
    }
    let saved = alpha.clone();
    let runs_c = runs.to_vec();
    let tracked = logits.is_tracked();
    tape.custom_op(&[logits], alpha.into_dyn(), move |g| {
        vec![tracked.then(|| {
            let g1 = g.view().into_dimensionality::<ndarray::Ix1>().unwrap();
            let mut out = Array1::<f64>::zeros(g1.len());
            for &(s, e) in &runs_c {
                let dot: f64 = (s..e).map(|k| g1[k] * saved[k]).sum();
                for k in s..e {
                    out[k] = saved[k] * (g1[k] - dot);
                }
            }
            out.into_dyn()
        })]
    })
}

/// Accumulate `alpha[k] · messages[k, :]` into row `dst[k]` of an
/// `n_nodes`-row output (the attention-weighted neighborhood sum).
fn weighted_scatter(
    tape: &Tape,
    alpha: &Tensor,
    messages: &Tensor,
    dst: &[usize],
    n_nodes: usize,
) -> Tensor {
    let a = alpha.view1("weighted_scatter");
    let m = messages.view2("weighted_scatter");
    assert_eq!(a.len(), m.nrows(), "weighted_scatter: edge count mismatch");
    let cols = m.ncols();
    let mut out = Array2::<f64>::zeros((n_nodes, cols));
    for (k, &d) in dst.iter().enumerate() {
        let mut row = out.row_mut(d);
        row.scaled_add(a[k], &m.row(k));
    }
    let a_saved = alpha.data().clone();
    let m_saved = messages.data().clone();
    let dst_c = dst.to_vec();
    let a_tracked = alpha.is_tracked();
    let m_tracked = messages.is_tracked();
    tape.custom_op(&[alpha, messages], out.into_dyn(), move |g| {
        let g2 = g.view().into_dimensionality::<Ix2>().unwrap();
        let av = a_saved.view().into_dimensionality::<ndarray::Ix1>().unwrap();
        let mv = m_saved.view().into_dimensionality::<Ix2>().unwrap();
        let da = a_tracked.then(|| {
            let mut out = Array1::<f64>::zeros(av.len());
            for (k, &d) in dst_c.iter().enumerate() {
                out[k] = g2.row(d).dot(&mv.row(k));
            }
            out.into_dyn()
        });
        let dm = m_tracked.then(|| {
            let mut out = Array2::<f64>::zeros((av.len(), cols));
            for (k, &d) in dst_c.iter().enumerate() {
                out.row_mut(k).scaled_add(av[k], &g2.row(d));
            }
            out.into_dyn()
        });
        vec![da, dm]
    })
}

impl Encoder {
    /// Register a fresh orthogonally-initialized encoder under `prefix`.
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str) -> Self {
        let embedding = store.add(
            format!("{prefix}.embed"),
            orthogonal(rng, 3, EMBED_DIM, 1.0).into_dyn(),
        );
        let layer = |li: usize, input: usize, store: &mut ParamStore, rng: &mut ChaCha8Rng| {
            let heads = std::array::from_fn(|hi| {
                let mut w = |tag: &str, rows: usize| {
                    store.add(
                        format!("{prefix}.layer{li}.head{hi}.{tag}"),
                        orthogonal(rng, rows, HEAD_DIM, RELU_GAIN).into_dyn(),
                    )
                };
                HeadParams {
                    root: w("root", input),
                    msg: w("msg", input),
                    query: w("query", input),
                    key: w("key", input),
                    edge: w("edge", 1),
                }
            });
            LayerParams { heads }
        };
        let layers = [
            layer(0, NODE_INPUT_DIM, store, rng),
            layer(1, LAYER_DIM, store, rng),
        ];
        let proj_w = store.add(
            format!("{prefix}.proj.w"),
            orthogonal(rng, LAYER_DIM, AGG_DIM, RELU_GAIN).into_dyn(),
        );
        let proj_b = store.add(format!("{prefix}.proj.b"), zeros1(AGG_DIM).into_dyn());
        Encoder { embedding, layers, proj_w, proj_b }
    }

    /// Per-node input matrix: base features concatenated with the gathered
    /// kind embedding.
    fn node_inputs(&self, tape: &Tape, params: &BoundParams, batch: &BatchedGraphs) -> Tensor {
        let mut base = Array2::<f64>::zeros((batch.n_nodes(), NODE_BASE_DIM));
        let mut kinds = Vec::with_capacity(batch.n_nodes());
        for (r, node) in batch.nodes.iter().enumerate() {
            base.row_mut(r).assign(&ndarray::arr1(&node.base()));
            kinds.push(node.kind.index());
        }
        let base = Tensor::constant2(base);
        let embed = tape.gather_rows(params.get(self.embedding), &kinds);
        tape.concat_cols(&[&base, &embed])
    }

    fn layer_forward(
        &self,
        tape: &Tape,
        params: &BoundParams,
        layer: &LayerParams,
        x: &Tensor,
        plan: &EdgePlan,
        n_nodes: usize,
        mut attention: Option<&mut [Vec<f64>; N_HEADS]>,
    ) -> Tensor {
        let scale = 1.0 / (HEAD_DIM as f64).sqrt();
        let edge_feat = Tensor::constant2(plan.features.clone());
        let mut head_outs = Vec::with_capacity(N_HEADS);
        for (hi, head) in layer.heads.iter().enumerate() {
            let root = tape.matmul(x, params.get(head.root));
            if plan.src.is_empty() {
                head_outs.push(root);
                continue;
            }
            let query = tape.matmul(x, params.get(head.query));
            let key = tape.matmul(x, params.get(head.key));
            let msg = tape.matmul(x, params.get(head.msg));
            let edge_key = tape.matmul(&edge_feat, params.get(head.edge));
            let q_dst = tape.gather_rows(&query, &plan.dst);
            let k_src = tape.add(&tape.gather_rows(&key, &plan.src), &edge_key);
            let logits = tape.scalar_mul(&tape.sum_axis(&tape.mul(&q_dst, &k_src), 1), scale);
            let alpha = segment_softmax(tape, &logits, &plan.runs);
            if let Some(maps) = attention.as_deref_mut() {
                maps[hi] = alpha.data().iter().copied().collect();
            }
            let gathered = tape.gather_rows(&msg, &plan.src);
            let agg = weighted_scatter(tape, &alpha, &gathered, &plan.dst, n_nodes);
            head_outs.push(tape.add(&root, &agg));
        }
        let refs: Vec<&Tensor> = head_outs.iter().collect();
        tape.concat_cols(&refs)
    }

    /// Final per-node features `(total nodes, 16)` for a batched graph.
    /// When `attention` is supplied, the per-layer coefficient maps are
    /// written into it.
    pub fn forward_nodes(
        &self,
        tape: &Tape,
        params: &BoundParams,
        batch: &BatchedGraphs,
        mut attention: Option<&mut AttentionMaps>,
    ) -> Tensor {
        let plan = EdgePlan::new(batch);
        if let Some(maps) = attention.as_deref_mut() {
            maps.edges = plan.edges.clone();
            maps.per_layer = vec![std::array::from_fn(|_| Vec::new()); N_LAYERS];
        }
        let x0 = self.node_inputs(tape, params, batch);
        let layer_attn =
            |maps: &mut Option<&mut AttentionMaps>, li: usize| -> Option<*mut [Vec<f64>; N_HEADS]> {
                maps.as_deref_mut().map(|m| &mut m.per_layer[li] as *mut _)
            };
        // Raw-pointer shuffle only localizes the two mutable borrows; no
        // aliasing occurs because each layer writes a distinct slot.
        let slot0 = layer_attn(&mut attention, 0);
        let h1 = self.layer_forward(
            tape,
            params,
            &self.layers[0],
            &x0,
            &plan,
            batch.n_nodes(),
            slot0.map(|p| unsafe { &mut *p }),
        );
        let a1 = tape.relu(&h1);
        let slot1 = layer_attn(&mut attention, 1);
        let h2 = self.layer_forward(
            tape,
            params,
            &self.layers[1],
            &a1,
            &plan,
            batch.n_nodes(),
            slot1.map(|p| unsafe { &mut *p }),
        );
        tape.add_bias(&tape.matmul(&h2, params.get(self.proj_w)), params.get(self.proj_b))
    }

    /// Ego readout: one aggregation vector per graph, `(graphs, 16)`.
    pub fn ego_readout(&self, tape: &Tape, node_features: &Tensor, batch: &BatchedGraphs) -> Tensor {
        tape.gather_rows(node_features, &batch.ego_rows)
    }

    /// Value-only encoding of one state's per-agent graphs.
    pub fn encode(&self, store: &ParamStore, graphs: &[AgentGraph]) -> EncoderOutput {
        self.encode_batched(store, graphs).0
    }

    /// [`Encoder::encode`] plus the attention maps of the shared forward pass.
    pub fn encode_with_attention(
        &self,
        store: &ParamStore,
        graphs: &[AgentGraph],
    ) -> (EncoderOutput, AttentionMaps) {
        let (out, maps) = self.encode_batched_inner(store, graphs, true);
        (out, maps.expect("attention requested"))
    }

    fn encode_batched(&self, store: &ParamStore, graphs: &[AgentGraph]) -> (EncoderOutput, ()) {
        (self.encode_batched_inner(store, graphs, false).0, ())
    }

    fn encode_batched_inner(
        &self,
        store: &ParamStore,
        graphs: &[AgentGraph],
        want_attention: bool,
    ) -> (EncoderOutput, Option<AttentionMaps>) {
        let tape = Tape::new();
        let params = store.bind_constants();
        let batch = batch_graphs(graphs);
        let mut maps = want_attention
            .then(|| AttentionMaps { edges: Vec::new(), per_layer: Vec::new() });
        let nodes = self.forward_nodes(&tape, &params, &batch, maps.as_mut());
        let ego = self.ego_readout(&tape, &nodes, &batch);
        let x_agg = ego.data().view().into_dimensionality::<Ix2>().unwrap().to_owned();
        let pooled = global_mean_pool(&x_agg);
        (EncoderOutput { x_agg, pooled }, maps)
    }
}

/// Elementwise mean of the rows: the size-independent team summary.
pub fn global_mean_pool(x_agg: &Array2<f64>) -> Array1<f64> {
    assert!(x_agg.nrows() > 0, "global_mean_pool: no rows");
    let mut out = Array1::<f64>::zeros(x_agg.ncols());
    for row in x_agg.rows() {
        out += &row;
    }
    out / x_agg.nrows() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obsgraph::{build_all_graphs, build_graph, unbatch_graphs};
    use crate::tensor::gradcheck;
    use crate::world::{reset, ObstacleCount, WorldConfig, WorldState};
    use rand::SeedableRng;

    fn new_encoder(seed: u64) -> (ParamStore, Encoder) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc = Encoder::new(&mut store, &mut rng, "enc");
        (store, enc)
    }

    fn state(seed: u64, n_agents: usize, n_obstacles: usize) -> (WorldConfig, WorldState) {
        let cfg = WorldConfig {
            n_agents,
            n_obstacles: ObstacleCount::Fixed(n_obstacles),
            ..WorldConfig::default()
        };
        let s = reset(&cfg, seed).unwrap();
        (cfg, s)
    }

    /// Loop-based re-implementation of the encoder on one graph: explicit
    /// per-node, per-head evaluation of the layer equations, no batching, no
    /// shared code with the module under test.
    fn reference_encode(store: &ParamStore, enc: &Encoder, graph: &AgentGraph) -> Vec<f64> {
        let get = |id: ParamId| {
            store.values[id.0].view().into_dimensionality::<Ix2>().unwrap().to_owned()
        };
        let getv = |id: ParamId| {
            store.values[id.0].view().into_dimensionality::<ndarray::Ix1>().unwrap().to_owned()
        };
        let n = graph.nodes.len();
        // Node inputs.
        let mut x: Vec<Vec<f64>> = Vec::new();
        let embed = get(enc.embedding);
        for node in &graph.nodes {
            let mut row: Vec<f64> = node.base().to_vec();
            row.extend(embed.row(node.kind.index()).iter());
            x.push(row);
        }
        let matvec = |w: &Array2<f64>, v: &[f64]| -> Vec<f64> {
            (0..w.ncols()).map(|c| (0..w.nrows()).map(|r| v[r] * w[[r, c]]).sum()).collect()
        };
        let mut current = x;
        for (li, layer) in enc.layers.iter().enumerate() {
            let mut next: Vec<Vec<f64>> = vec![Vec::new(); n];
            for head in &layer.heads {
                let (wr, wm, wq, wk) =
                    (get(head.root), get(head.msg), get(head.query), get(head.key));
                let we = get(head.edge);
                for i in 0..n {
                    let mut out = matvec(&wr, &current[i]);
                    // In-neighbors of i with their edge features.
                    let nbrs: Vec<(usize, f64)> = graph
                        .edges
                        .iter()
                        .zip(&graph.edge_feature)
                        .filter(|((_, d), _)| *d == i)
                        .map(|((s, _), &e)| (*s, e))
                        .collect();
                    if !nbrs.is_empty() {
                        let q = matvec(&wq, &current[i]);
                        let logits: Vec<f64> = nbrs
                            .iter()
                            .map(|&(j, e)| {
                                let k = matvec(&wk, &current[j]);
                                let score: f64 = (0..HEAD_DIM)
                                    .map(|c| q[c] * (k[c] + e * we[[0, c]]))
                                    .sum();
                                score / (HEAD_DIM as f64).sqrt()
                            })
                            .collect();
                        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
                        let total: f64 = exps.iter().sum();
                        for (idx, &(j, _)) in nbrs.iter().enumerate() {
                            let alpha = exps[idx] / total;
                            let m = matvec(&wm, &current[j]);
                            for c in 0..HEAD_DIM {
                                out[c] += alpha * m[c];
                            }
                        }
                    }
                    next[i].extend(out);
                }
            }
            if li == 0 {
                for row in next.iter_mut() {
                    for v in row.iter_mut() {
                        *v = v.max(0.0);
                    }
                }
            }
            current = next;
        }
        let pw = get(enc.proj_w);
        let pb = getv(enc.proj_b);
        let h = &current[graph.ego_index];
        (0..AGG_DIM).map(|c| pb[c] + (0..LAYER_DIM).map(|r| h[r] * pw[[r, c]]).sum::<f64>()).collect()
    }

    #[test]
    fn matches_loop_oracle_on_random_graphs() {
        let (store, enc) = new_encoder(0);
        for seed in 0..5 {
            let (cfg, s) = state(seed, 3, 3);
            for ego in 0..cfg.n_agents {
                let g = build_graph(&s, ego, 1.0);
                let out = enc.encode(&store, &[g.clone()]);
                let want = reference_encode(&store, &enc, &g);
                for c in 0..AGG_DIM {
                    assert!(
                        (out.x_agg[[0, c]] - want[c]).abs() <= 1e-10,
                        "seed {seed} ego {ego} channel {c}: {} vs {}",
                        out.x_agg[[0, c]],
                        want[c]
                    );
                }
            }
        }
    }

    #[test]
    fn attention_sums_to_one_per_destination_and_head() {
        let (store, enc) = new_encoder(1);
        let (_, s) = state(7, 4, 4);
        let graphs = build_all_graphs(&s, 1.0);
        let (_, maps) = enc.encode_with_attention(&store, &graphs);
        assert!(!maps.edges.is_empty());
        for layer in &maps.per_layer {
            for head in layer {
                let mut sums: std::collections::HashMap<usize, f64> = Default::default();
                for (k, &(_, d)) in maps.edges.iter().enumerate() {
                    *sums.entry(d).or_default() += head[k];
                    assert!(head[k] >= 0.0);
                }
                assert!(!sums.is_empty());
                for (&d, &sum) in &sums {
                    assert!((sum - 1.0).abs() <= 1e-9, "destination {d}: sum {sum}");
                }
            }
        }
    }

    #[test]
    fn attention_degenerate_neighborhoods() {
        // One agent, one obstacle in radius: the single coefficient is 1.
        let (store, enc) = new_encoder(2);
        let (_, mut s) = state(3, 1, 2);
        s.positions[0] = [0.0, 0.0];
        s.positions[1] = [5.0, 5.0]; // goal out of radius
        s.positions[2] = [0.3, 0.0];
        s.positions[3] = [7.0, -7.0];
        let g = build_graph(&s, 0, 1.0);
        assert_eq!(g.edges, vec![(2, 0)]);
        let (_, maps) = enc.encode_with_attention(&store, &[g]);
        for layer in &maps.per_layer {
            for head in layer {
                assert_eq!(head.len(), 1);
                assert!((head[0] - 1.0).abs() <= 1e-12);
            }
        }

        // Two obstacles stacked at the same point: identical features and
        // distances, so each gets exactly half the attention.
        s.positions[2] = [0.3, 0.0];
        s.positions[3] = [0.3, 0.0];
        let g = build_graph(&s, 0, 1.0);
        assert_eq!(g.edges.len(), 2);
        let (_, maps) = enc.encode_with_attention(&store, &[g]);
        for layer in &maps.per_layer {
            for head in layer {
                assert!((head[0] - 0.5).abs() <= 1e-12);
                assert!((head[1] - 0.5).abs() <= 1e-12);
            }
        }
    }

    /// Apply a node permutation to a graph (ego tracked through it).
    fn permute(graph: &AgentGraph, perm: &[usize]) -> AgentGraph {
        // perm[old] = new index.
        let mut nodes = vec![graph.nodes[0]; graph.nodes.len()];
        for (old, &new) in perm.iter().enumerate() {
            nodes[new] = graph.nodes[old];
        }
        let edges: Vec<(usize, usize)> =
            graph.edges.iter().map(|&(s, d)| (perm[s], perm[d])).collect();
        AgentGraph {
            nodes,
            edges,
            edge_feature: graph.edge_feature.clone(),
            ego_index: perm[graph.ego_index],
        }
    }

    #[test]
    fn permutation_of_node_order_leaves_outputs_unchanged() {
        let (store, enc) = new_encoder(3);
        let (cfg, s) = state(11, 3, 4);
        let graphs = build_all_graphs(&s, 1.0);
        let base = enc.encode(&store, &graphs);
        // Reverse and a rotated permutation, applied to every graph.
        let n = graphs[0].nodes.len();
        let reversed: Vec<usize> = (0..n).rev().collect();
        let rotated: Vec<usize> = (0..n).map(|i| (i + 3) % n).collect();
        for perm in [reversed, rotated] {
            let permuted: Vec<AgentGraph> = graphs.iter().map(|g| permute(g, &perm)).collect();
            let out = enc.encode(&store, &permuted);
            for i in 0..cfg.n_agents {
                for c in 0..AGG_DIM {
                    assert!(
                        (out.x_agg[[i, c]] - base.x_agg[[i, c]]).abs() <= 1e-10,
                        "agent {i} channel {c}"
                    );
                }
            }
            for c in 0..AGG_DIM {
                assert!((out.pooled[c] - base.pooled[c]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn information_respects_the_two_hop_receptive_field() {
        let (store, enc) = new_encoder(4);
        // Chain: ego agent 0 — agent 1 — agent 2 — obstacle 6, spaced at
        // exactly the sensing radius; goals moved far away.
        let (_, mut s) = state(5, 3, 1);
        s.positions[0] = [0.0, 0.0];
        s.positions[1] = [0.5, 0.0];
        s.positions[2] = [1.0, 0.0];
        s.positions[3] = [8.0, 8.0];
        s.positions[4] = [8.0, -8.0];
        s.positions[5] = [-8.0, 8.0];
        s.positions[6] = [1.5, 0.0];
        let rho = 0.5;
        let g = build_graph(&s, 0, rho);
        // Sanity: obstacle 6 reaches only agent 2; ego hears agent 1 only.
        assert!(g.edges.contains(&(6, 2)));
        assert!(!g.edges.contains(&(6, 1)) && !g.edges.contains(&(6, 0)));
        let base = enc.encode(&store, &[g.clone()]);

        // Two hops away (agent 2, heard via agent 1): must influence ego.
        let mut two_hop = g.clone();
        two_hop.nodes[2].rel_v[0] += 0.25;
        let out = enc.encode(&store, &[two_hop]);
        let delta: f64 =
            (0..AGG_DIM).map(|c| (out.x_agg[[0, c]] - base.x_agg[[0, c]]).abs()).sum();
        assert!(delta > 1e-8, "two-hop perturbation had no effect (delta {delta})");

        // Three hops away (the obstacle): no path in two layers.
        let mut three_hop = g.clone();
        three_hop.nodes[6].rel_v[0] += 0.25;
        three_hop.nodes[6].rel_p[1] += 0.25;
        let out = enc.encode(&store, &[three_hop]);
        for c in 0..AGG_DIM {
            assert_eq!(out.x_agg[[0, c]].to_bits(), base.x_agg[[0, c]].to_bits());
        }
    }

    #[test]
    fn isolated_ego_depends_only_on_its_own_features() {
        let (store, enc) = new_encoder(5);
        let (_, mut s) = state(6, 1, 2);
        s.positions[0] = [0.1, -0.2];
        s.velocities[0] = [0.3, 0.4];
        s.positions[1] = [5.0, 5.0];
        s.positions[2] = [4.0, -4.0];
        s.positions[3] = [-4.0, 4.0];
        let a = enc.encode(&store, &[build_graph(&s, 0, 0.4)]);
        // Move the unseen entities while preserving their own relative-goal
        // identity; the isolated ego must not notice.
        s.positions[2] = [-6.0, -6.0];
        s.positions[3] = [6.0, 6.0];
        let b = enc.encode(&store, &[build_graph(&s, 0, 0.4)]);
        assert_eq!(a.x_agg, b.x_agg);
    }

    #[test]
    fn zero_message_weights_ignore_neighbors() {
        let (mut store, enc) = new_encoder(6);
        for layer in &enc.layers {
            for head in &layer.heads {
                store.values[head.msg.0].fill(0.0);
            }
        }
        let (_, mut s) = state(9, 2, 1);
        s.positions[0] = [0.0, 0.0];
        s.velocities[0] = [0.1, 0.1];
        s.positions[1] = [0.3, 0.0];
        let a = enc.encode(&store, &[build_graph(&s, 0, 1.0)]);
        // Change the neighbor's velocity (its node features and nothing else).
        s.velocities[1] = [-0.7, 0.2];
        let b = enc.encode(&store, &[build_graph(&s, 0, 1.0)]);
        for c in 0..AGG_DIM {
            assert!((a.x_agg[[0, c]] - b.x_agg[[0, c]]).abs() <= 1e-12);
        }
    }

    #[test]
    fn batched_forward_equals_sequential() {
        let (store, enc) = new_encoder(7);
        let mut all = Vec::new();
        for seed in 0..4 {
            let (_, s) = state(20 + seed, 3, 3);
            all.extend(build_all_graphs(&s, 1.0));
        }
        let batched = enc.encode(&store, &all);
        for (i, g) in all.iter().enumerate() {
            let single = enc.encode(&store, std::slice::from_ref(g));
            for c in 0..AGG_DIM {
                assert!(
                    (batched.x_agg[[i, c]] - single.x_agg[[0, c]]).abs() <= 1e-12,
                    "graph {i} channel {c}"
                );
            }
        }
        // Round-trip sanity for the batching plumbing itself.
        let b = batch_graphs(&all);
        assert_eq!(unbatch_graphs(&b), all);
    }

    #[test]
    fn pooled_vector_is_the_row_mean() {
        let (store, enc) = new_encoder(8);
        let (_, s) = state(30, 3, 2);
        let graphs = build_all_graphs(&s, 1.0);
        let out = enc.encode(&store, &graphs);
        for c in 0..AGG_DIM {
            let mean = (0..3).map(|i| out.x_agg[[i, c]]).sum::<f64>() / 3.0;
            assert!((out.pooled[c] - mean).abs() <= 1e-12);
        }
        // Duplicated identical graphs: pooled equals the single readout.
        let dup = vec![graphs[0].clone(); 4];
        let out = enc.encode(&store, &dup);
        for c in 0..AGG_DIM {
            assert!((out.pooled[c] - out.x_agg[[0, c]]).abs() <= 1e-12);
        }

        // Direct pool oracle: identity at one row, zero for v and −v.
        let one = Array2::from_shape_fn((1, 4), |(_, c)| c as f64);
        assert_eq!(global_mean_pool(&one), ndarray::arr1(&[0.0, 1.0, 2.0, 3.0]));
        let v = ndarray::arr2(&[[1.0, -2.0, 3.0], [-1.0, 2.0, -3.0]]);
        assert_eq!(global_mean_pool(&v), ndarray::arr1(&[0.0, 0.0, 0.0]));
        let r = ndarray::arr2(&[[1.0, 2.0], [5.0, -4.0], [0.0, 8.0]]);
        assert_eq!(global_mean_pool(&r), ndarray::arr1(&[2.0, 2.0]));
    }

    #[test]
    fn output_width_is_independent_of_world_size() {
        let (store, enc) = new_encoder(9);
        for (agents, obstacles) in [(1usize, 0usize), (5, 5), (15, 20), (2, 46)] {
            let cfg = WorldConfig {
                n_agents: agents,
                n_obstacles: ObstacleCount::Fixed(obstacles),
                half_extent: 4.0, // room for the largest worlds
                ..WorldConfig::default()
            };
            let s = reset(&cfg, 40).unwrap();
            assert!(s.n_entities() <= 50);
            let out = enc.encode(&store, &build_all_graphs(&s, 1.0));
            assert_eq!(out.x_agg.shape(), &[agents, AGG_DIM]);
            assert_eq!(out.pooled.len(), AGG_DIM);
        }
    }

    #[test]
    fn encoding_is_deterministic() {
        let (store, enc) = new_encoder(10);
        let (_, s) = state(50, 3, 3);
        let graphs = build_all_graphs(&s, 1.0);
        let a = enc.encode(&store, &graphs);
        let b = enc.encode(&store, &graphs);
        assert_eq!(a.x_agg, b.x_agg);
        assert_eq!(a.pooled, b.pooled);
    }

    #[test]
    fn gradients_match_finite_differences_end_to_end() {
        let (store, enc) = new_encoder(11);
        let (_, s) = state(60, 2, 1);
        let graphs = build_all_graphs(&s, 1.0);
        let batch = batch_graphs(&graphs);
        assert!(!batch.edges.is_empty());
        // Fixed random projection makes the scalar objective sensitive to
        // every output channel.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let weights = crate::tensor::init::normal(&mut rng, &[2 * AGG_DIM], 1.0);
        // Probe a deterministic sample of coordinates in every parameter
        // array; the full sweep over ~12k parameters costs minutes without
        // adding coverage beyond the per-operator exhaustive checks.
        let report = gradcheck::check_sampled(&store.values, gradcheck::DEFAULT_STEP, 12, 0x9e, |tape, leaves| {
            let params = BoundParams::from_tensors(leaves.to_vec());
            let nodes = enc.forward_nodes(tape, &params, &batch, None);
            let ego = enc.ego_readout(tape, &nodes, &batch);
            let pooled = tape.mean_pool_rows(&ego, batch.n_graphs());
            let both = tape.concat_cols(&[&ego, &tape.gather_rows(&pooled, &[0, 0])]);
            let w = Tensor::constant(
                weights
                    .view()
                    .to_shape((1, 2 * AGG_DIM))
                    .unwrap()
                    .to_owned()
                    .into_dyn(),
            );
            let scored = tape.mul(&both, &tape.gather_rows(&w, &vec![0; 2]));
            tape.sum(&scored)
        });
        assert!(
            report.max_rel_err < 1e-4,
            "worst {:?} rel err {}",
            report.worst_element,
            report.max_rel_err
        );
    }
}
