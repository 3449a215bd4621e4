//! One layer of multi-head heterogeneous graph attention.
//!
//! Over a fully connected graph with node features `x_i` and ordered edge
//! features `e_ij` (self-edges included), each head `h` scores
//!
//! ```text
//! g_ij = leaky_relu(a_s . f_s(x_i) + a_t . f_t(x_j) + a_e . f_e(e_ij))
//! ```
//!
//! which is the head's scoring vector applied to the concatenation
//! `[f_s(x_i), f_t(x_j), f_e(e_ij)]`. Source, target and edge features
//! each get their own projection. Rows are softmax-normalized into
//! `alpha_ij`, and the update is
//!
//! ```text
//! x'_i = x_i + 1/H sum_h sum_j alpha^h_ij f_m([x_i, x_j, e_ij])
//! ```
//!
//! with a message MLP `f_m` shared across heads.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numeric::{BoundParams, Graph, Linear, NumericError, ParamId, ParamSet, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MhGatConfig {
    pub dim: usize,
    pub edge_dim: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub message_hidden: usize,
    pub leaky_slope: f64,
}

impl MhGatConfig {
    pub fn new(dim: usize, heads: usize) -> Self {
        Self {
            dim,
            edge_dim: dim,
            heads,
            head_dim: (dim / heads).max(1),
            message_hidden: dim,
            leaky_slope: 0.2,
        }
    }
}

impl Default for MhGatConfig {
    fn default() -> Self {
        Self::new(32, 4)
    }
}

/// Dense fully connected graph. `edges` row `i * n + j` holds `e_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGraph {
    pub nodes: Tensor,
    pub edges: Tensor,
}

impl SceneGraph {
    pub fn new(nodes: Tensor, edges: Tensor) -> Result<Self, NumericError> {
        let n = nodes.rows();
        if nodes.shape().len() != 2 || edges.shape().len() != 2 || edges.rows() != n * n {
            return Err(NumericError::ShapeMismatch {
                op: "scene_graph",
                left: nodes.shape().to_vec(),
                right: edges.shape().to_vec(),
            });
        }
        Ok(Self { nodes, edges })
    }

    pub fn len(&self) -> usize {
        self.nodes.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Graph with nodes reordered so that new node `k` is old node `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<SceneGraph, NumericError> {
        let n = self.len();
        let nodes = self.nodes.gather_rows(perm)?;
        let mut idx = Vec::with_capacity(n * n);
        for &i in perm {
            for &j in perm {
                idx.push(i * n + j);
            }
        }
        SceneGraph::new(nodes, self.edges.gather_rows(&idx)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionHead {
    pub source: Linear,
    pub target: Linear,
    pub edge: Linear,
    pub score_source: ParamId,
    pub score_target: ParamId,
    pub score_edge: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MhGat {
    pub config: MhGatConfig,
    pub heads: Vec<AttentionHead>,
    pub message_in: Linear,
    pub message_out: Linear,
}

/// Recorded outputs of one forward pass.
#[derive(Debug, Clone)]
pub struct MhGatOutput {
    pub nodes: Var,
    /// one `[n x n]` row-stochastic matrix per head
    pub attention: Vec<Var>,
}

fn pair_indices(n: usize) -> (Vec<usize>, Vec<usize>) {
    let mut src = Vec::with_capacity(n * n);
    let mut dst = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            src.push(i);
            dst.push(j);
        }
    }
    (src, dst)
}

impl MhGat {
    pub fn init<R: Rng>(params: &mut ParamSet, name: &str, config: MhGatConfig, rng: &mut R) -> Self {
        let scoring = |params: &mut ParamSet, label: &str, rng: &mut R| {
            let std = 1.0 / (config.head_dim as f64).sqrt();
            let v = (0..config.head_dim)
                .map(|_| std * (2.0 * rng.random::<f64>() - 1.0))
                .collect();
            params.add(
                format!("{name}.{label}"),
                Tensor::matrix(config.head_dim, 1, v).expect("shape"),
            )
        };
        let heads = (0..config.heads)
            .map(|h| AttentionHead {
                source: Linear::init(params, &format!("{name}.head{h}.source"), config.dim, config.head_dim, rng),
                target: Linear::init(params, &format!("{name}.head{h}.target"), config.dim, config.head_dim, rng),
                edge: Linear::init(params, &format!("{name}.head{h}.edge"), config.edge_dim, config.head_dim, rng),
                score_source: scoring(params, &format!("head{h}.score_source"), rng),
                score_target: scoring(params, &format!("head{h}.score_target"), rng),
                score_edge: scoring(params, &format!("head{h}.score_edge"), rng),
            })
            .collect();
        let message_in = Linear::init(
            params,
            &format!("{name}.message.0"),
            2 * config.dim + config.edge_dim,
            config.message_hidden,
            rng,
        );
        let message_out = Linear::init(
            params,
            &format!("{name}.message.1"),
            config.message_hidden,
            config.dim,
            rng,
        );
        Self {
            config,
            heads,
            message_in,
            message_out,
        }
    }

    /// Records the layer on `g`. `x: [n x dim]`, `e: [n*n x edge_dim]`.
    pub fn forward(
        &self,
        g: &mut Graph,
        bound: &BoundParams,
        x: Var,
        e: Var,
    ) -> Result<MhGatOutput, NumericError> {
        let n = g.value(x).rows();
        if g.value(e).rows() != n * n {
            return Err(NumericError::ShapeMismatch {
                op: "mhgat",
                left: g.value(x).shape().to_vec(),
                right: g.value(e).shape().to_vec(),
            });
        }
        let (src, dst) = pair_indices(n);

        let mut attention = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let s = head.source.forward(g, bound, x)?;
            let t = head.target.forward(g, bound, x)?;
            let ed = head.edge.forward(g, bound, e)?;
            let s_score = g.matmul(s, bound.var(head.score_source))?;
            let t_score = g.matmul(t, bound.var(head.score_target))?;
            let e_score = g.matmul(ed, bound.var(head.score_edge))?;
            let s_pairs = g.gather_rows(s_score, &src)?;
            let t_pairs = g.gather_rows(t_score, &dst)?;
            let logits = g.add(s_pairs, t_pairs)?;
            let logits = g.add(logits, e_score)?;
            let logits = g.leaky_relu(logits, self.config.leaky_slope);
            let logits = g.reshape(logits, &[n, n])?;
            attention.push(g.softmax(logits));
        }

        let xi = g.gather_rows(x, &src)?;
        let xj = g.gather_rows(x, &dst)?;
        let triple = g.concat_cols(&[xi, xj, e])?;
        let hidden = self.message_in.forward(g, bound, triple)?;
        let hidden = g.relu(hidden);
        let messages = self.message_out.forward(g, bound, hidden)?;

        // every head aggregates the same messages, so average attention first
        let mut alpha = attention[0];
        for &a in &attention[1..] {
            alpha = g.add(alpha, a)?;
        }
        let alpha = g.scale(alpha, 1.0 / self.heads.len() as f64);
        let update = g.pair_aggregate(alpha, messages)?;
        let nodes = g.add(x, update)?;
        Ok(MhGatOutput { nodes, attention })
    }

    pub fn zero_messages(&self, params: &mut ParamSet) {
        self.message_in.zero(params);
        self.message_out.zero(params);
    }
}

fn run(params: &ParamSet, layer: &MhGat, graph: &SceneGraph) -> Result<(Graph, MhGatOutput), NumericError> {
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let x = g.constant(graph.nodes.clone());
    let e = g.constant(graph.edges.clone());
    let out = layer.forward(&mut g, &bound, x, e)?;
    Ok((g, out))
}

/// Per-head attention matrices `[n x n]`.
pub fn attention(params: &ParamSet, layer: &MhGat, graph: &SceneGraph) -> Result<Vec<Tensor>, NumericError> {
    let (g, out) = run(params, layer, graph)?;
    Ok(out.attention.iter().map(|&a| g.value(a).clone()).collect())
}

/// Updated node features `[n x dim]`.
pub fn message_pass(params: &ParamSet, layer: &MhGat, graph: &SceneGraph) -> Result<Tensor, NumericError> {
    let (g, out) = run(params, layer, graph)?;
    Ok(g.value(out.nodes).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_graph(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> SceneGraph {
        let mut v = |len: usize| -> Vec<f64> { (0..len).map(|_| StandardNormal.sample(rng)).collect() };
        SceneGraph::new(
            Tensor::matrix(n, dim, v(n * dim)).unwrap(),
            Tensor::matrix(n * n, dim, v(n * n * dim)).unwrap(),
        )
        .unwrap()
    }

    fn layer(dim: usize, heads: usize, seed: u64) -> (ParamSet, MhGat) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        let l = MhGat::init(&mut ps, "gat", MhGatConfig::new(dim, heads), &mut rng);
        (ps, l)
    }

    #[test]
    fn single_node_attends_to_itself() {
        let (ps, l) = layer(6, 3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let att = attention(&ps, &l, &random_graph(1, 6, &mut rng)).unwrap();
        assert_eq!(att.len(), 3);
        for a in att {
            assert_eq!(a.data(), &[1.0]);
        }
    }

    #[test]
    fn zero_scoring_gives_uniform_attention() {
        let (mut ps, l) = layer(4, 2, 3);
        for h in &l.heads {
            for id in [h.score_source, h.score_target, h.score_edge] {
                ps.get_mut(id).data_mut().fill(0.0);
            }
        }
        let row = [0.3, -0.1, 0.7, 0.2];
        let nodes = Tensor::matrix(2, 4, [row, row].concat()).unwrap();
        let edges = Tensor::filled(&[4, 4], 0.5);
        let g = SceneGraph::new(nodes, edges).unwrap();
        for a in attention(&ps, &l, &g).unwrap() {
            assert!(a.data().iter().all(|&v| v == 0.5));
        }
    }

    #[test]
    fn rows_are_stochastic() {
        let (ps, l) = layer(8, 4, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for a in attention(&ps, &l, &random_graph(4, 8, &mut rng)).unwrap() {
            for i in 0..4 {
                let row = a.row(i);
                assert!(row.iter().all(|&v| v >= 0.0));
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_messages_are_identity() {
        let (mut ps, l) = layer(8, 4, 7);
        l.zero_messages(&mut ps);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = random_graph(5, 8, &mut rng);
        assert_eq!(message_pass(&ps, &l, &g).unwrap(), g.nodes);
    }

    #[test]
    fn constant_message_on_single_node() {
        let (mut ps, l) = layer(4, 2, 9);
        l.zero_messages(&mut ps);
        let c = [0.5, -1.0, 2.0, 0.25];
        ps.get_mut(l.message_out.bias).data_mut().copy_from_slice(&c);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let g = random_graph(1, 4, &mut rng);
        let out = message_pass(&ps, &l, &g).unwrap();
        for (k, ck) in c.iter().enumerate() {
            assert_eq!(out.data()[k], g.nodes.data()[k] + ck);
        }
    }

    #[test]
    fn heads_are_heterogeneous() {
        // f_s != f_t means swapping roles changes the score.
        let (ps, l) = layer(6, 1, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let g = random_graph(2, 6, &mut rng);
        let a = &attention(&ps, &l, &g).unwrap()[0];
        assert!((a.data()[1] - a.data()[2]).abs() > 1e-6, "{a:?}");
    }

    #[test]
    fn permutation_equivariance() {
        let (ps, l) = layer(8, 4, 13);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let g = random_graph(5, 8, &mut rng);
        let perm = [3, 0, 4, 1, 2];
        let out = message_pass(&ps, &l, &g).unwrap();
        let out_p = message_pass(&ps, &l, &g.permuted(&perm).unwrap()).unwrap();
        let expect = out.gather_rows(&perm).unwrap();
        for (a, b) in out_p.data().iter().zip(expect.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn edge_count_must_be_square() {
        assert!(SceneGraph::new(Tensor::zeros(&[3, 2]), Tensor::zeros(&[8, 2])).is_err());
    }
}
