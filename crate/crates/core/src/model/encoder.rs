use std::collections::HashMap;

use rand::Rng;

use super::Network;
use crate::error::{Error, Result};
use crate::graph::{KigGraph, NodeId};
use crate::numeric::{ParamRef, ParamStore, Tape, Var};
use crate::sampler::sample_subtree;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// Tape handles for one encoder layer.
#[derive(Debug, Clone, Copy)]
pub struct LayerVars {
    /// Row-major `dim x dim`.
    pub weight: Var,
    pub bias: Var,
    pub dim: usize,
    /// GAT only: attention weights for the center half, the neighbor half,
    /// and the scalar attention bias.
    pub attention: Option<(Var, Var, Var)>,
}

impl LayerVars {
    pub fn record(net: &Network, params: &ParamStore, tape: &mut Tape, layer: usize) -> Self {
        let ids = net.layers[layer];
        let dim = net.config.dim;
        let attention = ids.attention.map(|(a, b)| {
            let center = tape.param(params, ParamRef { id: a, offset: 0, len: dim });
            let nbr = tape.param(params, ParamRef { id: a, offset: dim, len: dim });
            let bias = tape.param(params, params.whole(b));
            (center, nbr, bias)
        });
        LayerVars {
            weight: tape.param(params, params.whole(ids.weight)),
            bias: tape.param(params, params.whole(ids.bias)),
            dim,
            attention,
        }
    }
}

fn finish(tape: &mut Tape, layer: &LayerVars, aggregated: Var, act: Activation) -> Var {
    let h = tape.matvec(layer.weight, aggregated, layer.dim, layer.dim);
    let h = tape.add(h, layer.bias);
    match act {
        Activation::Relu => tape.relu(h),
        Activation::Identity => h,
    }
}

fn check_neighbors(tape: &Tape, layer: &LayerVars, neighbors: &[Var]) -> Result<()> {
    if neighbors.is_empty() {
        return Err(Error::Empty("encoder neighborhood"));
    }
    for n in neighbors {
        if tape.value(*n).len() != layer.dim {
            return Err(Error::Shape(format!(
                "neighbor vector has length {}, layer expects {}",
                tape.value(*n).len(),
                layer.dim
            )));
        }
    }
    Ok(())
}

/// `act(W * mean(neighbors) + b)`.
pub fn gcn_layer(tape: &mut Tape, layer: &LayerVars, neighbors: &[Var], act: Activation) -> Result<Var> {
    check_neighbors(tape, layer, neighbors)?;
    let mean = tape.mean(neighbors);
    Ok(finish(tape, layer, mean, act))
}

/// Single-head graph attention:
/// `alpha_j = softmax_j(LeakyReLU(a_c . x_center + a_n . x_j + b_a))`, then
/// `act(W * sum_j alpha_j x_j + b)`.
pub fn gat_layer(tape: &mut Tape, layer: &LayerVars, center: Var, neighbors: &[Var], act: Activation) -> Result<Var> {
    check_neighbors(tape, layer, neighbors)?;
    let (a_center, a_nbr, a_bias) = layer
        .attention
        .ok_or_else(|| Error::invalid("gat_layer needs attention parameters"))?;
    if tape.value(center).len() != layer.dim {
        return Err(Error::Shape("center vector length".into()));
    }
    let c = tape.dot(a_center, center);
    let c = tape.add(c, a_bias);
    let scores: Vec<Var> = neighbors.iter().map(|&x| tape.dot(a_nbr, x)).collect();
    let scores = tape.concat(&scores);
    let scores = tape.add_scalar(scores, c);
    let scores = tape.leaky_relu(scores);
    let alpha = tape.softmax(scores);
    let agg = tape.weighted_sum(alpha, neighbors);
    Ok(finish(tape, layer, agg, act))
}

/// Per-forward encoding state: recorded layer parameters and embedding
/// leaves shared across every node encoded in one pass.
pub(crate) struct EncodeCtx {
    layers: Vec<LayerVars>,
    leaves: HashMap<NodeId, Var>,
}

impl EncodeCtx {
    pub(crate) fn new(net: &Network, params: &ParamStore, tape: &mut Tape) -> Self {
        let layers = (0..net.config.depth()).map(|l| LayerVars::record(net, params, tape, l)).collect();
        EncodeCtx {
            layers,
            leaves: HashMap::new(),
        }
    }

    fn leaf(&mut self, net: &Network, params: &ParamStore, tape: &mut Tape, node: NodeId) -> Var {
        *self
            .leaves
            .entry(node)
            .or_insert_with(|| tape.param(params, params.row(net.embedding, node.index())))
    }
}

/// Encodes one node: its embedding row without an encoder, otherwise the
/// configured GCN/GAT stack applied bottom-up over a freshly sampled,
/// self-inclusive subtree. ReLU separates layers; the last layer is linear.
pub fn encode<R: Rng + ?Sized>(
    net: &Network,
    params: &ParamStore,
    tape: &mut Tape,
    graph: &KigGraph,
    node: NodeId,
    rng: &mut R,
) -> Result<Var> {
    let mut ctx = EncodeCtx::new(net, params, tape);
    encode_with(net, params, tape, graph, node, &mut ctx, rng)
}

pub(crate) fn encode_with<R: Rng + ?Sized>(
    net: &Network,
    params: &ParamStore,
    tape: &mut Tape,
    graph: &KigGraph,
    node: NodeId,
    ctx: &mut EncodeCtx,
    rng: &mut R,
) -> Result<Var> {
    if !graph.contains(node) || node.index() >= params.get(net.embedding).shape[0] {
        return Err(Error::UnknownNode(format!("node index {}", node.0)));
    }
    let depth = net.config.depth();
    if depth == 0 {
        return Ok(ctx.leaf(net, params, tape, node));
    }
    let ks = vec![net.config.encoder_neighbors; depth];
    let tree = sample_subtree(graph, node, &ks, true, rng)?;
    if tree.hops() < depth {
        return Err(Error::invalid("subtree shallower than encoder"));
    }

    // reps for the deepest level are raw embeddings
    let mut reps: Vec<Var> = tree.layers[depth].iter().map(|&n| ctx.leaf(net, params, tape, n)).collect();
    for level in (0..depth).rev() {
        let layer_index = depth - level - 1;
        let layer = ctx.layers[layer_index];
        let act = if layer_index + 1 == depth {
            Activation::Identity
        } else {
            Activation::Relu
        };
        let k = tree.ks[level];
        let mut next = Vec::with_capacity(tree.layers[level].len());
        for pos in 0..tree.layers[level].len() {
            let children = &reps[pos * k..(pos + 1) * k];
            let out = match layer.attention {
                // slot 0 of a self-inclusive draw is the node itself
                Some(_) => gat_layer(tape, &layer, children[0], children, act)?,
                None => gcn_layer(tape, &layer, children, act)?,
            };
            next.push(out);
        }
        reps = next;
    }
    debug_assert_eq!(reps.len(), 1);
    Ok(reps[0])
}
