//! Fixed-size neighbor sampling.
//!
//! Every draw has exactly `k` entries. With `include_self` the center takes
//! slot 0 and the remaining `k - 1` slots are drawn from its neighbors. When
//! a node has at least as many neighbors as free slots the draw is uniform
//! without replacement; smaller neighborhoods are taken whole and padded by
//! uniform draws with replacement; isolated nodes are padded with the center.

use rand::seq::index::sample as sample_indices;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{KigGraph, NodeId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborDraw {
    pub center: NodeId,
    pub sampled: Vec<NodeId>,
    pub includes_self: bool,
}

pub fn sample_neighbors<R: Rng + ?Sized>(
    graph: &KigGraph,
    center: NodeId,
    k: usize,
    include_self: bool,
    rng: &mut R,
) -> Result<NeighborDraw> {
    if k == 0 {
        return Err(Error::invalid("neighbor sample size must be at least 1"));
    }
    if !graph.contains(center) {
        return Err(Error::UnknownNode(format!("node index {}", center.0)));
    }
    let mut sampled = Vec::with_capacity(k);
    if include_self {
        sampled.push(center);
    }
    let free = k - sampled.len();
    let nbrs = graph.neighbors(center);
    if nbrs.is_empty() {
        sampled.resize(k, center);
    } else if nbrs.len() >= free {
        for i in sample_indices(rng, nbrs.len(), free) {
            sampled.push(NodeId(nbrs[i]));
        }
    } else {
        sampled.extend(nbrs.iter().map(|&n| NodeId(n)));
        while sampled.len() < k {
            sampled.push(NodeId(nbrs[rng.gen_range(0..nbrs.len())]));
        }
    }
    Ok(NeighborDraw {
        center,
        sampled,
        includes_self: include_self,
    })
}

/// Layered draw for a multi-hop encoder.
///
/// `layers[0]` is `[center]`; the children of `layers[h][p]` are
/// `layers[h + 1][p * k_h .. (p + 1) * k_h]` where `k_h = ks[h]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubtreeDraw {
    pub ks: Vec<usize>,
    pub layers: Vec<Vec<NodeId>>,
}

impl SubtreeDraw {
    pub fn hops(&self) -> usize {
        self.ks.len()
    }

    pub fn children(&self, level: usize, pos: usize) -> &[NodeId] {
        let k = self.ks[level];
        &self.layers[level + 1][pos * k..(pos + 1) * k]
    }

    /// Nodes below the root, across all hops.
    pub fn sampled_count(&self) -> usize {
        self.layers[1..].iter().map(Vec::len).sum()
    }
}

pub fn sample_subtree<R: Rng + ?Sized>(
    graph: &KigGraph,
    center: NodeId,
    ks: &[usize],
    include_self: bool,
    rng: &mut R,
) -> Result<SubtreeDraw> {
    if ks.is_empty() {
        return Err(Error::invalid("subtree needs at least one hop"));
    }
    if !graph.contains(center) {
        return Err(Error::UnknownNode(format!("node index {}", center.0)));
    }
    let mut layers = vec![vec![center]];
    for &k in ks {
        let prev = layers.last().expect("root layer");
        let mut next = Vec::with_capacity(prev.len() * k);
        for &node in prev {
            next.extend(sample_neighbors(graph, node, k, include_self, rng)?.sampled);
        }
        layers.push(next);
    }
    Ok(SubtreeDraw {
        ks: ks.to_vec(),
        layers,
    })
}
