use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relation id of user-item feedback edges; KG relations start at 1.
pub const FEEDBACK_RELATION: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    User,
    Item,
    Entity,
}

impl NodeRole {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeRole::User => "user",
            NodeRole::Item => "item",
            NodeRole::Entity => "entity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "user" => Some(NodeRole::User),
            "item" => Some(NodeRole::Item),
            "entity" => Some(NodeRole::Entity),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeInfo {
    pub role: NodeRole,
    /// External id: user id, item id, or entity id.
    pub key: String,
    /// KG entity merged into this item node, if linked.
    pub entity: Option<String>,
}

/// A (user, item, label) record resolved against a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LabeledPair {
    pub user: NodeId,
    pub item: NodeId,
    pub label: u8,
}

/// Immutable adjacency store in CSR layout.
///
/// `edges` holds `(neighbor, relation)` entries per node, sorted and
/// deduplicated; `neighbors` holds the distinct neighbor ids used for
/// sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct KigGraph {
    pub(crate) nodes: Vec<NodeInfo>,
    pub(crate) edge_offsets: Vec<usize>,
    pub(crate) edges: Vec<(u32, u32)>,
    pub(crate) nbr_offsets: Vec<usize>,
    pub(crate) nbrs: Vec<u32>,
    pub(crate) relations: Vec<String>,
    pub(crate) users: HashMap<String, u32>,
    pub(crate) items: HashMap<String, u32>,
    pub(crate) entities: HashMap<String, u32>,
}

impl KigGraph {
    pub(crate) fn from_parts(nodes: Vec<NodeInfo>, adjacency: Vec<Vec<(u32, u32)>>, relations: Vec<String>) -> Self {
        let mut edge_offsets = Vec::with_capacity(nodes.len() + 1);
        let mut edges = Vec::new();
        let mut nbr_offsets = Vec::with_capacity(nodes.len() + 1);
        let mut nbrs = Vec::new();
        edge_offsets.push(0);
        nbr_offsets.push(0);
        for mut list in adjacency {
            list.sort_unstable();
            list.dedup();
            let mut last = None;
            for &(n, _) in &list {
                if last != Some(n) {
                    nbrs.push(n);
                    last = Some(n);
                }
            }
            edges.extend(list);
            edge_offsets.push(edges.len());
            nbr_offsets.push(nbrs.len());
        }
        let mut users = HashMap::new();
        let mut items = HashMap::new();
        let mut entities = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            let i = i as u32;
            match n.role {
                NodeRole::User => {
                    users.insert(n.key.clone(), i);
                }
                NodeRole::Item => {
                    items.insert(n.key.clone(), i);
                    if let Some(e) = &n.entity {
                        entities.insert(e.clone(), i);
                    }
                }
                NodeRole::Entity => {
                    entities.insert(n.key.clone(), i);
                }
            }
        }
        KigGraph {
            nodes,
            edge_offsets,
            edges,
            nbr_offsets,
            nbrs,
            relations,
            users,
            items,
            entities,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, n: NodeId) -> bool {
        n.index() < self.nodes.len()
    }

    pub fn node(&self, n: NodeId) -> &NodeInfo {
        &self.nodes[n.index()]
    }

    pub fn nodes(&self) -> &[NodeInfo] {
        &self.nodes
    }

    pub fn role(&self, n: NodeId) -> NodeRole {
        self.nodes[n.index()].role
    }

    /// Distinct neighbor ids of `n`.
    pub fn neighbors(&self, n: NodeId) -> &[u32] {
        &self.nbrs[self.nbr_offsets[n.index()]..self.nbr_offsets[n.index() + 1]]
    }

    /// `(neighbor, relation)` edge list of `n`.
    pub fn edges(&self, n: NodeId) -> &[(u32, u32)] {
        &self.edges[self.edge_offsets[n.index()]..self.edge_offsets[n.index() + 1]]
    }

    pub fn degree(&self, n: NodeId) -> usize {
        self.edge_offsets[n.index() + 1] - self.edge_offsets[n.index()]
    }

    pub fn relations(&self) -> &[String] {
        &self.relations
    }

    pub fn user(&self, key: &str) -> Option<NodeId> {
        self.users.get(key).map(|&i| NodeId(i))
    }

    pub fn item(&self, key: &str) -> Option<NodeId> {
        self.items.get(key).map(|&i| NodeId(i))
    }

    pub fn entity(&self, key: &str) -> Option<NodeId> {
        self.entities.get(key).map(|&i| NodeId(i))
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn item_count(&self) -> usize {
        self.items.len()
    }

    /// Non-item entity nodes.
    pub fn entity_node_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.role == NodeRole::Entity).count()
    }

    /// Item node ids in index order.
    pub fn item_nodes(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.role == NodeRole::Item)
            .map(|(i, _)| NodeId(i as u32))
            .collect()
    }

    /// Undirected KG triples (each stored edge pair counted once).
    pub fn kg_edge_count(&self) -> usize {
        let directed = self.edges.iter().filter(|(_, r)| *r != FEEDBACK_RELATION).count();
        directed / 2
    }

    pub fn feedback_edge_count(&self) -> usize {
        self.edges.iter().filter(|(_, r)| *r == FEEDBACK_RELATION).count() / 2
    }

    /// Resolves string-keyed interactions; unknown ids are an error.
    pub fn resolve(&self, pairs: &[super::Interaction]) -> Result<Vec<LabeledPair>> {
        pairs
            .iter()
            .map(|p| {
                let user = self.user(&p.user).ok_or_else(|| Error::UnknownNode(format!("user {}", p.user)))?;
                let item = self.item(&p.item).ok_or_else(|| Error::UnknownNode(format!("item {}", p.item)))?;
                Ok(LabeledPair {
                    user,
                    item,
                    label: p.label,
                })
            })
            .collect()
    }

    /// Checks the structural invariants; returns a description of the first
    /// violation.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let n = self.nodes.len() as u32;
        for (i, node) in self.nodes.iter().enumerate() {
            let id = NodeId(i as u32);
            let list = self.edges(id);
            for w in list.windows(2) {
                if w[0] >= w[1] {
                    return Err(format!("unsorted or duplicate edge at node {i}"));
                }
            }
            for &(nb, rel) in list {
                if nb >= n {
                    return Err(format!("node {i} lists missing neighbor {nb}"));
                }
                if rel as usize >= self.relations.len() {
                    return Err(format!("node {i} uses unknown relation {rel}"));
                }
                if rel == FEEDBACK_RELATION {
                    let other = self.node(NodeId(nb)).role;
                    let ok = matches!(
                        (node.role, other),
                        (NodeRole::User, NodeRole::Item) | (NodeRole::Item, NodeRole::User)
                    );
                    if !ok {
                        return Err(format!("feedback edge {i}->{nb} is not user-item"));
                    }
                }
                if self.edges(NodeId(nb)).binary_search(&(i as u32, rel)).is_err() {
                    return Err(format!("edge {i}->{nb} ({rel}) has no reverse"));
                }
            }
        }
        Ok(())
    }
}
