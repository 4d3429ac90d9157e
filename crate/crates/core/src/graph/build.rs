use std::collections::{BTreeSet, HashMap, HashSet};

use log::warn;

use super::ingest::{Interaction, Triple};
use super::store::{KigGraph, NodeId, NodeInfo, NodeRole, FEEDBACK_RELATION};

/// Mutable construction-time view of a [`KigGraph`].
#[derive(Debug, Clone, Default)]
pub struct GraphBuilder {
    nodes: Vec<NodeInfo>,
    adjacency: Vec<BTreeSet<(u32, u32)>>,
    relations: Vec<String>,
    users: HashMap<String, u32>,
    items: HashMap<String, u32>,
    entities: HashMap<String, u32>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        GraphBuilder {
            relations: vec!["interact".to_string()],
            ..Default::default()
        }
    }

    pub fn from_graph(g: &KigGraph) -> Self {
        let adjacency = (0..g.node_count())
            .map(|i| g.edges(NodeId(i as u32)).iter().copied().collect())
            .collect();
        GraphBuilder {
            nodes: g.nodes.clone(),
            adjacency,
            relations: g.relations.clone(),
            users: g.users.clone(),
            items: g.items.clone(),
            entities: g.entities.clone(),
        }
    }

    fn push_node(&mut self, info: NodeInfo) -> u32 {
        self.nodes.push(info);
        self.adjacency.push(BTreeSet::new());
        (self.nodes.len() - 1) as u32
    }

    pub fn user(&mut self, key: &str) -> u32 {
        if let Some(&i) = self.users.get(key) {
            return i;
        }
        let i = self.push_node(NodeInfo {
            role: NodeRole::User,
            key: key.to_string(),
            entity: None,
        });
        self.users.insert(key.to_string(), i);
        i
    }

    pub fn item(&mut self, key: &str) -> u32 {
        if let Some(&i) = self.items.get(key) {
            return i;
        }
        let i = self.push_node(NodeInfo {
            role: NodeRole::Item,
            key: key.to_string(),
            entity: None,
        });
        self.items.insert(key.to_string(), i);
        i
    }

    fn entity(&mut self, key: &str) -> u32 {
        if let Some(&i) = self.entities.get(key) {
            return i;
        }
        let i = self.push_node(NodeInfo {
            role: NodeRole::Entity,
            key: key.to_string(),
            entity: None,
        });
        self.entities.insert(key.to_string(), i);
        i
    }

    fn relation(&mut self, name: &str) -> u32 {
        if let Some(i) = self.relations.iter().position(|r| r == name) {
            return i as u32;
        }
        self.relations.push(name.to_string());
        (self.relations.len() - 1) as u32
    }

    fn link(&mut self, a: u32, b: u32, rel: u32) {
        if a == b {
            return;
        }
        self.adjacency[a as usize].insert((b, rel));
        self.adjacency[b as usize].insert((a, rel));
    }

    /// Registers the pair's nodes and, for positives, adds the feedback edge.
    pub fn add_interaction(&mut self, p: &Interaction) {
        let u = self.user(&p.user);
        let v = self.item(&p.item);
        if p.label == 1 {
            self.link(u, v, FEEDBACK_RELATION);
        }
    }

    /// Registers the pair's nodes without adding any edge (held-out records).
    pub fn register(&mut self, p: &Interaction) {
        self.user(&p.user);
        self.item(&p.item);
    }

    pub fn finish(self) -> KigGraph {
        let adjacency = self.adjacency.into_iter().map(|s| s.into_iter().collect()).collect();
        KigGraph::from_parts(self.nodes, adjacency, self.relations)
    }
}

/// Feedback graph from training records: one undirected edge per positive
/// pair.
pub fn build_interaction_graph(train: &[Interaction]) -> KigGraph {
    let mut b = GraphBuilder::new();
    for p in train {
        b.add_interaction(p);
    }
    b.finish()
}

/// Feedback graph over `train` that also registers every user and item of
/// `held_out` as a node, so held-out pairs resolve.
pub fn build_split_graph(train: &[Interaction], held_out: &[&[Interaction]]) -> KigGraph {
    let mut b = GraphBuilder::new();
    for p in train {
        b.add_interaction(p);
    }
    for p in held_out.iter().flat_map(|s| s.iter()) {
        b.register(p);
    }
    b.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpansionParams {
    pub rounds: usize,
    pub entity_min: usize,
    pub relation_min: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExpansionReport {
    pub linked_items: usize,
    pub skipped_links: usize,
    pub collected_triples: usize,
    pub dropped_entities: usize,
    pub dropped_relations: usize,
    pub kept_triples: usize,
    pub new_entities: usize,
}

/// Breadth-first triple collection starting from the linked entities.
///
/// Returns indices into `triples` in discovery order, and the set of entity
/// ids visited (seeds included).
pub fn collect_knowledge(triples: &[Triple], seeds: &[String], rounds: usize) -> (Vec<usize>, HashSet<String>) {
    let mut by_entity: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, t) in triples.iter().enumerate() {
        by_entity.entry(&t.head).or_default().push(i);
        if t.tail != t.head {
            by_entity.entry(&t.tail).or_default().push(i);
        }
    }
    let mut visited: HashSet<String> = seeds.iter().cloned().collect();
    let mut frontier: Vec<String> = seeds.to_vec();
    let mut used = vec![false; triples.len()];
    let mut collected = Vec::new();
    for _ in 0..rounds {
        let mut next = Vec::new();
        for e in &frontier {
            let Some(list) = by_entity.get(e.as_str()) else { continue };
            for &ti in list {
                if used[ti] {
                    continue;
                }
                used[ti] = true;
                collected.push(ti);
                for end in [&triples[ti].head, &triples[ti].tail] {
                    if visited.insert(end.clone()) {
                        next.push(end.clone());
                    }
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    (collected, visited)
}

/// Merges linked items with their KG entities and grows the graph by
/// `rounds` breadth-first rounds over `triples`, then prunes rare entities and
/// rare relations (entities first, one pass each). Linked item nodes are
/// never pruned.
pub fn expand_knowledge(
    graph: &KigGraph,
    triples: &[Triple],
    linkage: &[(String, String)],
    params: ExpansionParams,
) -> (KigGraph, ExpansionReport) {
    let mut report = ExpansionReport::default();
    let mut builder = GraphBuilder::from_graph(graph);
    if params.rounds == 0 {
        return (builder.finish(), report);
    }

    let mut seeds = Vec::new();
    for (item, entity) in linkage {
        let Some(&node) = builder.items.get(item) else {
            report.skipped_links += 1;
            continue;
        };
        if builder.nodes[node as usize].entity.is_some() || builder.entities.contains_key(entity) {
            report.skipped_links += 1;
            continue;
        }
        builder.nodes[node as usize].entity = Some(entity.clone());
        builder.entities.insert(entity.clone(), node);
        seeds.push(entity.clone());
        report.linked_items += 1;
    }
    if report.skipped_links > 0 {
        warn!("skipped {} linkage records (unknown or duplicate items/entities)", report.skipped_links);
    }

    let (collected, _) = collect_knowledge(triples, &seeds, params.rounds);
    report.collected_triples = collected.len();

    let is_item_entity = |e: &str| builder.entities.get(e).is_some_and(|&n| builder.nodes[n as usize].role == NodeRole::Item);

    let mut entity_freq: HashMap<&str, usize> = HashMap::new();
    for &ti in &collected {
        let t = &triples[ti];
        *entity_freq.entry(&t.head).or_default() += 1;
        *entity_freq.entry(&t.tail).or_default() += 1;
    }
    let dropped: HashSet<&str> = entity_freq
        .iter()
        .filter(|(e, c)| **c < params.entity_min && !is_item_entity(e))
        .map(|(e, _)| *e)
        .collect();
    report.dropped_entities = dropped.len();
    let after_entities: Vec<usize> = collected
        .into_iter()
        .filter(|&ti| !dropped.contains(triples[ti].head.as_str()) && !dropped.contains(triples[ti].tail.as_str()))
        .collect();

    let mut rel_freq: HashMap<&str, usize> = HashMap::new();
    for &ti in &after_entities {
        *rel_freq.entry(&triples[ti].relation).or_default() += 1;
    }
    report.dropped_relations = rel_freq.values().filter(|c| **c < params.relation_min).count();
    let kept: Vec<usize> = after_entities
        .into_iter()
        .filter(|&ti| rel_freq[triples[ti].relation.as_str()] >= params.relation_min)
        .collect();
    report.kept_triples = kept.len();

    let before = builder.nodes.len();
    for ti in kept {
        let t = &triples[ti];
        let h = builder.entity(&t.head);
        let tl = builder.entity(&t.tail);
        let r = builder.relation(&t.relation);
        builder.link(h, tl, r);
    }
    report.new_entities = builder.nodes.len() - before;
    (builder.finish(), report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ix(u: &str, i: &str, l: u8) -> Interaction {
        Interaction::new(u, i, l)
    }

    #[test]
    fn interaction_graph_uses_positives_only() {
        let g = build_interaction_graph(&[ix("u1", "i1", 1), ix("u1", "i2", 0), ix("u1", "i1", 1)]);
        let u1 = g.user("u1").unwrap();
        let i1 = g.item("i1").unwrap();
        let i2 = g.item("i2").unwrap();
        assert_eq!(g.neighbors(u1), &[i1.0]);
        assert_eq!(g.neighbors(i1), &[u1.0]);
        assert!(g.neighbors(i2).is_empty());
        assert_eq!(g.feedback_edge_count(), 1);
        g.validate().unwrap();
    }

    #[test]
    fn empty_input_gives_empty_graph() {
        let g = build_interaction_graph(&[]);
        assert_eq!(g.node_count(), 0);
        assert_eq!(g.edge_count(), 0);
    }

    fn no_prune(rounds: usize) -> ExpansionParams {
        ExpansionParams {
            rounds,
            entity_min: 0,
            relation_min: 0,
        }
    }

    #[test]
    fn expansion_follows_frontier() {
        let g = build_interaction_graph(&[ix("u1", "i1", 1)]);
        let triples = vec![Triple::new("E_i1", "r", "e1"), Triple::new("e1", "r", "e2")];
        let link = vec![("i1".to_string(), "E_i1".to_string())];

        let (g0, _) = expand_knowledge(&g, &triples, &link, no_prune(0));
        assert_eq!(g0, g);

        let (g1, rep) = expand_knowledge(&g, &triples, &link, no_prune(1));
        let i1 = g1.item("i1").unwrap();
        let e1 = g1.entity("e1").unwrap();
        assert_eq!(g1.entity("E_i1"), Some(i1));
        assert!(g1.neighbors(i1).contains(&e1.0));
        assert!(g1.entity("e2").is_none());
        assert_eq!(rep.new_entities, 1);

        let (g2, _) = expand_knowledge(&g, &triples, &link, no_prune(2));
        let e2 = g2.entity("e2").unwrap();
        assert!(g2.neighbors(g2.entity("e1").unwrap()).contains(&e2.0));
        g2.validate().unwrap();
    }

    #[test]
    fn unknown_links_are_skipped() {
        let g = build_interaction_graph(&[ix("u1", "i1", 1)]);
        let link = vec![("nope".to_string(), "x".to_string()), ("i1".to_string(), "y".to_string())];
        let (_, rep) = expand_knowledge(&g, &[], &link, no_prune(1));
        assert_eq!(rep.skipped_links, 1);
        assert_eq!(rep.linked_items, 1);
    }

    #[test]
    fn pruning_drops_rare_entities_then_relations() {
        let g = build_interaction_graph(&[ix("u1", "i1", 1), ix("u1", "i2", 1)]);
        let link = vec![("i1".to_string(), "A".to_string()), ("i2".to_string(), "B".to_string())];
        let triples = vec![
            Triple::new("A", "genre", "g"),
            Triple::new("B", "genre", "g"),
            Triple::new("A", "author", "solo"),
            Triple::new("A", "rare", "B"),
        ];
        let (g2, rep) = expand_knowledge(
            &g,
            &triples,
            &link,
            ExpansionParams {
                rounds: 1,
                entity_min: 2,
                relation_min: 2,
            },
        );
        // "solo" appears once -> dropped; "rare" relation appears once -> dropped
        assert!(g2.entity("solo").is_none());
        assert!(g2.entity("g").is_some());
        assert_eq!(rep.dropped_entities, 1);
        assert_eq!(rep.dropped_relations, 1);
        let a = g2.item("i1").unwrap();
        let b = g2.item("i2").unwrap();
        assert!(!g2.neighbors(a).contains(&b.0));
        g2.validate().unwrap();
    }

    proptest! {
        #[test]
        fn node_set_grows_with_rounds(
            raw in prop::collection::vec((0u8..12, 0u8..3, 0u8..12), 0..40),
            k in 0usize..4,
        ) {
            let triples: Vec<Triple> = raw.iter().map(|(h, r, t)| Triple::new(format!("e{h}"), format!("r{r}"), format!("e{t}"))).collect();
            let seeds = vec!["e0".to_string(), "e1".to_string()];
            let (_, a) = collect_knowledge(&triples, &seeds, k);
            let (_, b) = collect_knowledge(&triples, &seeds, k + 1);
            prop_assert!(a.is_subset(&b));
        }

        #[test]
        fn built_graphs_are_symmetric(
            edges in prop::collection::vec((0u8..6, 0u8..6, 0u8..2), 0..40),
        ) {
            let pairs: Vec<_> = edges.iter().map(|(u, i, l)| ix(&format!("u{u}"), &format!("i{i}"), *l)).collect();
            let g = build_interaction_graph(&pairs);
            prop_assert!(g.validate().is_ok());
            for n in 0..g.node_count() {
                let id = NodeId(n as u32);
                prop_assert_eq!(g.degree(id), g.edges(id).len());
            }
        }
    }
}
