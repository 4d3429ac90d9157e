//! Planted-structure data with a known answer.
//!
//! Users and items fall into communities, and each community's items into
//! niches. Every community's users are further split into taste groups: group
//! `g` likes every niche of its own community except niche `g`, and exactly
//! niche `g` of each other community. Labels are a deterministic function of
//! (taste group, niche), so the positive rate inside a community is
//! `(niches - 1) / niches` and across communities `1 / niches`.
//!
//! The knowledge graph attaches each item to tag entities of its niche, and
//! chains tags within a community, so entity structure mirrors the item
//! communities.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{build_split_graph, expand_knowledge, split_dataset, ExpansionParams, Interaction, KigGraph, LabeledPair, Triple};
use crate::seed::SeedStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedConfig {
    pub users: usize,
    pub items: usize,
    pub entities: usize,
    pub communities: usize,
    pub niches: usize,
    /// Distinct items each user is observed with.
    pub items_per_user: usize,
    /// Tag entities attached to each item.
    pub tags_per_item: usize,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            users: 500,
            items: 300,
            entities: 200,
            communities: 2,
            niches: 10,
            items_per_user: 40,
            tags_per_item: 2,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedData {
    pub interactions: Vec<Interaction>,
    pub triples: Vec<Triple>,
    pub linkage: Vec<(String, String)>,
    pub user_community: Vec<usize>,
    pub item_community: Vec<usize>,
}

/// A split planted dataset resolved against its graph.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub graph: KigGraph,
    pub train: Vec<LabeledPair>,
    pub validation: Vec<LabeledPair>,
    pub test: Vec<LabeledPair>,
}

impl PlantedData {
    /// Splits 6:2:2 and builds the feedback graph, merged with the knowledge
    /// graph over two expansion rounds when `with_knowledge` is set.
    pub fn prepare(&self, split_seed: u64, with_knowledge: bool) -> Result<PreparedData> {
        let split = split_dataset(&self.interactions, (0.6, 0.2, 0.2), split_seed)?;
        let mut graph = build_split_graph(&split.train, &[&split.validation, &split.test]);
        if with_knowledge {
            let params = ExpansionParams {
                rounds: 2,
                entity_min: 1,
                relation_min: 1,
            };
            graph = expand_knowledge(&graph, &self.triples, &self.linkage, params).0;
        }
        Ok(PreparedData {
            train: graph.resolve(&split.train)?,
            validation: graph.resolve(&split.validation)?,
            test: graph.resolve(&split.test)?,
            graph,
        })
    }
}

pub fn user_key(u: usize) -> String {
    format!("u{u}")
}

pub fn item_key(i: usize) -> String {
    format!("i{i}")
}

/// Niche index of item `i` within its community.
fn item_niche(cfg: &PlantedConfig, i: usize) -> (usize, usize) {
    let community = i % cfg.communities;
    let rank = i / cfg.communities;
    (community, rank % cfg.niches)
}

fn user_group(cfg: &PlantedConfig, u: usize) -> (usize, usize) {
    let community = u % cfg.communities;
    let rank = u / cfg.communities;
    (community, rank % cfg.niches)
}

/// The planted label of a (user, item) pair.
pub fn planted_label(cfg: &PlantedConfig, u: usize, i: usize) -> u8 {
    let (uc, group) = user_group(cfg, u);
    let (ic, niche) = item_niche(cfg, i);
    let liked = if uc == ic { niche != group } else { niche == group };
    liked as u8
}

pub fn generate(cfg: &PlantedConfig) -> Result<PlantedData> {
    if cfg.communities == 0 || cfg.niches < 2 {
        return Err(Error::invalid("need at least one community and two niches"));
    }
    if cfg.items < cfg.communities * cfg.niches {
        return Err(Error::invalid("fewer items than niches"));
    }
    if cfg.items_per_user == 0 || cfg.items_per_user > cfg.items {
        return Err(Error::invalid("items_per_user must be in 1..=items"));
    }
    let tag_slots = cfg.communities * cfg.niches;
    if cfg.entities < tag_slots {
        return Err(Error::invalid("need at least one entity per niche"));
    }

    let stream = SeedStream::new(cfg.seed);
    let mut rng = stream.child(1).rng();
    let all_items: Vec<usize> = (0..cfg.items).collect();
    let mut interactions = Vec::with_capacity(cfg.users * cfg.items_per_user);
    for u in 0..cfg.users {
        let mut chosen: Vec<usize> = all_items.choose_multiple(&mut rng, cfg.items_per_user).copied().collect();
        chosen.sort_unstable();
        for i in chosen {
            interactions.push(Interaction::new(user_key(u), item_key(i), planted_label(cfg, u, i)));
        }
    }

    // entity e belongs to niche slot e % tag_slots
    let tags_of = |slot: usize| -> Vec<usize> { (slot..cfg.entities).step_by(tag_slots).collect() };
    let entity_key = |e: usize| format!("tag{e}");
    let mut rng = stream.child(2).rng();
    let mut triples = Vec::new();
    let mut linkage = Vec::with_capacity(cfg.items);
    for i in 0..cfg.items {
        let item_entity = format!("ent_{}", item_key(i));
        linkage.push((item_key(i), item_entity.clone()));
        let (c, n) = item_niche(cfg, i);
        let tags = tags_of(c * cfg.niches + n);
        let picked: BTreeSet<usize> = tags.choose_multiple(&mut rng, cfg.tags_per_item.min(tags.len())).copied().collect();
        for e in picked {
            triples.push(Triple::new(item_entity.clone(), "has_tag", entity_key(e)));
        }
    }
    // chain tags inside each community
    for e in 0..cfg.entities {
        let slot = e % tag_slots;
        let community = slot / cfg.niches;
        let peer_slot = community * cfg.niches + rng.gen_range(0..cfg.niches);
        let peers = tags_of(peer_slot);
        let peer = peers[rng.gen_range(0..peers.len())];
        if peer != e {
            triples.push(Triple::new(entity_key(e), "related_to", entity_key(peer)));
        }
    }

    Ok(PlantedData {
        interactions,
        triples,
        linkage,
        user_community: (0..cfg.users).map(|u| user_group(cfg, u).0).collect(),
        item_community: (0..cfg.items).map(|i| item_niche(cfg, i).0).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_rates_are_exact() {
        let cfg = PlantedConfig::default();
        let (mut within, mut within_pos, mut across, mut across_pos) = (0, 0, 0, 0);
        for u in 0..cfg.users {
            for i in 0..cfg.items {
                let same = u % cfg.communities == i % cfg.communities;
                let l = planted_label(&cfg, u, i) as usize;
                if same {
                    within += 1;
                    within_pos += l;
                } else {
                    across += 1;
                    across_pos += l;
                }
            }
        }
        assert!((within_pos as f64 / within as f64 - 0.9).abs() < 1e-12);
        assert!((across_pos as f64 / across as f64 - 0.1).abs() < 1e-12);
    }

    #[test]
    fn generated_shapes() {
        let cfg = PlantedConfig::default();
        let d = generate(&cfg).unwrap();
        assert_eq!(d.interactions.len(), 500 * 40);
        let entities: BTreeSet<&str> = d
            .triples
            .iter()
            .flat_map(|t| [t.head.as_str(), t.tail.as_str()])
            .filter(|e| e.starts_with("tag"))
            .collect();
        assert_eq!(entities.len(), 200);
        assert_eq!(d.linkage.len(), 300);
        let pos = d.interactions.iter().filter(|p| p.label == 1).count() as f64 / d.interactions.len() as f64;
        assert!((pos - 0.5).abs() < 0.02, "{pos}");
        assert_eq!(generate(&cfg).unwrap(), d);
    }

    #[test]
    fn rejects_degenerate_configs() {
        let bad = PlantedConfig {
            niches: 1,
            ..Default::default()
        };
        assert!(generate(&bad).is_err());
        let bad = PlantedConfig {
            items_per_user: 301,
            ..Default::default()
        };
        assert!(generate(&bad).is_err());
    }
}
