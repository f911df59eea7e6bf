use std::collections::BTreeSet;

use super::{EntityId, KbError, KnowledgeBase, Triple};

/// Default cap on the number of entities in an extracted subgraph.
pub const DEFAULT_NODE_BUDGET: usize = 500;

/// Question-related slice of a knowledge base.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subgraph {
    /// Sorted entity ids.
    pub entities: Vec<EntityId>,
    /// Every KB triple whose endpoints are both in `entities`, in KB order.
    pub triples: Vec<Triple>,
    pub seeds: BTreeSet<EntityId>,
    /// Set when the node budget stopped expansion before `hops` rings.
    pub truncated: bool,
}

impl Subgraph {
    pub fn contains(&self, e: EntityId) -> bool {
        self.entities.binary_search(&e).is_ok()
    }

    /// Builds a subgraph directly from parts, sorting and deduplicating.
    pub fn from_parts(
        entities: impl IntoIterator<Item = EntityId>,
        triples: impl IntoIterator<Item = Triple>,
        seeds: impl IntoIterator<Item = EntityId>,
    ) -> Self {
        let entities: BTreeSet<EntityId> = entities.into_iter().collect();
        let mut seen = BTreeSet::new();
        let triples = triples.into_iter().filter(|t| seen.insert(*t)).collect();
        Self {
            entities: entities.into_iter().collect(),
            triples,
            seeds: seeds.into_iter().collect(),
            truncated: false,
        }
    }

    pub fn check_invariants(&self) -> bool {
        self.seeds.iter().all(|s| self.contains(*s))
            && self
                .triples
                .iter()
                .all(|t| self.contains(t.subject) && self.contains(t.object))
    }
}

/// Undirected breadth-first expansion from `seeds`, one ring per entity hop.
///
/// A ring that would push the entity count past `node_budget` is not added;
/// expansion stops there and `truncated` is set.
pub fn extract_subgraph(
    kb: &KnowledgeBase,
    seeds: &BTreeSet<EntityId>,
    hops: usize,
    node_budget: usize,
) -> Result<Subgraph, KbError> {
    if hops == 0 {
        return Err(KbError::InvalidArgument("hops must be at least 1".into()));
    }
    if seeds.is_empty() {
        return Err(KbError::InvalidArgument("no seed entities".into()));
    }
    if node_budget < seeds.len() {
        return Err(KbError::InvalidArgument(format!(
            "node budget {node_budget} smaller than seed count {}",
            seeds.len()
        )));
    }
    for s in seeds {
        if !kb.contains_entity(*s) {
            return Err(KbError::UnknownSeed(*s));
        }
    }

    let mut visited = vec![false; kb.num_entities()];
    let mut collected: Vec<EntityId> = Vec::with_capacity(seeds.len());
    for s in seeds {
        visited[s.index()] = true;
        collected.push(*s);
    }
    let mut frontier: Vec<EntityId> = collected.clone();
    let mut truncated = false;
    for _ in 0..hops {
        let mut ring = Vec::new();
        for &e in &frontier {
            for &tid in kb.incident(e) {
                let t = kb.triples()[tid];
                let other = t.other(e).expect("incident triple mentions entity");
                if !visited[other.index()] {
                    visited[other.index()] = true;
                    ring.push(other);
                }
            }
        }
        if ring.is_empty() {
            break;
        }
        if collected.len() + ring.len() > node_budget {
            for e in &ring {
                visited[e.index()] = false;
            }
            truncated = true;
            break;
        }
        collected.extend_from_slice(&ring);
        frontier = ring;
    }

    collected.sort_unstable();
    let mut triple_ids = BTreeSet::new();
    for &e in &collected {
        for &tid in kb.incident(e) {
            let t = kb.triples()[tid];
            if visited[t.subject.index()] && visited[t.object.index()] {
                triple_ids.insert(tid);
            }
        }
    }
    Ok(Subgraph {
        entities: collected,
        triples: triple_ids.into_iter().map(|i| kb.triples()[i]).collect(),
        seeds: seeds.clone(),
        truncated,
    })
}
