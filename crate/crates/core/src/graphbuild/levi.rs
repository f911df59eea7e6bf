use std::collections::{BTreeMap, BTreeSet};

use crate::kbstore::{KnowledgeBase, RelationId, Subgraph};

use super::{GraphError, Node, NodeKind, NodeSource};

/// How relation nodes are allocated during the Levi transformation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationNodeMode {
    /// One node per triple.
    #[default]
    Instance,
    /// One node per distinct relation, shared by all its triples.
    Type,
}

impl std::str::FromStr for RelationNodeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "instance" | "per-instance" => Ok(Self::Instance),
            "type" | "per-type" => Ok(Self::Type),
            other => Err(format!("unknown relation node mode {other:?} (expected instance|type)")),
        }
    }
}

/// Directed graph over entity and relation nodes, before hop layering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeviGraph {
    pub nodes: Vec<Node>,
    /// Sorted, without duplicates.
    pub edges: Vec<(usize, usize)>,
    /// Sorted node indices of the seed entities.
    pub seeds: Vec<usize>,
}

impl LeviGraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_symmetric(&self) -> bool {
        let set: BTreeSet<_> = self.edges.iter().copied().collect();
        self.edges.iter().all(|&(u, v)| set.contains(&(v, u)))
    }
}

fn entity_nodes(kb: &KnowledgeBase, sub: &Subgraph) -> (Vec<Node>, BTreeMap<crate::kbstore::EntityId, usize>) {
    let mut nodes = Vec::with_capacity(sub.entities.len());
    let mut index = BTreeMap::new();
    for &e in &sub.entities {
        index.insert(e, nodes.len());
        nodes.push(Node {
            kind: NodeKind::Entity,
            source: NodeSource::Entity(e),
            surface: kb.entity_name(e).to_string(),
        });
    }
    (nodes, index)
}

fn seed_nodes(sub: &Subgraph, index: &BTreeMap<crate::kbstore::EntityId, usize>) -> Result<Vec<usize>, GraphError> {
    sub.seeds
        .iter()
        .map(|s| index.get(s).copied().ok_or(GraphError::SeedOutsideSubgraph(*s)))
        .collect()
}

/// Replaces every relation edge `s -r-> o` by `s -> e_r -> o`.
pub fn levi_transform(kb: &KnowledgeBase, sub: &Subgraph, mode: RelationNodeMode) -> Result<LeviGraph, GraphError> {
    if sub.entities.is_empty() {
        return Err(GraphError::EmptySubgraph);
    }
    let (mut nodes, index) = entity_nodes(kb, sub);
    let seeds = seed_nodes(sub, &index)?;
    let mut edges = BTreeSet::new();
    let mut type_nodes: BTreeMap<RelationId, usize> = BTreeMap::new();
    for t in &sub.triples {
        let (Some(&s), Some(&o)) = (index.get(&t.subject), index.get(&t.object)) else {
            return Err(GraphError::TripleOutsideSubgraph(*t));
        };
        let rel_node = match mode {
            RelationNodeMode::Instance => {
                nodes.push(Node {
                    kind: NodeKind::Relation,
                    source: NodeSource::Triple(*t),
                    surface: kb.relation_name(t.relation).to_string(),
                });
                nodes.len() - 1
            }
            RelationNodeMode::Type => *type_nodes.entry(t.relation).or_insert_with(|| {
                nodes.push(Node {
                    kind: NodeKind::Relation,
                    source: NodeSource::RelationType(t.relation),
                    surface: kb.relation_name(t.relation).to_string(),
                });
                nodes.len() - 1
            }),
        };
        edges.insert((s, rel_node));
        edges.insert((rel_node, o));
    }
    Ok(LeviGraph {
        nodes,
        edges: edges.into_iter().collect(),
        seeds,
    })
}

/// Entity-only graph with one edge per related entity pair (relation-node
/// ablation).
pub fn entity_graph(kb: &KnowledgeBase, sub: &Subgraph) -> Result<LeviGraph, GraphError> {
    if sub.entities.is_empty() {
        return Err(GraphError::EmptySubgraph);
    }
    let (nodes, index) = entity_nodes(kb, sub);
    let seeds = seed_nodes(sub, &index)?;
    let mut edges = BTreeSet::new();
    for t in &sub.triples {
        let (Some(&s), Some(&o)) = (index.get(&t.subject), index.get(&t.object)) else {
            return Err(GraphError::TripleOutsideSubgraph(*t));
        };
        edges.insert((s, o));
    }
    Ok(LeviGraph {
        nodes,
        edges: edges.into_iter().collect(),
        seeds,
    })
}

/// Adds `v -> u` for every `u -> v`.
pub fn add_reverse_edges(g: &LeviGraph) -> LeviGraph {
    let mut edges: BTreeSet<(usize, usize)> = g.edges.iter().copied().collect();
    for &(u, v) in &g.edges {
        edges.insert((v, u));
    }
    LeviGraph {
        nodes: g.nodes.clone(),
        edges: edges.into_iter().collect(),
        seeds: g.seeds.clone(),
    }
}
