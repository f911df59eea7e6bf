//! Subgraph to reasoning-graph conversion: relation nodes, reverse edges,
//! seed-rooted hop layering, pruning of seed-ward edges, and the normalized
//! predecessor view the network aggregates over.

mod adjacency;
mod dump;
mod layering;
mod levi;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kbstore::{EntityId, KnowledgeBase, RelationId, Subgraph, Triple};

pub use adjacency::{build_adjacency, AdjacencyView, NormPolicy};
pub use dump::{GraphDump, NodeDump};
pub use layering::{assign_layers, compute_hop_distances, prune_inside_edges};
pub use levi::{add_reverse_edges, entity_graph, levi_transform, LeviGraph, RelationNodeMode};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("subgraph has no entities")]
    EmptySubgraph,
    #[error("no seed node is present in the graph")]
    NoSeeds,
    #[error("seed {0} is not part of the subgraph")]
    SeedOutsideSubgraph(EntityId),
    #[error("triple {0:?} has an endpoint outside the subgraph")]
    TripleOutsideSubgraph(Triple),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Entity,
    Relation,
}

/// What a node stands for in the knowledge base.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeSource {
    Entity(EntityId),
    Triple(Triple),
    RelationType(RelationId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub kind: NodeKind,
    pub source: NodeSource,
    pub surface: String,
}

impl Node {
    pub fn entity(&self) -> Option<EntityId> {
        match self.source {
            NodeSource::Entity(e) => Some(e),
            _ => None,
        }
    }
}

/// Layered graph the network runs on. Every node is reachable from a seed
/// and carries its hop distance.
#[derive(Debug, Clone, PartialEq)]
pub struct ReasoningGraph {
    pub nodes: Vec<Node>,
    /// Sorted, without duplicates.
    pub edges: Vec<(usize, usize)>,
    pub hops: Vec<usize>,
    pub seeds: Vec<usize>,
    pub entity_index: BTreeMap<EntityId, usize>,
    /// Nodes dropped during layering because no seed reaches them.
    pub dropped_unreachable: usize,
}

/// Node-index-free description of a graph, equal for isomorphic relabelings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalForm {
    pub nodes: Vec<(NodeSource, usize)>,
    pub edges: Vec<(NodeSource, NodeSource)>,
    pub seeds: Vec<NodeSource>,
}

impl ReasoningGraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_relation_nodes(&self) -> usize {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Relation).count()
    }

    pub fn is_symmetric(&self) -> bool {
        self.edges
            .iter()
            .all(|&(u, v)| self.edges.binary_search(&(v, u)).is_ok())
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> ReasoningGraph {
        assert_eq!(perm.len(), self.num_nodes());
        let mut nodes = self.nodes.clone();
        let mut hops = self.hops.clone();
        for (i, &p) in perm.iter().enumerate() {
            nodes[p] = self.nodes[i].clone();
            hops[p] = self.hops[i];
        }
        let mut edges: Vec<_> = self.edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        edges.sort_unstable();
        let mut seeds: Vec<_> = self.seeds.iter().map(|&s| perm[s]).collect();
        seeds.sort_unstable();
        let entity_index = self.entity_index.iter().map(|(&e, &i)| (e, perm[i])).collect();
        ReasoningGraph {
            nodes,
            edges,
            hops,
            seeds,
            entity_index,
            dropped_unreachable: self.dropped_unreachable,
        }
    }

    pub fn canonical_form(&self) -> CanonicalForm {
        let key = |i: usize| self.nodes[i].source;
        let mut nodes: Vec<_> = (0..self.num_nodes()).map(|i| (key(i), self.hops[i])).collect();
        nodes.sort();
        let mut edges: Vec<_> = self.edges.iter().map(|&(u, v)| (key(u), key(v))).collect();
        edges.sort();
        let mut seeds: Vec<_> = self.seeds.iter().map(|&s| key(s)).collect();
        seeds.sort();
        CanonicalForm { nodes, edges, seeds }
    }
}

/// Switches for graph construction, including the structural ablations.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GraphOptions {
    pub relation_node_mode: RelationNodeMode,
    /// Connect entities directly instead of through relation nodes.
    pub no_relation_nodes: bool,
    /// Keep the bidirectional graph instead of pruning seed-ward edges.
    pub no_direction: bool,
    pub norm_policy: NormPolicy,
}

/// Intermediate stages, kept for inspection.
#[derive(Debug, Clone)]
pub struct GraphStages {
    /// Bidirectional and layered, before pruning.
    pub layered: ReasoningGraph,
    /// What the model consumes.
    pub graph: ReasoningGraph,
    pub adjacency: AdjacencyView,
}

pub fn build_graph_stages(
    kb: &KnowledgeBase,
    sub: &Subgraph,
    options: &GraphOptions,
) -> Result<GraphStages, GraphError> {
    let base = if options.no_relation_nodes {
        entity_graph(kb, sub)?
    } else {
        levi_transform(kb, sub, options.relation_node_mode)?
    };
    let both_ways = add_reverse_edges(&base);
    let dist = compute_hop_distances(&both_ways)?;
    let layered = assign_layers(&both_ways, &dist);
    if layered.seeds.is_empty() {
        return Err(GraphError::NoSeeds);
    }
    let graph = if options.no_direction {
        layered.clone()
    } else {
        prune_inside_edges(&layered)
    };
    let adjacency = build_adjacency(&graph, options.norm_policy);
    Ok(GraphStages {
        layered,
        graph,
        adjacency,
    })
}

/// Levi transform (or the entity-only ablation), reverse edges, layering,
/// pruning (unless disabled) and adjacency in one call.
pub fn build_reasoning_graph(
    kb: &KnowledgeBase,
    sub: &Subgraph,
    options: &GraphOptions,
) -> Result<(ReasoningGraph, AdjacencyView), GraphError> {
    let stages = build_graph_stages(kb, sub, options)?;
    Ok((stages.graph, stages.adjacency))
}
