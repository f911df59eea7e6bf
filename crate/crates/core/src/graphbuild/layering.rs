use std::collections::{BTreeMap, VecDeque};

use super::{GraphError, LeviGraph, ReasoningGraph};

/// Multi-source BFS over the directed edges of `g`, starting from its seeds.
/// Run on the bidirectional graph this is the undirected hop distance.
pub fn compute_hop_distances(g: &LeviGraph) -> Result<Vec<Option<usize>>, GraphError> {
    if g.seeds.is_empty() {
        return Err(GraphError::NoSeeds);
    }
    let n = g.num_nodes();
    let mut out_adj = vec![Vec::new(); n];
    for &(u, v) in &g.edges {
        out_adj[u].push(v);
    }
    let mut dist = vec![None; n];
    let mut queue = VecDeque::new();
    for &s in &g.seeds {
        if s >= n {
            return Err(GraphError::NoSeeds);
        }
        if dist[s].is_none() {
            dist[s] = Some(0);
            queue.push_back(s);
        }
    }
    while let Some(u) = queue.pop_front() {
        let du = dist[u].expect("queued nodes have a distance");
        for &v in &out_adj[u] {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    Ok(dist)
}

/// Attaches hop distances, dropping nodes that no seed reaches and
/// re-indexing the survivors in their original order.
pub fn assign_layers(g: &LeviGraph, dist: &[Option<usize>]) -> ReasoningGraph {
    let mut remap = vec![None; g.num_nodes()];
    let mut nodes = Vec::new();
    let mut hops = Vec::new();
    for (i, d) in dist.iter().enumerate() {
        if let Some(d) = d {
            remap[i] = Some(nodes.len());
            nodes.push(g.nodes[i].clone());
            hops.push(*d);
        }
    }
    let edges = g
        .edges
        .iter()
        .filter_map(|&(u, v)| Some((remap[u]?, remap[v]?)))
        .collect();
    let seeds = g.seeds.iter().filter_map(|&s| remap[s]).collect();
    let entity_index: BTreeMap<_, _> = nodes
        .iter()
        .enumerate()
        .filter_map(|(i, n): (usize, &super::Node)| n.entity().map(|e| (e, i)))
        .collect();
    ReasoningGraph {
        nodes,
        edges,
        hops,
        seeds,
        entity_index,
        dropped_unreachable: g.num_nodes() - remap.iter().flatten().count(),
    }
}

/// Drops every edge pointing back toward the seeds (`hop(dst) < hop(src)`);
/// edges within a layer survive in both directions.
pub fn prune_inside_edges(g: &ReasoningGraph) -> ReasoningGraph {
    let edges = g
        .edges
        .iter()
        .copied()
        .filter(|&(u, v)| g.hops[v] >= g.hops[u])
        .collect();
    ReasoningGraph { edges, ..g.clone() }
}
