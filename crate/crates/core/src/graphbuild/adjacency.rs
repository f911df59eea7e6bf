use serde::{Deserialize, Serialize};

use super::ReasoningGraph;

/// How the per-node normalization constant is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormPolicy {
    /// `max(1, in-degree)`.
    #[default]
    InDegree,
    Constant(f64),
}

/// Predecessor lists and normalization constants; messages flow along edge
/// direction, so node `v` aggregates over `preds[v]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyView {
    pub preds: Vec<Vec<usize>>,
    pub norm: Vec<f64>,
}

impl AdjacencyView {
    pub fn num_nodes(&self) -> usize {
        self.preds.len()
    }
}

pub fn build_adjacency(g: &ReasoningGraph, policy: NormPolicy) -> AdjacencyView {
    let mut preds = vec![Vec::new(); g.num_nodes()];
    for &(u, v) in &g.edges {
        preds[v].push(u);
    }
    for p in &mut preds {
        p.sort_unstable();
    }
    let norm = preds
        .iter()
        .map(|p| match policy {
            NormPolicy::InDegree => p.len().max(1) as f64,
            NormPolicy::Constant(k) => k,
        })
        .collect();
    AdjacencyView { preds, norm }
}
