use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{NodeKind, ReasoningGraph};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeDump {
    pub idx: usize,
    pub kind: NodeKind,
    pub surface: String,
    pub hop: usize,
}

/// JSON-friendly snapshot of a [`ReasoningGraph`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDump {
    pub nodes: Vec<NodeDump>,
    pub edges: Vec<[usize; 2]>,
    pub seeds: Vec<usize>,
}

impl From<&ReasoningGraph> for GraphDump {
    fn from(g: &ReasoningGraph) -> Self {
        GraphDump {
            nodes: g
                .nodes
                .iter()
                .enumerate()
                .map(|(idx, n)| NodeDump {
                    idx,
                    kind: n.kind,
                    surface: n.surface.clone(),
                    hop: g.hops[idx],
                })
                .collect(),
            edges: g.edges.iter().map(|&(u, v)| [u, v]).collect(),
            seeds: g.seeds.clone(),
        }
    }
}

impl GraphDump {
    pub fn to_dot(&self, name: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "digraph {name} {{");
        for n in &self.nodes {
            let shape = match n.kind {
                NodeKind::Entity => "ellipse",
                NodeKind::Relation => "box",
            };
            let style = if self.seeds.contains(&n.idx) {
                ", style=bold"
            } else {
                ""
            };
            let label = n.surface.replace('\\', "\\\\").replace('"', "\\\"");
            let _ = writeln!(
                s,
                "  n{} [label=\"{} (hop {})\", shape={shape}{style}];",
                n.idx, label, n.hop
            );
        }
        for [u, v] in &self.edges {
            let _ = writeln!(s, "  n{u} -> n{v};");
        }
        s.push_str("}\n");
        s
    }
}
