use std::collections::BTreeSet;

use crate::graphbuild::{build_reasoning_graph, GraphOptions, ReasoningGraph};
use crate::kbstore::{extract_subgraph, EntityId, KnowledgeBase, QaExample};
use crate::model::{node_labels, GraphInput, ModelConfig, Vocab};

/// Everything one question needs for a forward pass, built once.
#[derive(Debug, Clone)]
pub struct PreparedExample {
    pub text: String,
    pub tokens: Vec<usize>,
    pub graph: ReasoningGraph,
    pub input: GraphInput,
    pub labels: Vec<usize>,
    pub answers: BTreeSet<EntityId>,
    /// The subgraph hit the node budget.
    pub truncated: bool,
}

pub fn prepare_example(
    kb: &KnowledgeBase,
    example: &QaExample,
    vocab: &Vocab,
    model: &ModelConfig,
    graph: &GraphOptions,
    node_budget: usize,
) -> Result<PreparedExample, super::HarnessError> {
    let sub = extract_subgraph(kb, &example.seeds, example.hops, node_budget)?;
    let (g, adjacency) = build_reasoning_graph(kb, &sub, graph)?;
    let input = GraphInput::new(&g, adjacency, vocab, model);
    let labels = node_labels(&g, &example.answers);
    Ok(PreparedExample {
        text: example.text.clone(),
        tokens: vocab.token_ids(&example.tokens),
        graph: g,
        input,
        labels,
        answers: example.answers.clone(),
        truncated: sub.truncated,
    })
}
