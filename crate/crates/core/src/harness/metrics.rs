use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::graphbuild::{NodeKind, ReasoningGraph};
use crate::kbstore::EntityId;
use crate::tensor::Tensor;

/// 1 iff the predicted answer set equals the gold set exactly.
pub fn full_metric(predicted: &BTreeSet<EntityId>, gold: &BTreeSet<EntityId>) -> u8 {
    u8::from(predicted == gold)
}

/// Index of the highest score; ties go to the earliest position.
pub fn argmax_first(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
}

/// 1 iff the top-scoring entity is gold. `scores` are in node-index order,
/// so ties resolve to the lowest node index.
pub fn hits_at_1(scores: &[(EntityId, f64)], gold: &BTreeSet<EntityId>) -> u8 {
    let values: Vec<f64> = scores.iter().map(|(_, s)| *s).collect();
    match argmax_first(&values) {
        Some(i) => u8::from(gold.contains(&scores[i].0)),
        None => 0,
    }
}

/// Decoded model output for one question.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Entity nodes whose answer probability strictly exceeds the
    /// non-answer probability.
    pub answers: BTreeSet<EntityId>,
    /// Entity scores in node order.
    pub entity_scores: Vec<(EntityId, f64)>,
    pub top1: Option<EntityId>,
    /// Whether some relation node outscored every entity node.
    pub relation_would_win: bool,
}

pub fn decode(graph: &ReasoningGraph, probs: &Tensor) -> Prediction {
    let mut answers = BTreeSet::new();
    let mut entity_scores = Vec::new();
    let mut best_relation = f64::NEG_INFINITY;
    for (i, node) in graph.nodes.iter().enumerate() {
        let (p_no, p_yes) = (probs.get(i, 0), probs.get(i, 1));
        match (node.kind, node.entity()) {
            (NodeKind::Entity, Some(e)) => {
                if p_yes > p_no {
                    answers.insert(e);
                }
                entity_scores.push((e, p_yes));
            }
            _ => best_relation = best_relation.max(p_yes),
        }
    }
    let values: Vec<f64> = entity_scores.iter().map(|(_, s)| *s).collect();
    let top = argmax_first(&values);
    let top1 = top.map(|i| entity_scores[i].0);
    let relation_would_win = top.is_some_and(|i| best_relation > values[i]);
    Prediction {
        answers,
        entity_scores,
        top1,
        relation_would_win,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub question: String,
    pub predicted: Vec<EntityId>,
    pub gold: Vec<EntityId>,
    pub top1: Option<EntityId>,
    pub hit: u8,
    pub full: u8,
    pub relation_would_win: bool,
}

/// Averages of per-question 0/1 indicators; unlinkable questions count as
/// misses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub hits_at_1: f64,
    pub full: f64,
    pub n_questions: usize,
    pub n_unlinkable: usize,
    pub variant: String,
    pub config_digest: String,
    /// Questions where a relation node outscored every entity node.
    #[serde(default)]
    pub relation_top1: usize,
    /// Subgraphs cut short by the node budget.
    #[serde(default)]
    pub truncated_subgraphs: usize,
    #[serde(skip)]
    pub records: Vec<QuestionRecord>,
}

impl MetricsReport {
    pub fn from_records(records: Vec<QuestionRecord>, n_unlinkable: usize, variant: &str, config_digest: &str) -> Self {
        let n = records.len() + n_unlinkable;
        let hits: usize = records.iter().map(|r| r.hit as usize).sum();
        let full: usize = records.iter().map(|r| r.full as usize).sum();
        let relation_top1 = records.iter().filter(|r| r.relation_would_win).count();
        let mean = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        Self {
            hits_at_1: mean(hits),
            full: mean(full),
            n_questions: n,
            n_unlinkable,
            variant: variant.to_string(),
            config_digest: config_digest.to_string(),
            relation_top1,
            truncated_subgraphs: 0,
            records,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ids: &[u32]) -> BTreeSet<EntityId> {
        ids.iter().map(|&i| EntityId(i)).collect()
    }

    #[test]
    fn full_metric_cases() {
        assert_eq!(full_metric(&set(&[0, 1]), &set(&[0, 1])), 1);
        assert_eq!(full_metric(&set(&[]), &set(&[0])), 0);
        assert_eq!(full_metric(&set(&[0, 1, 2]), &set(&[0, 1])), 0);
    }

    #[test]
    fn hits_cases() {
        let (a, b) = (EntityId(0), EntityId(1));
        assert_eq!(hits_at_1(&[(a, 0.9), (b, 0.2)], &set(&[0])), 1);
        assert_eq!(hits_at_1(&[(a, 0.9), (b, 0.2)], &set(&[1])), 0);
        assert_eq!(hits_at_1(&[(a, 0.5), (b, 0.5)], &set(&[1])), 0);
        assert_eq!(hits_at_1(&[(b, 0.5), (a, 0.5)], &set(&[1])), 1);
        assert_eq!(hits_at_1(&[], &set(&[1])), 0);
    }

    #[test]
    fn report_means_include_unlinkable() {
        let rec = |hit, full| QuestionRecord {
            question: String::new(),
            predicted: vec![],
            gold: vec![],
            top1: None,
            hit,
            full,
            relation_would_win: false,
        };
        let r = MetricsReport::from_records(vec![rec(1, 1), rec(1, 0), rec(0, 0)], 1, "full", "x");
        assert_eq!(r.n_questions, 4);
        assert_eq!(r.hits_at_1, 0.5);
        assert_eq!(r.full, 0.25);
    }
}
