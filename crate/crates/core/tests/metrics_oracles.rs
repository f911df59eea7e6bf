use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rdas_core::graphbuild::{Node, NodeKind, NodeSource, ReasoningGraph};
use rdas_core::harness::{decode, full_metric, hits_at_1, MetricsReport, QuestionRecord};
use rdas_core::kbstore::{EntityId, RelationId};
use rdas_core::tensor::Tensor;

const LEVELS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

fn graph(kinds: &[bool]) -> ReasoningGraph {
    let mut nodes = Vec::new();
    let mut entity_index = BTreeMap::new();
    for (i, &is_entity) in kinds.iter().enumerate() {
        if is_entity {
            // ids deliberately out of node order
            let e = EntityId((100 - i) as u32);
            entity_index.insert(e, i);
            nodes.push(Node {
                kind: NodeKind::Entity,
                source: NodeSource::Entity(e),
                surface: format!("e{i}"),
            });
        } else {
            let r = RelationId(i as u32);
            nodes.push(Node {
                kind: NodeKind::Relation,
                source: NodeSource::RelationType(r),
                surface: format!("r{i}"),
            });
        }
    }
    ReasoningGraph {
        hops: vec![0; nodes.len()],
        nodes,
        edges: Vec::new(),
        seeds: vec![0],
        entity_index,
        dropped_unreachable: 0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn decode_and_metrics_match_oracle(
        rows in prop::collection::vec((any::<bool>(), 0usize..5), 0..10),
        gold_mask in prop::collection::vec(any::<bool>(), 10),
    ) {
        let kinds: Vec<bool> = rows.iter().map(|r| r.0).collect();
        let g = graph(&kinds);
        let p: Vec<f64> = rows.iter().map(|r| LEVELS[r.1]).collect();
        let probs = Tensor::from_rows(&p.iter().map(|&x| vec![1.0 - x, x]).collect::<Vec<_>>());
        let probs = if p.is_empty() { Tensor::zeros(0, 2) } else { probs };
        let pred = decode(&g, &probs);

        let entities: Vec<(usize, EntityId)> = g.nodes.iter().enumerate()
            .filter_map(|(i, n)| n.entity().map(|e| (i, e))).collect();
        let gold: BTreeSet<EntityId> = entities.iter()
            .filter(|(i, _)| gold_mask[*i]).map(|(_, e)| *e).collect();

        // answers: strictly more likely yes than no
        let want: BTreeSet<EntityId> = entities.iter().filter(|(i, _)| p[*i] > 0.5).map(|(_, e)| *e).collect();
        prop_assert_eq!(&pred.answers, &want);

        // top-1: stable sort by descending score keeps the earliest node first
        let mut ranked = entities.clone();
        ranked.sort_by(|a, b| p[b.0].partial_cmp(&p[a.0]).unwrap());
        let top = ranked.first().copied();
        prop_assert_eq!(pred.top1, top.map(|t| t.1));
        let hit = top.is_some_and(|(_, e)| gold.contains(&e));
        prop_assert_eq!(hits_at_1(&pred.entity_scores, &gold), u8::from(hit));

        let best_rel = (0..p.len()).filter(|&i| !kinds[i]).map(|i| p[i]).fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));
        let rel_wins = matches!((top, best_rel), (Some((i, _)), Some(r)) if r > p[i]);
        prop_assert_eq!(pred.relation_would_win, rel_wins);

        prop_assert_eq!(full_metric(&pred.answers, &gold), u8::from(pred.answers == gold));
        // an empty prediction only scores on an empty gold set
        prop_assert_eq!(full_metric(&BTreeSet::new(), &gold), u8::from(gold.is_empty()));
    }
}

fn record(hit: u8, full: u8) -> QuestionRecord {
    QuestionRecord {
        question: String::new(),
        predicted: Vec::new(),
        gold: Vec::new(),
        top1: None,
        hit,
        full,
        relation_would_win: false,
    }
}

#[test]
fn ten_question_means() {
    // eight linked questions, two unlinkable
    let outcomes = [(1, 1), (1, 0), (0, 0), (1, 1), (0, 0), (1, 0), (1, 1), (0, 1)];
    let records = outcomes.iter().map(|&(h, f)| record(h, f)).collect();
    let report = MetricsReport::from_records(records, 2, "RDAS", "abc");
    assert_eq!(report.n_questions, 10);
    assert_eq!(report.hits_at_1, 0.5);
    assert_eq!(report.full, 0.4);

    let empty = MetricsReport::from_records(Vec::new(), 0, "RDAS", "abc");
    assert_eq!((empty.hits_at_1, empty.full), (0.0, 0.0));
}

#[test]
fn ties_go_to_the_first_node() {
    let g = graph(&[true, false, true, true]);
    let probs = Tensor::from_rows(&[vec![0.4, 0.6], vec![0.1, 0.9], vec![0.4, 0.6], vec![0.5, 0.5]]);
    let pred = decode(&g, &probs);
    assert_eq!(pred.top1, Some(EntityId(100)));
    assert!(pred.relation_would_win);
    assert_eq!(pred.answers, BTreeSet::from([EntityId(100), EntityId(98)]));
}
