//! Seeded generator for small multi-hop QA tasks with known answers.
//!
//! Entities are split into types and every relation links two different
//! types. From any entity a relation can therefore only be walked one way,
//! so the answers to "r of x" are exactly the r-neighbours of x. Questions
//! name a seed in brackets and spell the relation path with the relation
//! names as words.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::linking::tokenize_question;
use super::{EntityId, KbError, KnowledgeBase, QaExample, RelationId, Triple};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
    pub hops: usize,
    pub questions: usize,
    /// Minimum number of seed-incident triples whose relation differs from
    /// the first relation of the question path.
    pub distractors: usize,
    pub types: usize,
    pub max_answers: usize,
}

impl SyntheticSpec {
    pub fn new(entities: usize, relations: usize, triples: usize, hops: usize, questions: usize) -> Self {
        Self {
            entities,
            relations,
            triples,
            hops,
            questions,
            distractors: 1,
            types: 2,
            max_answers: 4,
        }
    }

    /// Parses `key=value` lines; `#` starts a comment. Unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self, KbError> {
        let mut spec = SyntheticSpec::new(0, 0, 0, 1, 0);
        let mut seen = HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |message: String| KbError::Parse { line: idx + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got {line:?}")))?;
            let key = key.trim();
            let value: usize = value
                .trim()
                .parse()
                .map_err(|_| bad(format!("value for {key} is not a nonnegative integer")))?;
            if !seen.insert(key.to_string()) {
                return Err(bad(format!("duplicate key {key}")));
            }
            match key {
                "entities" => spec.entities = value,
                "relations" => spec.relations = value,
                "triples" => spec.triples = value,
                "hops" => spec.hops = value,
                "questions" => spec.questions = value,
                "distractors" => spec.distractors = value,
                "types" => spec.types = value,
                "max_answers" => spec.max_answers = value,
                other => return Err(bad(format!("unknown key {other:?}"))),
            }
        }
        for required in ["entities", "relations", "triples", "hops", "questions"] {
            if !seen.contains(required) {
                return Err(KbError::InvalidArgument(format!(
                    "synthetic spec is missing {required}"
                )));
            }
        }
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in [
            ("entities", self.entities),
            ("relations", self.relations),
            ("triples", self.triples),
            ("hops", self.hops),
            ("questions", self.questions),
            ("distractors", self.distractors),
            ("types", self.types),
            ("max_answers", self.max_answers),
        ] {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    fn validate(&self) -> Result<(), KbError> {
        let fail = |m: &str| Err(KbError::Infeasible(m.to_string()));
        if self.hops == 0 {
            return fail("hops must be at least 1");
        }
        if self.types < 2 {
            return fail("need at least two entity types");
        }
        if self.entities < 2 * self.types {
            return fail("need at least two entities per type");
        }
        if self.relations < self.types {
            return fail("every entity type needs an outgoing relation");
        }
        if self.triples == 0 || self.questions == 0 || self.max_answers == 0 {
            return fail("triples, questions and max_answers must be positive");
        }
        Ok(())
    }
}

/// Generated KB and questions; `paths[i]` is the relation sequence that
/// defines `examples[i].answers`.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub kb: KnowledgeBase,
    pub examples: Vec<QaExample>,
    pub paths: Vec<Vec<RelationId>>,
}

fn entity_name(i: usize) -> String {
    format!("e{i}")
}

fn relation_name(j: usize) -> String {
    format!("r{j}")
}

fn relation_types(j: usize, types: usize) -> (usize, usize) {
    let domain = j % types;
    let range = (domain + 1 + (j / types) % (types - 1)) % types;
    (domain, range)
}

/// Entities reached from `start` by walking each relation of `path` in
/// either direction.
pub fn follow_path(kb: &KnowledgeBase, start: EntityId, path: &[RelationId]) -> BTreeSet<EntityId> {
    let mut frontier = BTreeSet::from([start]);
    for &r in path {
        let mut next = BTreeSet::new();
        for &e in &frontier {
            for &tid in kb.incident(e) {
                let t = kb.triples()[tid];
                if t.relation == r {
                    next.extend(t.other(e));
                }
            }
        }
        frontier = next;
    }
    frontier
}

fn question_text(template: usize, seed: &str, path: &[&str]) -> String {
    match template {
        0 => {
            let mut rev: Vec<&str> = path.to_vec();
            rev.reverse();
            format!("what is the {} of [{seed}]", rev.join(" of the "))
        }
        1 => format!("starting from [{seed}] follow {}", path.join(" then ")),
        _ => format!("[{seed}] {} what", path.join(" ")),
    }
}

/// Deterministic in `(spec, seed)`.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticTask, KbError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kb = KnowledgeBase::new();
    for i in 0..spec.entities {
        kb.intern_entity(&entity_name(i));
    }
    for j in 0..spec.relations {
        kb.intern_relation(&relation_name(j));
    }
    let by_type: Vec<Vec<usize>> = (0..spec.types)
        .map(|t| (0..spec.entities).filter(|i| i % spec.types == t).collect())
        .collect();

    let mut attempts = 0usize;
    while kb.triples().len() < spec.triples {
        attempts += 1;
        if attempts > spec.triples * 100 {
            return Err(KbError::Infeasible(format!(
                "could not place {} distinct triples",
                spec.triples
            )));
        }
        let j = rng.gen_range(0..spec.relations);
        let (dom, ran) = relation_types(j, spec.types);
        let s = *by_type[dom].choose(&mut rng).expect("nonempty type");
        let o = *by_type[ran].choose(&mut rng).expect("nonempty type");
        kb.add_triple(Triple::new(
            EntityId(s as u32),
            RelationId(j as u32),
            EntityId(o as u32),
        ));
    }

    let rels_at: Vec<Vec<usize>> = (0..spec.types)
        .map(|t| {
            (0..spec.relations)
                .filter(|&j| {
                    let (d, r) = relation_types(j, spec.types);
                    d == t || r == t
                })
                .collect()
        })
        .collect();

    let mut examples = Vec::with_capacity(spec.questions);
    let mut paths = Vec::with_capacity(spec.questions);
    let mut used: HashSet<(EntityId, Vec<RelationId>)> = HashSet::new();
    let mut attempts = 0usize;
    while examples.len() < spec.questions {
        attempts += 1;
        if attempts > spec.questions * 500 {
            return Err(KbError::Infeasible(format!(
                "found only {} of {} questions with a {}-hop answer path",
                examples.len(),
                spec.questions,
                spec.hops
            )));
        }
        let seed_idx = rng.gen_range(0..spec.entities);
        let seed_id = EntityId(seed_idx as u32);
        let mut ty = seed_idx % spec.types;
        let mut path: Vec<RelationId> = Vec::with_capacity(spec.hops);
        for _ in 0..spec.hops {
            let options: Vec<usize> = rels_at[ty]
                .iter()
                .copied()
                .filter(|&j| path.last() != Some(&RelationId(j as u32)))
                .collect();
            let Some(&j) = options.choose(&mut rng) else { break };
            path.push(RelationId(j as u32));
            let (d, r) = relation_types(j, spec.types);
            ty = if d == ty { r } else { d };
        }
        if path.len() < spec.hops {
            continue;
        }
        let template = rng.gen_range(0..3);
        let gold = follow_path(&kb, seed_id, &path);
        if gold.is_empty() || gold.len() > spec.max_answers || gold.contains(&seed_id) {
            continue;
        }
        let distractors = kb
            .incident(seed_id)
            .iter()
            .filter(|&&tid| kb.triples()[tid].relation != path[0])
            .count();
        if distractors < spec.distractors.max(1) {
            continue;
        }
        if !used.insert((seed_id, path.clone())) {
            continue;
        }
        let words: Vec<&str> = path.iter().map(|r| kb.relation_name(*r)).collect();
        let text = question_text(template, kb.entity_name(seed_id), &words);
        examples.push(QaExample {
            tokens: tokenize_question(&text),
            text,
            seeds: BTreeSet::from([seed_id]),
            answers: gold,
            hops: spec.hops,
        });
        paths.push(path);
    }
    Ok(SyntheticTask { kb, examples, paths })
}
