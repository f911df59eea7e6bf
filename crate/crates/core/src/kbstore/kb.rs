use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::KbError;

/// Index into a [`KnowledgeBase`] entity vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId(pub u32);

/// Index into a [`KnowledgeBase`] relation vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e#{}", self.0)
    }
}

/// A `(subject, relation, object)` fact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
}

impl Triple {
    pub fn new(subject: EntityId, relation: RelationId, object: EntityId) -> Self {
        Self {
            subject,
            relation,
            object,
        }
    }

    /// The endpoint opposite to `e`, if `e` is an endpoint at all.
    pub fn other(&self, e: EntityId) -> Option<EntityId> {
        if self.subject == e {
            Some(self.object)
        } else if self.object == e {
            Some(self.subject)
        } else {
            None
        }
    }
}

/// Entity and relation vocabularies plus deduplicated triples and a per-entity
/// incidence index.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    entities: Vec<String>,
    relations: Vec<String>,
    triples: Vec<Triple>,
    entity_lookup: HashMap<String, EntityId>,
    relation_lookup: HashMap<String, RelationId>,
    triple_set: HashSet<Triple>,
    adjacency: Vec<Vec<usize>>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id for `name`, adding it to the vocabulary on first sight.
    pub fn intern_entity(&mut self, name: &str) -> EntityId {
        if let Some(&id) = self.entity_lookup.get(name) {
            return id;
        }
        let id = EntityId(self.entities.len() as u32);
        self.entities.push(name.to_string());
        self.entity_lookup.insert(name.to_string(), id);
        self.adjacency.push(Vec::new());
        id
    }

    pub fn intern_relation(&mut self, name: &str) -> RelationId {
        if let Some(&id) = self.relation_lookup.get(name) {
            return id;
        }
        let id = RelationId(self.relations.len() as u32);
        self.relations.push(name.to_string());
        self.relation_lookup.insert(name.to_string(), id);
        id
    }

    /// Adds a triple unless an identical one is already present. Returns
    /// whether it was inserted.
    pub fn add_triple(&mut self, triple: Triple) -> bool {
        assert!(triple.subject.index() < self.entities.len());
        assert!(triple.object.index() < self.entities.len());
        assert!(triple.relation.index() < self.relations.len());
        if !self.triple_set.insert(triple) {
            return false;
        }
        let id = self.triples.len();
        self.triples.push(triple);
        self.adjacency[triple.subject.index()].push(id);
        if triple.object != triple.subject {
            self.adjacency[triple.object.index()].push(id);
        }
        true
    }

    pub fn add_fact(&mut self, subject: &str, relation: &str, object: &str) -> bool {
        let s = self.intern_entity(subject);
        let r = self.intern_relation(relation);
        let o = self.intern_entity(object);
        self.add_triple(Triple::new(s, r, o))
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn relations(&self) -> &[String] {
        &self.relations
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn entity_name(&self, id: EntityId) -> &str {
        &self.entities[id.index()]
    }

    pub fn relation_name(&self, id: RelationId) -> &str {
        &self.relations[id.index()]
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entity_lookup.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relation_lookup.get(name).copied()
    }

    pub fn contains_entity(&self, id: EntityId) -> bool {
        id.index() < self.entities.len()
    }

    /// Ids of triples mentioning `e` as subject or object.
    pub fn incident(&self, e: EntityId) -> &[usize] {
        &self.adjacency[e.index()]
    }

    pub fn contains_triple(&self, triple: &Triple) -> bool {
        self.triple_set.contains(triple)
    }

    /// Parses `subject|relation|object` lines. Blank lines are skipped.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, KbError> {
        let mut kb = KnowledgeBase::new();
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            let line_no = idx + 1;
            let trimmed = line.trim_end_matches(['\r', '\n']);
            if trimmed.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = trimmed.split('|').collect();
            if fields.len() != 3 {
                return Err(KbError::Parse {
                    line: line_no,
                    message: format!("expected 3 '|'-separated fields, found {}", fields.len()),
                });
            }
            let (s, r, o) = (fields[0].trim(), fields[1].trim(), fields[2].trim());
            if s.is_empty() || r.is_empty() || o.is_empty() {
                return Err(KbError::Parse {
                    line: line_no,
                    message: "empty field".to_string(),
                });
            }
            kb.add_fact(s, r, o);
        }
        if kb.triples.is_empty() {
            return Err(KbError::Empty);
        }
        Ok(kb)
    }

    pub fn load(path: &Path) -> Result<Self, KbError> {
        let file = std::fs::File::open(path).map_err(|e| KbError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_reader(file)
    }

    /// Writes triples in insertion order, one per line.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for t in &self.triples {
            writeln!(
                out,
                "{}|{}|{}",
                self.entity_name(t.subject),
                self.relation_name(t.relation),
                self.entity_name(t.object)
            )?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()
    }

    /// Hex SHA-256 over the entity and relation vocabularies, in order.
    pub fn vocab_digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for e in &self.entities {
            hasher.update(e.as_bytes());
            hasher.update([0u8]);
        }
        hasher.update([1u8]);
        for r in &self.relations {
            hasher.update(r.as_bytes());
            hasher.update([0u8]);
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_two_lines() {
        let kb = KnowledgeBase::from_reader("a|r|b\nb|s|c\n".as_bytes()).unwrap();
        assert_eq!(kb.num_entities(), 3);
        assert_eq!(kb.relations().len(), 2);
        assert_eq!(kb.triples().len(), 2);
        assert_eq!(kb.entities(), &["a", "b", "c"]);
    }

    #[test]
    fn drops_exact_duplicates() {
        let kb = KnowledgeBase::from_reader("a|r|b\na|r|b\n".as_bytes()).unwrap();
        assert_eq!(kb.triples().len(), 1);
        assert_eq!(kb.incident(kb.entity_id("a").unwrap()), &[0]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = KnowledgeBase::from_reader("a|r|b\n\na|r\n".as_bytes()).unwrap_err();
        match err {
            KbError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_error() {
        assert!(matches!(
            KnowledgeBase::from_reader("\n  \n".as_bytes()),
            Err(KbError::Empty)
        ));
    }

    #[test]
    fn adjacency_matches_mentions() {
        let kb = KnowledgeBase::from_reader("a|r|b\nb|s|c\nc|r|a\nd|t|d\n".as_bytes()).unwrap();
        for (e, _) in kb.entities().iter().enumerate() {
            let e = EntityId(e as u32);
            let expected: Vec<usize> = kb
                .triples()
                .iter()
                .enumerate()
                .filter(|(_, t)| t.subject == e || t.object == e)
                .map(|(i, _)| i)
                .collect();
            assert_eq!(kb.incident(e), expected.as_slice());
        }
    }
}
