use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::kbstore::{normalize_surface, KnowledgeBase, QaExample};
use crate::tensor::{ParamId, ParamStore};

use super::ModelError;

pub const UNK: &str = "<unk>";

/// Word table shared by node surfaces and question tokens. Id 0 is the
/// unknown word.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Vocab { words, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.words
    }
}

impl Default for Vocab {
    fn default() -> Self {
        Vocab::from(vec![UNK.to_string()])
    }
}

impl Vocab {
    /// Entity surfaces, relation surfaces and question tokens, in that order.
    pub fn build(kb: &KnowledgeBase, questions: &[QaExample]) -> Self {
        let mut v = Vocab::default();
        for e in kb.entities() {
            v.insert(&normalize_surface(e));
        }
        for r in kb.relations() {
            v.insert(&normalize_surface(r));
        }
        for q in questions {
            for t in &q.tokens {
                v.insert(t);
            }
        }
        v
    }

    pub fn insert(&mut self, word: &str) -> usize {
        if let Some(&i) = self.index.get(word) {
            return i;
        }
        self.words.push(word.to_string());
        self.index.insert(word.to_string(), self.words.len() - 1);
        self.words.len() - 1
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Id of `word`, or of [`UNK`].
    pub fn id(&self, word: &str) -> usize {
        self.get(word).unwrap_or(0)
    }

    /// Id for a node surface (normalized the same way as at build time).
    pub fn surface_id(&self, surface: &str) -> usize {
        self.id(&normalize_surface(surface))
    }

    pub fn token_ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }
}

/// Overwrites rows of the word table from a `word v1 ... vn` text file.
/// Returns how many vocabulary words were found; the rest keep their values.
pub fn load_word_vectors(
    path: &Path,
    vocab: &Vocab,
    store: &mut ParamStore,
    table: ParamId,
) -> Result<usize, ModelError> {
    let file = std::fs::File::open(path).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
    let dim = store.value(table).cols();
    let mut found = 0;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| ModelError::Io(e.to_string()))?;
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let values: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
        let values = values.map_err(|e| ModelError::Io(format!("line {}: {e}", idx + 1)))?;
        if values.len() != dim {
            return Err(ModelError::Io(format!(
                "line {}: expected {dim} values, found {}",
                idx + 1,
                values.len()
            )));
        }
        if let Some(id) = vocab.get(&normalize_surface(word)) {
            store.value_mut(table).row_mut(id).copy_from_slice(&values);
            found += 1;
        }
    }
    Ok(found)
}
