use std::collections::{BTreeSet, HashMap};

use super::{EntityId, KbError, KnowledgeBase};

/// Token that stands in for a bracket-marked seed mention.
pub const SEED_TOKEN: &str = "<seed>";

fn strip_edge_punct(s: &str) -> &str {
    s.trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
}

/// Lowercases and collapses whitespace, the key used for surface matching.
pub fn normalize_surface(s: &str) -> String {
    s.split_whitespace()
        .map(|t| t.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Bracket-delimited spans, as byte ranges of their inner text.
fn bracket_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut open = None;
    for (i, c) in text.char_indices() {
        match c {
            '[' => open = Some(i + 1),
            ']' => {
                if let Some(start) = open.take() {
                    spans.push((start, i));
                }
            }
            _ => {}
        }
    }
    spans
}

fn push_words(out: &mut Vec<String>, text: &str) {
    for raw in text.split_whitespace() {
        let tok = strip_edge_punct(raw).to_lowercase();
        if !tok.is_empty() {
            out.push(tok);
        }
    }
}

/// Lowercase whitespace tokenization with edge punctuation stripped. Each
/// `[...]` span collapses to [`SEED_TOKEN`].
pub fn tokenize_question(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cursor = 0;
    for (start, end) in bracket_spans(text) {
        push_words(&mut out, &text[cursor..start - 1]);
        out.push(SEED_TOKEN.to_string());
        cursor = end + 1;
    }
    push_words(&mut out, &text[cursor..]);
    out
}

/// Surface-form entity matcher over a knowledge base.
///
/// Bracketed spans are looked up exactly (then case-insensitively) and win
/// when any of them resolves. Otherwise every whitespace-token span of the
/// question is matched case-insensitively, longest spans first, keeping only
/// non-overlapping matches.
#[derive(Debug, Clone)]
pub struct EntityLinker {
    by_surface: HashMap<String, Vec<EntityId>>,
    max_tokens: usize,
}

impl EntityLinker {
    pub fn new(kb: &KnowledgeBase) -> Self {
        let mut by_surface: HashMap<String, Vec<EntityId>> = HashMap::new();
        let mut max_tokens = 0;
        for (i, name) in kb.entities().iter().enumerate() {
            let key = normalize_surface(name);
            if key.is_empty() {
                continue;
            }
            max_tokens = max_tokens.max(key.split(' ').count());
            by_surface.entry(key).or_default().push(EntityId(i as u32));
        }
        Self { by_surface, max_tokens }
    }

    fn lookup(&self, span: &str) -> Option<&Vec<EntityId>> {
        let key = normalize_surface(span);
        self.by_surface
            .get(&key)
            .or_else(|| self.by_surface.get(strip_edge_punct(&key)))
    }

    pub fn link(&self, kb: &KnowledgeBase, text: &str) -> Result<BTreeSet<EntityId>, KbError> {
        if text.trim().is_empty() {
            return Err(KbError::Unlinkable(text.to_string()));
        }
        let mut found = BTreeSet::new();
        for (start, end) in bracket_spans(text) {
            let inner = text[start..end].trim();
            if let Some(id) = kb.entity_id(inner) {
                found.insert(id);
            } else if let Some(ids) = self.lookup(inner) {
                found.extend(ids.iter().copied());
            }
        }
        if !found.is_empty() {
            return Ok(found);
        }

        let cleaned: String = text.chars().filter(|c| *c != '[' && *c != ']').collect();
        let tokens: Vec<&str> = cleaned.split_whitespace().collect();
        let mut candidates = Vec::new();
        for start in 0..tokens.len() {
            let limit = self.max_tokens.min(tokens.len() - start);
            for len in 1..=limit {
                let span = tokens[start..start + len].join(" ");
                if let Some(ids) = self.lookup(&span) {
                    candidates.push((start, len, span.chars().count(), ids));
                }
            }
        }
        candidates.sort_by(|a, b| b.1.cmp(&a.1).then(b.2.cmp(&a.2)).then(a.0.cmp(&b.0)));
        let mut covered = vec![false; tokens.len()];
        for (start, len, _, ids) in candidates {
            if covered[start..start + len].iter().any(|&c| c) {
                continue;
            }
            covered[start..start + len].iter_mut().for_each(|c| *c = true);
            found.extend(ids.iter().copied());
        }
        if found.is_empty() {
            Err(KbError::Unlinkable(text.to_string()))
        } else {
            Ok(found)
        }
    }
}

/// One-shot linking; builds a fresh [`EntityLinker`].
pub fn link_entities(text: &str, kb: &KnowledgeBase) -> Result<BTreeSet<EntityId>, KbError> {
    EntityLinker::new(kb).link(kb, text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kb(lines: &str) -> KnowledgeBase {
        KnowledgeBase::from_reader(lines.as_bytes()).unwrap()
    }

    #[test]
    fn bracketed_seed() {
        let kb = kb("Cold Souls|starred_actors|Dina Korzun\nCold Souls|has_genre|Drama\n");
        let got = link_entities("what genres are the films acted by [Dina Korzun]", &kb).unwrap();
        assert_eq!(got.len(), 1);
        assert!(got.contains(&kb.entity_id("Dina Korzun").unwrap()));
    }

    #[test]
    fn bracket_takes_precedence_over_other_mentions() {
        let kb = kb("Drama|r|Cold Souls\n");
        let got = link_entities("which drama is [Cold Souls]", &kb).unwrap();
        assert_eq!(got, BTreeSet::from([kb.entity_id("Cold Souls").unwrap()]));
    }

    #[test]
    fn no_match_is_unlinkable() {
        let kb = kb("a|r|b\n");
        assert!(matches!(
            link_entities("nothing to see here", &kb),
            Err(KbError::Unlinkable(_))
        ));
    }

    #[test]
    fn longest_match_wins() {
        let kb = kb("New York|r|New York City\n");
        let got = link_entities("who was the mayor of new york city?", &kb).unwrap();
        assert_eq!(got, BTreeSet::from([kb.entity_id("New York City").unwrap()]));
    }

    #[test]
    fn tokenization_rules() {
        assert_eq!(
            tokenize_question("What films did [Dina Korzun] act in?"),
            vec!["what", "films", "did", SEED_TOKEN, "act", "in"]
        );
        assert_eq!(tokenize_question("  Hello,  world!! "), vec!["hello", "world"]);
        assert_eq!(tokenize_question("o'brien's film"), vec!["o'brien's", "film"]);
    }
}
