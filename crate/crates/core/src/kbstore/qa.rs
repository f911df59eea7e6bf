use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::linking::{tokenize_question, EntityLinker};
use super::{EntityId, KbError, KnowledgeBase};

/// A question with its linked seeds and gold answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaExample {
    pub text: String,
    pub tokens: Vec<String>,
    pub seeds: BTreeSet<EntityId>,
    pub answers: BTreeSet<EntityId>,
    pub hops: usize,
}

/// A question that could not be linked to any KB entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnlinkableQuestion {
    pub line: usize,
    pub text: String,
}

#[derive(Debug, Clone, Default)]
pub struct QaDataset {
    pub examples: Vec<QaExample>,
    pub unlinkable: Vec<UnlinkableQuestion>,
}

impl QaDataset {
    pub fn len(&self) -> usize {
        self.examples.len() + self.unlinkable.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hop_histogram(&self) -> std::collections::BTreeMap<usize, usize> {
        let mut out = std::collections::BTreeMap::new();
        for ex in &self.examples {
            *out.entry(ex.hops).or_insert(0) += 1;
        }
        out
    }
}

/// Parses `question<TAB>ans1|ans2|...` lines. `hops` is the dataset-declared
/// hop count stamped on every example.
pub fn parse_qa<R: Read>(reader: R, kb: &KnowledgeBase, hops: usize) -> Result<QaDataset, KbError> {
    let linker = EntityLinker::new(kb);
    let mut data = QaDataset::default();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (question, answers) = line.split_once('\t').ok_or_else(|| KbError::Qa {
            line: line_no,
            message: "missing tab separator".into(),
        })?;
        let question = question.trim();
        let mut gold = BTreeSet::new();
        for ans in answers.trim_end_matches(['\r', '\n']).split('|') {
            let ans = ans.trim();
            if ans.is_empty() {
                continue;
            }
            let id = kb.entity_id(ans).ok_or_else(|| KbError::Qa {
                line: line_no,
                message: format!("unknown answer entity {ans:?}"),
            })?;
            gold.insert(id);
        }
        if gold.is_empty() {
            return Err(KbError::Qa {
                line: line_no,
                message: "empty answer list".into(),
            });
        }
        let tokens = tokenize_question(question);
        if tokens.is_empty() {
            return Err(KbError::Qa {
                line: line_no,
                message: "question has no tokens".into(),
            });
        }
        match linker.link(kb, question) {
            Ok(seeds) => data.examples.push(QaExample {
                text: question.to_string(),
                tokens,
                seeds,
                answers: gold,
                hops,
            }),
            Err(KbError::Unlinkable(_)) => data.unlinkable.push(UnlinkableQuestion {
                line: line_no,
                text: question.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(data)
}

pub fn load_qa(path: &Path, kb: &KnowledgeBase, hops: usize) -> Result<QaDataset, KbError> {
    let file = std::fs::File::open(path).map_err(|e| KbError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_qa(file, kb, hops)
}

pub fn write_qa<W: Write>(mut out: W, kb: &KnowledgeBase, examples: &[QaExample]) -> std::io::Result<()> {
    for ex in examples {
        let answers: Vec<&str> = ex.answers.iter().map(|a| kb.entity_name(*a)).collect();
        writeln!(out, "{}\t{}", ex.text, answers.join("|"))?;
    }
    Ok(())
}
