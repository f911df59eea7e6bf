//! Knowledge-base and QA dataset loading, entity linking, subgraph
//! extraction and synthetic task generation.

mod kb;
mod linking;
mod qa;
mod subgraph;
mod synthetic;

pub use kb::{EntityId, KnowledgeBase, RelationId, Triple};
pub use linking::{link_entities, normalize_surface, tokenize_question, EntityLinker, SEED_TOKEN};
pub use qa::{load_qa, parse_qa, write_qa, QaDataset, QaExample, UnlinkableQuestion};
pub use subgraph::{extract_subgraph, Subgraph, DEFAULT_NODE_BUDGET};
pub use synthetic::{follow_path, generate_synthetic, SyntheticSpec, SyntheticTask};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KbError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("knowledge base contains no triples")]
    Empty,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Read(#[from] std::io::Error),
    #[error("unlinkable question: {0:?}")]
    Unlinkable(String),
    #[error("seed entity {0} is not in the knowledge base")]
    UnknownSeed(EntityId),
    #[error("qa line {line}: {message}")]
    Qa { line: usize, message: String },
    #[error("infeasible synthetic spec: {0}")]
    Infeasible(String),
    #[error("{0}")]
    InvalidArgument(String),
}
