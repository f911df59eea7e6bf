use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graphbuild::NodeKind;
use crate::kbstore::{KnowledgeBase, QaDataset, QaExample};
use crate::model::ModelConfig;
use crate::tensor::Tape;

use super::metrics::MetricsReport;
use super::prepare::prepare_example;
use super::train::{config_digest, train, ModelBundle};
use super::{HarnessError, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoRn,
    NoDirection,
    NoDe,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoRn, Variant::NoDirection, Variant::NoDe];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "RDAS",
            Variant::NoRn => "No RN",
            Variant::NoDirection => "No Direction",
            Variant::NoDe => "No DE",
        }
    }

    /// The base configuration with this variant's component removed.
    pub fn apply(self, model: &ModelConfig, config: &TrainConfig) -> (ModelConfig, TrainConfig) {
        let (mut m, mut c) = (*model, *config);
        match self {
            Variant::Full => {}
            Variant::NoRn => c.graph.no_relation_nodes = true,
            Variant::NoDirection => c.graph.no_direction = true,
            Variant::NoDe => m.no_distance_embedding = true,
        }
        (m, c)
    }
}

/// Structural facts about a variant's dev graphs and trained model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureCheck {
    pub graphs: usize,
    pub relation_nodes: usize,
    pub symmetric_graphs: usize,
    /// Every distance vector the model produces on the dev graphs is zero.
    pub distance_vectors_zero: bool,
}

impl StructureCheck {
    /// Whether the variant's defining property holds.
    pub fn holds(&self, variant: Variant) -> bool {
        match variant {
            Variant::Full => self.relation_nodes > 0 && !self.distance_vectors_zero,
            Variant::NoRn => self.relation_nodes == 0,
            Variant::NoDirection => self.symmetric_graphs == self.graphs,
            Variant::NoDe => self.distance_vectors_zero,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub report: MetricsReport,
    pub structure: StructureCheck,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seed: u64,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<14} {:>7} {:>7} {:>9}\n", "Model", "Hits@1", "Full", "structure");
        for row in &self.rows {
            out.push_str(&format!(
                "{:<14} {:>7.3} {:>7.3} {:>9}\n",
                row.variant.name(),
                row.report.hits_at_1,
                row.report.full,
                if row.structure.holds(row.variant) {
                    "ok"
                } else {
                    "FAILED"
                }
            ));
        }
        out
    }
}

fn check_structure(
    bundle: &ModelBundle,
    kb: &KnowledgeBase,
    dev: &[QaExample],
) -> Result<StructureCheck, HarnessError> {
    let net = bundle.network()?;
    let mut check = StructureCheck {
        graphs: 0,
        relation_nodes: 0,
        symmetric_graphs: 0,
        distance_vectors_zero: true,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for ex in dev {
        let p = prepare_example(kb, ex, &bundle.vocab, &bundle.model, &bundle.graph, bundle.node_budget)?;
        check.graphs += 1;
        check.relation_nodes += p.graph.nodes.iter().filter(|n| n.kind == NodeKind::Relation).count();
        check.symmetric_graphs += usize::from(p.graph.is_symmetric());
        let mut tape = Tape::new(&bundle.store);
        let d = net.distance_features(&mut tape, &p.input)?;
        check.distance_vectors_zero &= tape.value(d).data().iter().all(|&x| x == 0.0);
        // a forward pass must also succeed on every variant
        net.forward(&mut tape, &p.input, &p.tokens, false, &mut rng)?;
    }
    Ok(check)
}

/// Trains and scores the full model and the three ablations under the same
/// seed, data and budget. Metrics are on `dev`.
pub fn run_ablations(
    kb: &KnowledgeBase,
    train_set: &[QaExample],
    dev: &QaDataset,
    model: &ModelConfig,
    config: &TrainConfig,
) -> Result<AblationReport, HarnessError> {
    let mut rows = Vec::with_capacity(Variant::ALL.len());
    for variant in Variant::ALL {
        let (m, c) = variant.apply(model, config);
        let outcome = train(kb, train_set, dev, &m, &c)?;
        let structure = check_structure(&outcome.best, kb, &dev.examples)?;
        let mut report = outcome.best_dev;
        report.variant = variant.name().to_string();
        report.config_digest = config_digest(&m, &c);
        rows.push(AblationRow {
            variant,
            report,
            structure,
            best_epoch: outcome.best_epoch,
        });
    }
    Ok(AblationReport {
        seed: config.seed,
        rows,
    })
}
