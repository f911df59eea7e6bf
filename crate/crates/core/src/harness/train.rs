use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::graphbuild::GraphOptions;
use crate::kbstore::{KnowledgeBase, QaDataset, QaExample};
use crate::model::{ModelConfig, Rdas, Vocab};
use crate::tensor::{Adam, Checkpoint, ParamStore, Tape, TensorError};

use super::metrics::{decode, full_metric, hits_at_1, MetricsReport, QuestionRecord};
use super::prepare::{prepare_example, PreparedExample};
use super::{HarnessError, TrainConfig};

const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;
const SPLIT_STREAM: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Short hex digest of the resolved model and training configuration.
pub fn config_digest(model: &ModelConfig, train: &TrainConfig) -> String {
    let text = serde_json::to_string(&(model, train)).expect("configs serialize");
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Seeded holdout of `fraction` of `examples` (at least one when there are
/// two or more). Returns `(train, dev)`; both keep the input order.
pub fn split_dev(examples: &[QaExample], fraction: f64, seed: u64) -> (Vec<QaExample>, Vec<QaExample>) {
    let n = examples.len();
    let mut k = (n as f64 * fraction).round() as usize;
    if n >= 2 && fraction > 0.0 {
        k = k.clamp(1, n - 1);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, SPLIT_STREAM));
    let mut held = vec![false; n];
    for &i in &order[..k] {
        held[i] = true;
    }
    let (mut train, mut dev) = (Vec::new(), Vec::new());
    for (ex, h) in examples.iter().zip(held) {
        if h {
            dev.push(ex.clone())
        } else {
            train.push(ex.clone())
        }
    }
    (train, dev)
}

/// Trained parameters together with what is needed to run them again.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub model: ModelConfig,
    pub graph: GraphOptions,
    pub node_budget: usize,
    pub vocab: Vocab,
    pub store: ParamStore,
    /// Digest of the entity and relation tables the vocabulary was built from.
    pub kb_digest: String,
}

#[derive(Serialize, Deserialize)]
struct BundleMeta {
    model: ModelConfig,
    graph: GraphOptions,
    node_budget: usize,
    vocab: Vocab,
    kb_digest: String,
    #[serde(default)]
    extra: serde_json::Value,
}

impl ModelBundle {
    pub fn network(&self) -> Result<Rdas, HarnessError> {
        Ok(Rdas::bind(self.model, &self.store)?)
    }

    pub fn to_checkpoint(&self, seed: u64, extra: serde_json::Value) -> Result<Checkpoint, HarnessError> {
        let meta = BundleMeta {
            model: self.model,
            graph: self.graph,
            node_budget: self.node_budget,
            vocab: self.vocab.clone(),
            kb_digest: self.kb_digest.clone(),
            extra,
        };
        let meta = serde_json::to_value(meta).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
        Ok(Checkpoint::capture(&self.store, seed, meta)?)
    }

    /// Returns the bundle and any extra metadata stored with it.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<(Self, serde_json::Value), HarnessError> {
        let meta: BundleMeta = serde_json::from_value(ckpt.metadata.clone())
            .map_err(|e| TensorError::Checkpoint(format!("metadata: {e}")))?;
        let bundle = Self {
            model: meta.model,
            graph: meta.graph,
            node_budget: meta.node_budget,
            vocab: meta.vocab,
            store: ckpt.restore()?,
            kb_digest: meta.kb_digest,
        };
        bundle.network()?;
        Ok((bundle, meta.extra))
    }

    pub fn save(&self, path: &Path, seed: u64, extra: serde_json::Value) -> Result<(), HarnessError> {
        Ok(self.to_checkpoint(seed, extra)?.save(path)?)
    }

    pub fn load(path: &Path) -> Result<(Self, serde_json::Value), HarnessError> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    fn check_compatible(&self, kb: &KnowledgeBase) -> Result<(), HarnessError> {
        let digest = kb.vocab_digest();
        if digest != self.kb_digest {
            return Err(HarnessError::VocabMismatch(format!(
                "checkpoint was trained on knowledge base {}, got {}",
                &self.kb_digest[..12.min(self.kb_digest.len())],
                &digest[..12]
            )));
        }
        let net = self.network()?;
        let rows = net.vocab_size(&self.store);
        if rows != self.vocab.len() {
            return Err(HarnessError::VocabMismatch(format!(
                "{} vocabulary words but {rows} embedding rows",
                self.vocab.len()
            )));
        }
        Ok(())
    }

    fn prepare(&self, kb: &KnowledgeBase, ex: &QaExample) -> Result<PreparedExample, HarnessError> {
        prepare_example(kb, ex, &self.vocab, &self.model, &self.graph, self.node_budget)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_hits_at_1: f64,
    pub dev_full: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best dev epoch.
    pub best: ModelBundle,
    pub best_epoch: usize,
    pub best_dev: MetricsReport,
    /// Mean training loss before the first update, dropout off.
    pub initial_loss: f64,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
}

fn predict(net: &Rdas, store: &ParamStore, p: &PreparedExample) -> Result<QuestionRecord, HarnessError> {
    let mut rng = stream(0, DROPOUT_STREAM);
    let mut tape = Tape::new(store);
    let out = net.forward(&mut tape, &p.input, &p.tokens, false, &mut rng)?;
    let pred = decode(&p.graph, tape.value(out.probs));
    Ok(QuestionRecord {
        question: p.text.clone(),
        hit: hits_at_1(&pred.entity_scores, &p.answers),
        full: full_metric(&pred.answers, &p.answers),
        predicted: pred.answers.into_iter().collect(),
        gold: p.answers.iter().copied().collect(),
        top1: pred.top1,
        relation_would_win: pred.relation_would_win,
    })
}

fn score(
    net: &Rdas,
    store: &ParamStore,
    prepared: &[PreparedExample],
    n_unlinkable: usize,
    variant: &str,
    digest: &str,
) -> Result<MetricsReport, HarnessError> {
    let records = prepared
        .iter()
        .map(|p| predict(net, store, p))
        .collect::<Result<Vec<_>, _>>()?;
    let mut report = MetricsReport::from_records(records, n_unlinkable, variant, digest);
    report.truncated_subgraphs = prepared.iter().filter(|p| p.truncated).count();
    Ok(report)
}

/// Scores every question with dropout off. Unlinkable questions in
/// `dataset` count as misses.
pub fn evaluate(
    bundle: &ModelBundle,
    kb: &KnowledgeBase,
    dataset: &QaDataset,
    variant: &str,
    digest: &str,
) -> Result<MetricsReport, HarnessError> {
    bundle.check_compatible(kb)?;
    let net = bundle.network()?;
    let prepared = dataset
        .examples
        .iter()
        .map(|ex| bundle.prepare(kb, ex))
        .collect::<Result<Vec<_>, _>>()?;
    score(
        &net,
        &bundle.store,
        &prepared,
        dataset.unlinkable.len(),
        variant,
        digest,
    )
}

fn mean_loss(net: &Rdas, store: &ParamStore, prepared: &[PreparedExample]) -> Result<f64, HarnessError> {
    let mut rng = stream(0, DROPOUT_STREAM);
    let mut total = 0.0;
    for p in prepared {
        let mut tape = Tape::new(store);
        let out = net.forward(&mut tape, &p.input, &p.tokens, false, &mut rng)?;
        let loss = net.loss(&mut tape, out.probs, &p.labels)?;
        total += tape.value(loss).item();
    }
    Ok(total / prepared.len() as f64)
}

pub fn train(
    kb: &KnowledgeBase,
    train_set: &[QaExample],
    dev: &QaDataset,
    model: &ModelConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome, HarnessError> {
    train_with_progress(kb, train_set, dev, model, config, &mut |_| {})
}

/// Like [`train`], calling `progress` after every epoch.
pub fn train_with_progress(
    kb: &KnowledgeBase,
    train_set: &[QaExample],
    dev: &QaDataset,
    model: &ModelConfig,
    config: &TrainConfig,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome, HarnessError> {
    config.validate()?;
    model.validate()?;
    if train_set.is_empty() {
        return Err(HarnessError::EmptyTrainSet);
    }
    let digest = config_digest(model, config);
    let mut vocab_questions = train_set.to_vec();
    vocab_questions.extend(dev.examples.iter().cloned());
    let vocab = Vocab::build(kb, &vocab_questions);

    let mut store = ParamStore::new();
    let net = Rdas::init(*model, vocab.len(), &mut store, &mut stream(config.seed, INIT_STREAM))?;
    let mut bundle = ModelBundle {
        model: *model,
        graph: config.graph,
        node_budget: config.node_budget,
        vocab,
        store: ParamStore::new(),
        kb_digest: kb.vocab_digest(),
    };
    let prep = |ex: &QaExample| bundle.prepare(kb, ex);
    let train_prep = train_set.iter().map(prep).collect::<Result<Vec<_>, _>>()?;
    let dev_prep = dev.examples.iter().map(prep).collect::<Result<Vec<_>, _>>()?;

    let initial_loss = mean_loss(&net, &store, &train_prep)?;
    if !initial_loss.is_finite() {
        return Err(HarnessError::NumericFailure {
            what: "initial loss".into(),
            epoch: 0,
            lr: config.lr,
        });
    }

    let adam = Adam::with_lr(config.lr);
    let mut shuffle_rng = stream(config.seed, SHUFFLE_STREAM);
    let mut dropout_rng = stream(config.seed, DROPOUT_STREAM);
    let mut order: Vec<usize> = (0..train_prep.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(ParamStore, usize, MetricsReport)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            for &i in batch {
                let p = &train_prep[i];
                let mut tape = Tape::new(&store);
                let out = net.forward(&mut tape, &p.input, &p.tokens, true, &mut dropout_rng)?;
                let loss = net.loss(&mut tape, out.probs, &p.labels)?;
                let value = tape.value(loss).item();
                if !value.is_finite() {
                    return Err(HarnessError::NumericFailure {
                        what: "loss".into(),
                        epoch,
                        lr: config.lr,
                    });
                }
                total += value;
                let grads = tape.backward(loss)?;
                store.accumulate(&grads);
            }
            store.scale_grads(1.0 / batch.len() as f64);
            if !store.grads_finite() {
                return Err(HarnessError::NumericFailure {
                    what: "gradient".into(),
                    epoch,
                    lr: config.lr,
                });
            }
            adam.step(&mut store)?;
        }
        let report = score(&net, &store, &dev_prep, dev.unlinkable.len(), "RDAS", &digest)?;
        let record = EpochRecord {
            epoch,
            train_loss: total / train_prep.len() as f64,
            dev_hits_at_1: report.hits_at_1,
            dev_full: report.full,
        };
        progress(&record);
        history.push(record);

        let improved = best
            .as_ref()
            .is_none_or(|(_, _, b)| (report.hits_at_1, report.full) > (b.hits_at_1, b.full));
        if improved {
            best = Some((store.clone(), epoch, report));
            since_best = 0;
        } else {
            since_best += 1;
            if config.patience.is_some_and(|p| since_best >= p) {
                stopped_early = true;
                break;
            }
        }
    }

    let (best_store, best_epoch, best_dev) = best.expect("at least one epoch ran");
    bundle.store = best_store;
    Ok(TrainOutcome {
        best: bundle,
        best_epoch,
        best_dev,
        initial_loss,
        history,
        stopped_early,
    })
}

/// Metadata stored next to a trained checkpoint.
pub(crate) fn outcome_metadata(outcome: &TrainOutcome, model: &ModelConfig, config: &TrainConfig) -> serde_json::Value {
    json!({
        "best_epoch": outcome.best_epoch,
        "dev_hits_at_1": outcome.best_dev.hits_at_1,
        "dev_full": outcome.best_dev.full,
        "config_digest": config_digest(model, config),
        "train": config,
    })
}

impl TrainOutcome {
    pub fn save(&self, path: &Path, model: &ModelConfig, config: &TrainConfig) -> Result<(), HarnessError> {
        self.best.save(path, config.seed, outcome_metadata(self, model, config))
    }
}
