//! `rdas`: prepare data, inspect reasoning graphs, train, evaluate and run
//! ablations.

mod config;

use std::collections::BTreeSet;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use rdas_core::graphbuild::{build_graph_stages, GraphDump};
use rdas_core::harness::{
    evaluate, run_ablations, split_dev, train_with_progress, HarnessError, MetricsReport, ModelBundle,
};
use rdas_core::kbstore::{
    extract_subgraph, generate_synthetic, load_qa, write_qa, EntityId, KnowledgeBase, QaDataset, QaExample,
    SyntheticSpec, UnlinkableQuestion,
};
use rdas_core::model::Vocab;

use config::RunConfig;

/// Bad flags, config keys or values. Exits with status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(
    name = "rdas",
    version,
    about = "Relation-node reasoning over knowledge-base subgraphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a dataset and write vocabulary and manifest files.
    Prepare(Common),
    /// Dump one question's reasoning graph before and after pruning.
    Inspect {
        #[command(flatten)]
        common: Common,
        /// Question index among the linkable questions.
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Train and keep the best checkpoint on the dev split.
    Train(Common),
    /// Score a checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Split::Dev)]
        split: Split,
    },
    /// Train the full model and its three ablations under one seed.
    Ablate(Common),
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Split {
    Dev,
    Train,
    All,
}

#[derive(Args)]
struct Common {
    /// key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Knowledge base, one `subject|relation|object` per line.
    #[arg(long)]
    kb: Option<PathBuf>,
    /// Questions, `question<TAB>answer|answer` per line.
    #[arg(long)]
    qa: Option<PathBuf>,
    /// Synthetic task spec (replaces --kb/--qa).
    #[arg(long)]
    synthetic: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    no_rn: bool,
    #[arg(long)]
    no_direction: bool,
    #[arg(long)]
    no_de: bool,
    #[arg(long, value_parser = ["instance", "type"])]
    relation_node_mode: Option<String>,
    /// Override any config key, e.g. `--set epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::defaults();
        if let Some(path) = &self.config {
            cfg.merge_file(path)?;
        }
        for item in &self.overrides {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| UsageError(format!("--set expects KEY=VALUE, got {item:?}")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(seed) = self.seed {
            cfg.set("seed", seed.to_string())?;
        }
        for (key, path) in [("kb", &self.kb), ("qa", &self.qa), ("synthetic", &self.synthetic)] {
            if let Some(p) = path {
                cfg.set(key, p.display().to_string())?;
            }
        }
        for (key, on) in [
            ("no_rn", self.no_rn),
            ("no_direction", self.no_direction),
            ("no_de", self.no_de),
        ] {
            if on {
                cfg.set(key, "true")?;
            }
        }
        if let Some(mode) = &self.relation_node_mode {
            cfg.set("relation_node_mode", mode.as_str())?;
        }
        for w in cfg.warnings() {
            eprintln!("warning: {w}");
        }
        Ok(cfg)
    }

    fn out_dir(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| UsageError("--out is required for this command".into()).into())
    }
}

struct Data {
    kb: KnowledgeBase,
    examples: Vec<QaExample>,
    unlinkable: Vec<UnlinkableQuestion>,
    dev: Option<QaDataset>,
    synthetic: Option<SyntheticSpec>,
}

impl Data {
    fn load(cfg: &RunConfig) -> Result<Self> {
        if let Some(spec_path) = cfg.path("synthetic") {
            if cfg.path("kb").is_some() || cfg.path("qa").is_some() {
                bail!(UsageError("give either a synthetic spec or --kb/--qa, not both".into()));
            }
            let text = fs::read_to_string(&spec_path).with_context(|| format!("reading {}", spec_path.display()))?;
            let spec = SyntheticSpec::parse(&text).with_context(|| spec_path.display().to_string())?;
            let task = generate_synthetic(&spec, cfg.seed()?)?;
            return Ok(Self {
                kb: task.kb,
                examples: task.examples,
                unlinkable: Vec::new(),
                dev: None,
                synthetic: Some(spec),
            });
        }
        let (Some(kb_path), Some(qa_path)) = (cfg.path("kb"), cfg.path("qa")) else {
            bail!(UsageError("need --kb and --qa, or --synthetic".into()));
        };
        let kb = KnowledgeBase::load(&kb_path).with_context(|| kb_path.display().to_string())?;
        let hops = cfg.hops()?;
        let qa = load_qa(&qa_path, &kb, hops).with_context(|| qa_path.display().to_string())?;
        let dev = match cfg.path("dev_qa") {
            Some(p) => Some(load_qa(&p, &kb, hops).with_context(|| p.display().to_string())?),
            None => None,
        };
        Ok(Self {
            kb,
            examples: qa.examples,
            unlinkable: qa.unlinkable,
            dev,
            synthetic: None,
        })
    }

    /// Training questions and the dev set: the given dev file, or a seeded
    /// holdout.
    fn split(&self, fraction: f64, seed: u64) -> (Vec<QaExample>, QaDataset) {
        match &self.dev {
            Some(dev) => (self.examples.clone(), dev.clone()),
            None => {
                let (train, dev) = split_dev(&self.examples, fraction, seed);
                (
                    train,
                    QaDataset {
                        examples: dev,
                        unlinkable: Vec::new(),
                    },
                )
            }
        }
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn names(kb: &KnowledgeBase, ids: &BTreeSet<EntityId>) -> Vec<String> {
    ids.iter().map(|&e| kb.entity_name(e).to_string()).collect()
}

fn metrics_table(reports: &[&MetricsReport]) -> String {
    let mut s = format!(
        "{:<14} {:>7} {:>7} {:>9} {:>10}\n",
        "variant", "Hits@1", "Full", "questions", "unlinkable"
    );
    for r in reports {
        s.push_str(&format!(
            "{:<14} {:>7.3} {:>7.3} {:>9} {:>10}\n",
            r.variant, r.hits_at_1, r.full, r.n_questions, r.n_unlinkable
        ));
    }
    s
}

fn cmd_prepare(common: &Common) -> Result<()> {
    let cfg = common.resolve()?;
    let out = common.out_dir()?;
    let data = Data::load(&cfg)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    cfg.write_resolved(out)?;

    if let Some(spec) = &data.synthetic {
        data.kb.save(&out.join("kb.txt"))?;
        let file = fs::File::create(out.join("qa.txt"))?;
        write_qa(std::io::BufWriter::new(file), &data.kb, &data.examples)?;
        fs::write(out.join("synthetic.conf"), spec.to_text())?;
    }
    let vocab = Vocab::build(&data.kb, &data.examples);
    fs::write(out.join("vocab.txt"), vocab.words().join("\n") + "\n")?;

    let qa = QaDataset {
        examples: data.examples.clone(),
        unlinkable: data.unlinkable.clone(),
    };
    let manifest = json!({
        "n_questions": qa.examples.len() + qa.unlinkable.len(),
        "n_linked": qa.examples.len(),
        "n_unlinkable": qa.unlinkable.len(),
        "unlinkable": qa.unlinkable.iter().map(|u| json!({"line": u.line, "text": u.text})).collect::<Vec<_>>(),
        "hop_histogram": qa.hop_histogram(),
        "answers_per_question": qa.examples.iter().map(|e| e.answers.len()).sum::<usize>() as f64
            / qa.examples.len().max(1) as f64,
        "n_entities": data.kb.num_entities(),
        "n_relations": data.kb.relations().len(),
        "n_triples": data.kb.triples().len(),
        "vocab_size": vocab.len(),
        "kb_digest": data.kb.vocab_digest(),
        "seed": cfg.seed()?,
        "synthetic": data.synthetic.is_some(),
    });
    write_json(&out.join("manifest.json"), &manifest)?;
    println!("{}", serde_json::to_string_pretty(&manifest)?);
    Ok(())
}

fn cmd_inspect(common: &Common, index: usize) -> Result<()> {
    let cfg = common.resolve()?;
    let data = Data::load(&cfg)?;
    let train = cfg.train_config()?;
    let Some(ex) = data.examples.get(index) else {
        bail!(UsageError(format!(
            "question index {index} out of range ({} linkable questions)",
            data.examples.len()
        )));
    };
    let sub = extract_subgraph(&data.kb, &ex.seeds, ex.hops, train.node_budget)?;
    let stages = build_graph_stages(&data.kb, &sub, &train.graph)?;
    let before = GraphDump::from(&stages.layered);
    let after = GraphDump::from(&stages.graph);
    let dump = json!({
        "index": index,
        "question": ex.text,
        "seeds": names(&data.kb, &ex.seeds),
        "answers": names(&data.kb, &ex.answers),
        "truncated": sub.truncated,
        "dropped_unreachable": stages.graph.dropped_unreachable,
        "before_pruning": before,
        "after_pruning": after,
    });
    if let Some(out) = &common.out {
        fs::create_dir_all(out)?;
        cfg.write_resolved(out)?;
        write_json(&out.join("graph.json"), &dump)?;
        fs::write(out.join("before.dot"), before.to_dot("before"))?;
        fs::write(out.join("after.dot"), after.to_dot("after"))?;
    }
    println!("{}", serde_json::to_string_pretty(&dump)?);
    Ok(())
}

fn cmd_train(common: &Common) -> Result<()> {
    let cfg = common.resolve()?;
    let out = common.out_dir()?;
    let model = cfg.model_config()?;
    let train = cfg.train_config()?;
    let data = Data::load(&cfg)?;
    let (train_set, dev) = data.split(train.dev_fraction, train.seed);
    fs::create_dir_all(out)?;
    cfg.write_resolved(out)?;
    eprintln!("training on {} questions, dev {}", train_set.len(), dev.len());

    let history_path = out.join("history.jsonl");
    let mut history = std::io::BufWriter::new(fs::File::create(&history_path)?);
    let mut write_err = None;
    let outcome = train_with_progress(&data.kb, &train_set, &dev, &model, &train, &mut |rec| {
        eprintln!(
            "epoch {:>3}  loss {:.5}  dev hits@1 {:.3}  full {:.3}",
            rec.epoch, rec.train_loss, rec.dev_hits_at_1, rec.dev_full
        );
        let line = serde_json::to_string(rec).expect("record serializes");
        if let Err(e) = writeln!(history, "{line}").and_then(|_| history.flush()) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e).with_context(|| format!("writing {}", history_path.display()));
    }
    outcome.save(&out.join("checkpoint.json"), &model, &train)?;
    write_json(&out.join("metrics.json"), &outcome.best_dev)?;
    println!(
        "best epoch {} (initial loss {:.5})",
        outcome.best_epoch, outcome.initial_loss
    );
    print!("{}", metrics_table(&[&outcome.best_dev]));
    println!("{}", serde_json::to_string(&outcome.best_dev)?);
    Ok(())
}

fn cmd_eval(common: &Common, split: Split) -> Result<()> {
    let cfg = common.resolve()?;
    let Some(ckpt) = &common.checkpoint else {
        bail!(UsageError("eval needs --checkpoint".into()));
    };
    let (bundle, extra) = ModelBundle::load(ckpt).with_context(|| ckpt.display().to_string())?;
    let train = cfg.train_config()?;
    let data = Data::load(&cfg)?;
    let dataset = match split {
        Split::All => QaDataset {
            examples: data.examples.clone(),
            unlinkable: data.unlinkable.clone(),
        },
        Split::Dev => data.split(train.dev_fraction, train.seed).1,
        Split::Train => QaDataset {
            examples: data.split(train.dev_fraction, train.seed).0,
            unlinkable: Vec::new(),
        },
    };
    let digest = extra.get("config_digest").and_then(|v| v.as_str()).unwrap_or("");
    let report = evaluate(&bundle, &data.kb, &dataset, "RDAS", digest)?;
    if let Some(out) = &common.out {
        fs::create_dir_all(out)?;
        cfg.write_resolved(out)?;
        write_json(&out.join("metrics.json"), &report)?;
        let mut lines = String::new();
        for r in &report.records {
            lines.push_str(&serde_json::to_string(r)?);
            lines.push('\n');
        }
        fs::write(out.join("predictions.jsonl"), lines)?;
    }
    print!("{}", metrics_table(&[&report]));
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn cmd_ablate(common: &Common) -> Result<()> {
    let cfg = common.resolve()?;
    let model = cfg.model_config()?;
    let train = cfg.train_config()?;
    let data = Data::load(&cfg)?;
    let (train_set, dev) = data.split(train.dev_fraction, train.seed);
    let report = run_ablations(&data.kb, &train_set, &dev, &model, &train)?;
    if let Some(out) = &common.out {
        fs::create_dir_all(out)?;
        cfg.write_resolved(out)?;
        write_json(&out.join("ablation.json"), &report)?;
    }
    print!("{}", report.to_table());
    println!("{}", serde_json::to_string(&report)?);
    if let Some(bad) = report.rows.iter().find(|r| !r.structure.holds(r.variant)) {
        bail!("structural check failed for {}", bad.variant.name());
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 1;
        }
        if let Some(HarnessError::NumericFailure { .. }) = cause.downcast_ref::<HarnessError>() {
            return 3;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Prepare(c) => cmd_prepare(c),
        Command::Inspect { common, index } => cmd_inspect(common, *index),
        Command::Train(c) => cmd_train(c),
        Command::Eval { common, split } => cmd_eval(common, *split),
        Command::Ablate(c) => cmd_ablate(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
