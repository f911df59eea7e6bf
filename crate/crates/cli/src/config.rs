use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rdas_core::graphbuild::{GraphOptions, RelationNodeMode};
use rdas_core::harness::TrainConfig;
use rdas_core::kbstore::DEFAULT_NODE_BUDGET;
use rdas_core::model::{ModelConfig, Phi};

use crate::UsageError;

/// Every accepted key with its default. Empty means unset.
const KEYS: &[(&str, &str)] = &[
    ("kb", ""),
    ("qa", ""),
    ("dev_qa", ""),
    ("synthetic", ""),
    ("hops", "1"),
    ("seed", "0"),
    ("epochs", "30"),
    ("lr", "0.001"),
    ("batch_size", "1"),
    ("patience", ""),
    ("dev_fraction", "0.1"),
    ("node_budget", ""),
    ("word_dim", "100"),
    ("hidden", "100"),
    ("layers", "2"),
    ("dropout", "0.1"),
    ("max_distance", "8"),
    ("phi", "tanh"),
    ("relation_node_mode", "instance"),
    ("no_rn", "false"),
    ("no_direction", "false"),
    ("no_de", "false"),
];

/// Merged `key=value` settings: defaults, then the config file, then flags.
#[derive(Debug, Clone)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn check_key(key: &str) -> Result<()> {
    if KEYS.iter().any(|(k, _)| *k == key) {
        Ok(())
    } else {
        Err(UsageError(format!("unknown config key {key:?}")).into())
    }
}

impl RunConfig {
    pub fn defaults() -> Self {
        let mut values: BTreeMap<String, String> = KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        values.insert("node_budget".into(), DEFAULT_NODE_BUDGET.to_string());
        Self { values }
    }

    pub fn merge_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| UsageError(format!("{origin}:{}: expected key=value", idx + 1)))?;
            let key = key.trim();
            check_key(key).with_context(|| format!("{origin}:{}", idx + 1))?;
            self.values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        self.merge_text(&text, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        check_key(key)?;
        self.values.insert(key.to_string(), value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.get(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.get(key);
        v.parse()
            .map_err(|e| anyhow!(UsageError(format!("bad value {v:?} for {key}: {e}"))))
    }

    fn flag(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" | "" => Ok(false),
            other => bail!(UsageError(format!(
                "bad value {other:?} for {key}: expected true or false"
            ))),
        }
    }

    pub fn seed(&self) -> Result<u64> {
        self.parse("seed")
    }

    pub fn hops(&self) -> Result<usize> {
        self.parse("hops")
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let config = ModelConfig {
            word_dim: self.parse("word_dim")?,
            hidden: self.parse("hidden")?,
            layers: self.parse("layers")?,
            dropout: self.parse("dropout")?,
            max_distance: self.parse("max_distance")?,
            phi: self.parse::<Phi>("phi")?,
            no_distance_embedding: self.flag("no_de")?,
        };
        config.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(config)
    }

    pub fn graph_options(&self) -> Result<GraphOptions> {
        Ok(GraphOptions {
            relation_node_mode: self.parse::<RelationNodeMode>("relation_node_mode")?,
            no_relation_nodes: self.flag("no_rn")?,
            no_direction: self.flag("no_direction")?,
            ..GraphOptions::default()
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let patience = match self.get("patience") {
            "" | "none" => None,
            _ => Some(self.parse("patience")?),
        };
        let config = TrainConfig {
            epochs: self.parse("epochs")?,
            lr: self.parse("lr")?,
            seed: self.seed()?,
            batch_size: self.parse("batch_size")?,
            patience,
            graph: self.graph_options()?,
            node_budget: self.parse("node_budget")?,
            dev_fraction: self.parse("dev_fraction")?,
        };
        config.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(config)
    }

    /// Warnings about allowed but questionable combinations.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.flag("no_rn").unwrap_or(false) && self.get("relation_node_mode") == "type" {
            out.push("relation_node_mode=type has no effect when relation nodes are disabled".into());
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, _) in KEYS {
            let _ = writeln!(s, "{k}={}", self.get(k));
        }
        s
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join("resolved.conf");
        std::fs::write(&path, self.to_text()).with_context(|| format!("writing {}", path.display()))
    }
}
