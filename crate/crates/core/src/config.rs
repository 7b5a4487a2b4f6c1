//! Flat `key = value` configuration with `#` comments.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::retrieval::ScoreMode;
use crate::training::{GraphBuilder, ModelConfig, TrainConfig};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "GSN_CONFIG";

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub node_cap: usize,
    pub vocab_max: usize,
    /// Fraction of the corpus held out for validation when training.
    pub val_fraction: f64,
    pub subtokens_in_sequence: bool,
    pub score_mode: ScoreMode,
    pub corpus: PathBuf,
    pub vocab: PathBuf,
    pub checkpoint: PathBuf,
    pub index: PathBuf,
    pub relations: Option<PathBuf>,
    pub host: String,
    pub port: u16,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            node_cap: crate::code_graph::DEFAULT_NODE_CAP,
            vocab_max: 150_000,
            val_fraction: 0.1,
            subtokens_in_sequence: false,
            score_mode: ScoreMode::Raw,
            corpus: "corpus.jsonl".into(),
            vocab: "vocab.txt".into(),
            checkpoint: "model.ckpt".into(),
            index: "index.gsnv".into(),
            relations: None,
            host: "127.0.0.1".into(),
            port: 8080,
        }
    }
}

/// Every recognised key, in file order of [`Config::to_text`].
pub const KEYS: &[&str] = &[
    "dim",
    "hops_code",
    "hops_summary",
    "heads",
    "dropout",
    "biggnn_code",
    "attention_code",
    "biggnn_summary",
    "attention_summary",
    "lr",
    "plateau_factor",
    "plateau_patience",
    "early_stop_patience",
    "max_epochs",
    "grad_clip",
    "batch_size",
    "seed",
    "node_cap",
    "vocab_max",
    "val_fraction",
    "subtokens_in_sequence",
    "score_mode",
    "corpus",
    "vocab",
    "checkpoint",
    "index",
    "relations",
    "host",
    "port",
];

fn parse<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("cannot parse `{value}` for `{key}`"))
}

fn parse_bool(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(format!("cannot parse `{value}` for `{key}` as a boolean")),
    }
}

impl Config {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let m = &mut self.model;
        let t = &mut self.train;
        match key {
            "dim" => m.dim = parse(key, value)?,
            "hops_code" => m.hops_code = parse(key, value)?,
            "hops_summary" => m.hops_summary = parse(key, value)?,
            "heads" => m.heads = parse(key, value)?,
            "dropout" => m.dropout = parse(key, value)?,
            "biggnn_code" => m.code_biggnn = parse_bool(key, value)?,
            "attention_code" => m.code_attention = parse_bool(key, value)?,
            "biggnn_summary" => m.summary_biggnn = parse_bool(key, value)?,
            "attention_summary" => m.summary_attention = parse_bool(key, value)?,
            "lr" => t.lr = parse(key, value)?,
            "plateau_factor" => t.plateau_factor = parse(key, value)?,
            "plateau_patience" => t.plateau_patience = parse(key, value)?,
            "early_stop_patience" => t.early_stop_patience = parse(key, value)?,
            "max_epochs" => t.max_epochs = parse(key, value)?,
            "grad_clip" => t.grad_clip = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "node_cap" => self.node_cap = parse(key, value)?,
            "vocab_max" => self.vocab_max = parse(key, value)?,
            "val_fraction" => self.val_fraction = parse(key, value)?,
            "subtokens_in_sequence" => self.subtokens_in_sequence = parse_bool(key, value)?,
            "score_mode" => self.score_mode = value.parse().map_err(|e: Error| e.to_string())?,
            "corpus" => self.corpus = value.into(),
            "vocab" => self.vocab = value.into(),
            "checkpoint" => self.checkpoint = value.into(),
            "index" => self.index = value.into(),
            "relations" => self.relations = Some(value.into()),
            "host" => self.host = value.into(),
            "port" => self.port = parse(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |message: String| Error::Config { line: 0, message };
        self.model.validate().map_err(|e| invalid(e.to_string()))?;
        self.train.validate().map_err(|e| invalid(e.to_string()))?;
        if self.node_cap == 0 {
            return Err(invalid("node_cap must be positive".into()));
        }
        if self.vocab_max < 3 {
            return Err(invalid("vocab_max must be at least 3".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(invalid("val_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Parses config text; absent keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Config { line: i + 1, message };
            let Some((key, value)) = line.split_once('=') else {
                return Err(err(format!("expected `key = value`, found `{line}`")));
            };
            cfg.set(key.trim(), value.trim()).map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Renders every key, suitable for [`Config::parse`].
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let t = &self.train;
        let mode = match self.score_mode {
            ScoreMode::Raw => "raw",
            ScoreMode::PlusOne => "plus-one",
        };
        let mut s = String::new();
        let mut put = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        put("dim", m.dim.to_string());
        put("hops_code", m.hops_code.to_string());
        put("hops_summary", m.hops_summary.to_string());
        put("heads", m.heads.to_string());
        put("dropout", m.dropout.to_string());
        put("biggnn_code", m.code_biggnn.to_string());
        put("attention_code", m.code_attention.to_string());
        put("biggnn_summary", m.summary_biggnn.to_string());
        put("attention_summary", m.summary_attention.to_string());
        put("lr", t.lr.to_string());
        put("plateau_factor", t.plateau_factor.to_string());
        put("plateau_patience", t.plateau_patience.to_string());
        put("early_stop_patience", t.early_stop_patience.to_string());
        put("max_epochs", t.max_epochs.to_string());
        put("grad_clip", t.grad_clip.to_string());
        put("batch_size", t.batch_size.to_string());
        put("seed", t.seed.to_string());
        put("node_cap", self.node_cap.to_string());
        put("vocab_max", self.vocab_max.to_string());
        put("val_fraction", self.val_fraction.to_string());
        put("subtokens_in_sequence", self.subtokens_in_sequence.to_string());
        put("score_mode", mode.to_string());
        put("corpus", self.corpus.display().to_string());
        put("vocab", self.vocab.display().to_string());
        put("checkpoint", self.checkpoint.display().to_string());
        put("index", self.index.display().to_string());
        if let Some(r) = &self.relations {
            put("relations", r.display().to_string());
        }
        put("host", self.host.clone());
        put("port", self.port.to_string());
        s
    }

    /// Graph construction settings; relative record paths resolve against
    /// the corpus file's directory.
    pub fn graph_builder(&self) -> Result<GraphBuilder> {
        let relations = match &self.relations {
            Some(p) => crate::summary_graph::RelationSet::from_file(p)?,
            None => crate::summary_graph::RelationSet::default(),
        };
        Ok(GraphBuilder {
            node_cap: self.node_cap,
            relations,
            base_dir: self.corpus.parent().map(Path::to_path_buf).unwrap_or_default(),
            subtokens_in_sequence: self.subtokens_in_sequence,
        })
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<Config> {
    Config::parse(&std::fs::read_to_string(path)?)
}
