//! Desk-scale experiment drivers: train/validate/test splits, single runs,
//! component ablations and hyperparameter sweeps.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::retrieval::{evaluate_testset, Metrics};
use crate::training::{fit, CorpusRecord, DualEncoderModel, GraphBuilder, History, ModelConfig, TrainConfig};
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<CorpusRecord>,
    pub val: Vec<CorpusRecord>,
    pub test: Vec<CorpusRecord>,
}

/// Seeded shuffle, then `test` records for testing, `val_fraction` of the
/// rest for validation (at least 2) and the remainder for training.
pub fn split_corpus(records: &[CorpusRecord], test: usize, val_fraction: f64, seed: u64) -> Result<Split> {
    let mut shuffled = records.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let rest = shuffled
        .len()
        .checked_sub(test)
        .ok_or_else(|| Error::InvalidArgument(format!("{test} test records requested from {}", records.len())))?;
    let val = ((rest as f64 * val_fraction).round() as usize).max(2);
    if rest < val + 1 {
        return Err(Error::InvalidArgument(format!("{} records are too few to split", records.len())));
    }
    let test_part = shuffled.split_off(rest);
    let val_part = shuffled.split_off(rest - val);
    Ok(Split {
        train: shuffled,
        val: val_part,
        test: test_part,
    })
}

/// Data and preprocessing shared by the runs of an experiment.
#[derive(Debug, Clone, Copy)]
pub struct Setup<'a> {
    pub split: &'a Split,
    pub builder: &'a GraphBuilder,
    pub vocab_max: usize,
}

/// Outcome of one train-and-evaluate run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub model: DualEncoderModel,
    pub vocab: Vocabulary,
    pub history: History,
    /// Held-out test metrics of the best-validation model.
    pub metrics: Metrics,
    pub skipped: usize,
}

/// Builds the vocabulary on the training records, trains on the training
/// split with early stopping on the validation split, and evaluates on the
/// test split.
pub fn run_experiment(setup: Setup<'_>, model_config: ModelConfig, train_config: &TrainConfig) -> Result<RunOutcome> {
    let Setup {
        split,
        builder,
        vocab_max,
    } = setup;
    let vocab = builder.build_vocab(&split.train, vocab_max)?;
    let (train, s1) = builder.prepare(&split.train, &vocab);
    let (val, s2) = builder.prepare(&split.val, &vocab);
    let (test, s3) = builder.prepare(&split.test, &vocab);
    let model = DualEncoderModel::new(vocab.len(), model_config, train_config.seed)?;
    let (model, history) = fit(model, &train, &val, train_config)?;
    let metrics = evaluate_testset(&model, &test)?;
    Ok(RunOutcome {
        model,
        vocab,
        history,
        metrics,
        skipped: s1.len() + s2.len() + s3.len(),
    })
}

/// Hyperparameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    /// Hop count of both encoders.
    Hops,
    Heads,
    Dim,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hops" => Ok(SweepParam::Hops),
            "heads" => Ok(SweepParam::Heads),
            "dim" => Ok(SweepParam::Dim),
            _ => Err(Error::InvalidArgument(format!("unknown sweep parameter `{s}` (hops | heads | dim)"))),
        }
    }
}

impl SweepParam {
    pub fn apply(self, mut config: ModelConfig, value: usize) -> ModelConfig {
        match self {
            SweepParam::Hops => {
                config.hops_code = value;
                config.hops_summary = value;
            }
            SweepParam::Heads => config.heads = value,
            SweepParam::Dim => config.dim = value,
        }
        config
    }
}

/// Parses `a..b` (inclusive) or a comma-separated list of positive integers.
pub fn parse_values(text: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidArgument(format!("cannot parse values `{text}` (use `1..5` or `1,2,4`)"));
    let values: Vec<usize> = if let Some((a, b)) = text.split_once("..") {
        let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        text.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
    };
    if values.is_empty() || values.contains(&0) {
        return Err(bad());
    }
    Ok(values)
}

/// One cell of a sweep or ablation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub label: String,
    pub value: Option<usize>,
    pub seed: u64,
    pub epochs: usize,
    pub final_loss: f64,
    pub metrics: Metrics,
}

impl ExperimentRecord {
    fn new(label: String, value: Option<usize>, seed: u64, run: &RunOutcome) -> Self {
        ExperimentRecord {
            label,
            value,
            seed,
            epochs: run.history.epochs.len(),
            final_loss: run.history.final_loss(),
            metrics: run.metrics,
        }
    }
}

/// Runs one experiment per value of `param`, reporting each record as it
/// completes.
pub fn sweep(
    setup: Setup<'_>,
    base: ModelConfig,
    train: &TrainConfig,
    param: SweepParam,
    values: &[usize],
    mut on_record: impl FnMut(&ExperimentRecord),
) -> Result<Vec<ExperimentRecord>> {
    let label = serde_json::to_value(param).expect("serializable").as_str().unwrap_or_default().to_string();
    let mut out = Vec::new();
    for &v in values {
        let run = run_experiment(setup, param.apply(base, v), train)?;
        let rec = ExperimentRecord::new(label.clone(), Some(v), train.seed, &run);
        on_record(&rec);
        out.push(rec);
    }
    Ok(out)
}

/// Component configuration compared in an ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Full,
    BiggnnOnly,
    AttentionOnly,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::BiggnnOnly, Variant::AttentionOnly];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::BiggnnOnly => "biggnn-only",
            Variant::AttentionOnly => "attention-only",
        }
    }

    pub fn apply(self, config: ModelConfig) -> ModelConfig {
        match self {
            Variant::Full => config.with_components(true, true),
            Variant::BiggnnOnly => config.with_components(true, false),
            Variant::AttentionOnly => config.with_components(false, true),
        }
    }
}

/// Every variant under every training seed.
pub fn ablation(
    setup: Setup<'_>,
    base: ModelConfig,
    train: &TrainConfig,
    seeds: &[u64],
    mut on_record: impl FnMut(&ExperimentRecord),
) -> Result<Vec<ExperimentRecord>> {
    let mut out = Vec::new();
    for variant in Variant::ALL {
        for &seed in seeds {
            let cfg = TrainConfig { seed, ..train.clone() };
            let run = run_experiment(setup, variant.apply(base), &cfg)?;
            let rec = ExperimentRecord::new(variant.name().to_string(), None, seed, &run);
            on_record(&rec);
            out.push(rec);
        }
    }
    Ok(out)
}
