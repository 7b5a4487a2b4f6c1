use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use gsn_core::code_graph::{build_program_graph, build_program_graph_from_source, ingest_ast_file, ProgramGraph};
use gsn_core::config::Config;
use gsn_core::experiments::{ablation, parse_values, split_corpus, sweep, ExperimentRecord, Setup, SweepParam};
use gsn_core::retrieval::{embed_corpus, evaluate_testset, ScoreMode};
use gsn_core::summary_graph::{build_linear_summary_graph, build_summary_graph, parse_conllu, SummaryGraph};
use gsn_core::training::{
    fit_with_progress, load_checkpoint_for, load_corpus, save_checkpoint, save_corpus, synthetic_corpus,
    DualEncoderModel, Skipped, TrainConfig,
};
use gsn_core::vocab::Vocabulary;
use gsn_core::{Error, Result};
use serde::Serialize;

use crate::search::SearchService;
use crate::{Command, ExperimentArgs, GraphArgs, Lang};

pub(crate) fn dispatch(command: Command, config: &Config, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match command {
        Command::Graph(args) => graph(&args, config, out),
        Command::Vocab => vocab(config, out),
        Command::Train => train(config, out, err),
        Command::Index => index(config, out, err),
        Command::Query(args) => {
            let mut service = SearchService::load(config)?;
            if let Some(mode) = &args.score_mode {
                service = service.with_mode(mode.parse::<ScoreMode>()?);
            }
            for hit in service.search(&args.q, args.k)? {
                emit(out, &hit)?;
            }
            Ok(())
        }
        Command::Eval(args) => eval(config, args.test.as_deref(), out, err),
        Command::Sweep(args) => {
            let param: SweepParam = args.param.parse()?;
            let values = parse_values(&args.values)?;
            experiment(config, &args.experiment, out, |setup, train, out| {
                sweep(setup, config.model, train, param, &values, |r| emit_record(out, r)).map(drop)
            })
        }
        Command::Ablation(args) => {
            let seeds = parse_seeds(&args.seeds)?;
            experiment(config, &args.experiment, out, |setup, train, out| {
                ablation(setup, config.model, train, &seeds, |r| emit_record(out, r)).map(drop)
            })
        }
        Command::Synth(args) => {
            let path = args.out.as_deref().unwrap_or(&config.corpus);
            let records = synthetic_corpus(args.n, args.seed);
            save_corpus(path, &records)?;
            emit(
                out,
                &Written {
                    records: records.len(),
                    path: path.display().to_string(),
                },
            )
        }
        Command::Serve(args) => {
            let mut config = config.clone();
            if let Some(host) = args.host {
                config.host = host;
            }
            if let Some(port) = args.port {
                config.port = port;
            }
            crate::server::serve(&config, |addr| {
                let _ = writeln!(err, "listening on http://{addr}");
            })
        }
    }
}

fn emit(out: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    let line = serde_json::to_string(value).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    writeln!(out, "{line}")?;
    Ok(())
}

// Records are streamed from inside experiment callbacks, which cannot fail.
fn emit_record(out: &mut dyn Write, record: &ExperimentRecord) {
    let _ = emit(out, record).and_then(|()| out.flush().map_err(Error::Io));
}

fn report_skipped(err: &mut dyn Write, skipped: &[Skipped]) {
    for s in skipped {
        let _ = writeln!(err, "skipped {}: {}", s.id, s.reason);
    }
}

#[derive(Serialize)]
struct Written {
    records: usize,
    path: String,
}

#[derive(Serialize)]
struct ProgramStats {
    nodes: usize,
    subtoken_nodes: usize,
    edges: BTreeMap<String, usize>,
}

#[derive(Serialize)]
struct SummaryStats {
    nodes: usize,
    tokens: usize,
    subtoken_nodes: usize,
    edges: BTreeMap<String, usize>,
    unknown_relations: usize,
}

enum AnyGraph {
    Program(ProgramGraph),
    Summary(SummaryGraph),
}

fn graph(args: &GraphArgs, config: &Config, out: &mut dyn Write) -> Result<()> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(Error::Io);
    let g = match args.lang {
        Lang::Minilang => AnyGraph::Program(build_program_graph_from_source(&read(&args.input)?, config.node_cap)?),
        Lang::Ast => AnyGraph::Program(build_program_graph(&ingest_ast_file(&args.input)?, config.node_cap)?),
        Lang::Conllu => {
            let relations = config.graph_builder()?.relations;
            AnyGraph::Summary(build_summary_graph(
                &parse_conllu(&read(&args.input)?)?,
                &relations,
                config.node_cap,
            )?)
        }
        Lang::Text => AnyGraph::Summary(build_linear_summary_graph(&read(&args.input)?, config.node_cap)?),
    };
    match (g, args.stats) {
        (AnyGraph::Program(g), false) => write!(out, "{}", g.dump())?,
        (AnyGraph::Summary(g), false) => write!(out, "{}", g.dump())?,
        (AnyGraph::Program(g), true) => {
            let s = g.stats();
            emit(
                out,
                &ProgramStats {
                    nodes: s.nodes,
                    subtoken_nodes: s.subtoken_nodes,
                    edges: s.edges.iter().map(|(t, &n)| (t.to_string(), n)).collect(),
                },
            )?;
        }
        (AnyGraph::Summary(g), true) => {
            let mut edges = BTreeMap::new();
            for e in g.edges() {
                *edges.entry(e.label.clone()).or_insert(0) += 1;
            }
            emit(
                out,
                &SummaryStats {
                    nodes: g.nodes().len(),
                    tokens: g.tokens().len(),
                    subtoken_nodes: g.nodes().iter().filter(|n| n.is_subtoken()).count(),
                    edges,
                    unknown_relations: g.unknown_relations(),
                },
            )?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct VocabReport {
    tokens: usize,
    path: String,
}

fn vocab(config: &Config, out: &mut dyn Write) -> Result<()> {
    let records = load_corpus(&config.corpus)?;
    let vocab = config.graph_builder()?.build_vocab(&records, config.vocab_max)?;
    vocab.save(&config.vocab)?;
    emit(
        out,
        &VocabReport {
            tokens: vocab.len(),
            path: config.vocab.display().to_string(),
        },
    )
}

#[derive(Serialize)]
struct EpochLine {
    record: &'static str,
    epoch: usize,
    train_loss: f64,
    val_mrr: f64,
    lr: f64,
}

#[derive(Serialize)]
struct TrainSummary {
    record: &'static str,
    initial_loss: f64,
    final_loss: f64,
    epochs: usize,
    best_epoch: usize,
    best_mrr: f64,
    stopped_early: bool,
    skipped: usize,
    checkpoint: String,
}

fn train(config: &Config, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let records = load_corpus(&config.corpus)?;
    let split = split_corpus(&records, 0, config.val_fraction, config.train.seed)?;
    let builder = config.graph_builder()?;
    let vocab = if config.vocab.exists() {
        Vocabulary::load(&config.vocab)?
    } else {
        let v = builder.build_vocab(&split.train, config.vocab_max)?;
        v.save(&config.vocab)?;
        let _ = writeln!(err, "wrote vocabulary of {} tokens to {}", v.len(), config.vocab.display());
        v
    };
    let (train, s1) = builder.prepare(&split.train, &vocab);
    let (val, s2) = builder.prepare(&split.val, &vocab);
    report_skipped(err, &s1);
    report_skipped(err, &s2);
    let model = DualEncoderModel::new(vocab.len(), config.model, config.train.seed)?;
    let (model, history) = fit_with_progress(model, &train, &val, &config.train, |e| {
        let _ = emit(
            out,
            &EpochLine {
                record: "epoch",
                epoch: e.epoch,
                train_loss: e.train_loss,
                val_mrr: e.val_mrr,
                lr: e.lr,
            },
        );
        let _ = out.flush();
    })?;
    save_checkpoint(&model, &config.checkpoint)?;
    emit(
        out,
        &TrainSummary {
            record: "summary",
            initial_loss: history.initial_loss,
            final_loss: history.final_loss(),
            epochs: history.epochs.len(),
            best_epoch: history.best_epoch,
            best_mrr: history.best_mrr,
            stopped_early: history.stopped_early,
            skipped: s1.len() + s2.len(),
            checkpoint: config.checkpoint.display().to_string(),
        },
    )
}

fn load_model(config: &Config) -> Result<(DualEncoderModel, Vocabulary)> {
    let model = load_checkpoint_for(&config.checkpoint, &config.model)?;
    let vocab = Vocabulary::load(&config.vocab)?;
    if model.vocab_size() != vocab.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint expects {} vocabulary entries, vocabulary file has {}",
            model.vocab_size(),
            vocab.len()
        )));
    }
    Ok((model, vocab))
}

#[derive(Serialize)]
struct IndexReport {
    indexed: usize,
    skipped: usize,
    fingerprint: String,
}

fn index(config: &Config, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let (model, vocab) = load_model(config)?;
    let records = load_corpus(&config.corpus)?;
    let report = embed_corpus(&records, &config.graph_builder()?, &vocab, &model)?;
    report_skipped(err, &report.skipped);
    report.index.save(&config.index)?;
    emit(
        out,
        &IndexReport {
            indexed: report.index.len(),
            skipped: report.skipped.len(),
            fingerprint: report.index.fingerprint_hex(),
        },
    )
}

fn eval(config: &Config, test: Option<&Path>, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let (model, vocab) = load_model(config)?;
    let records = load_corpus(test.unwrap_or(&config.corpus))?;
    let (pairs, skipped) = config.graph_builder()?.prepare(&records, &vocab);
    report_skipped(err, &skipped);
    emit(out, &evaluate_testset(&model, &pairs)?)
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("cannot parse seed `{s}`")))
        })
        .collect()
}

fn experiment(
    config: &Config,
    args: &ExperimentArgs,
    out: &mut dyn Write,
    run: impl FnOnce(Setup<'_>, &TrainConfig, &mut dyn Write) -> Result<()>,
) -> Result<()> {
    let records = load_corpus(&config.corpus)?;
    let split = split_corpus(&records, args.test, config.val_fraction, config.train.seed)?;
    let builder = config.graph_builder()?;
    let train = TrainConfig {
        max_epochs: args.epochs.unwrap_or(config.train.max_epochs),
        ..config.train.clone()
    };
    train.validate()?;
    let setup = Setup {
        split: &split,
        builder: &builder,
        vocab_max: config.vocab_max,
    };
    run(setup, &train, out)
}
