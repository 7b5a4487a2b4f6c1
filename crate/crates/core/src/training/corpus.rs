use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::code_graph::{build_program_graph, ingest_ast_file, parse_minilang, ProgramGraph};
use crate::encoders::EncoderInput;
use crate::error::{Error, Result};
use crate::summary_graph::{build_linear_summary_graph, build_summary_graph, parse_conllu, RelationSet, SummaryGraph};
use crate::vocab::{build_vocab, Vocabulary};

/// One function of a corpus: source text (or a node-format AST file) and
/// its documentation summary (or a CoNLL-U file). Paths are relative to the
/// corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    #[serde(default)]
    pub code: String,
    #[serde(default)]
    pub docstring: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ast_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conllu_file: Option<String>,
}

impl CorpusRecord {
    pub fn new(id: impl Into<String>, code: impl Into<String>, docstring: impl Into<String>) -> Self {
        CorpusRecord {
            id: id.into(),
            code: code.into(),
            docstring: docstring.into(),
            ast_file: None,
            conllu_file: None,
        }
    }
}

/// Reads line-delimited JSON records; blank lines are skipped and ids must
/// be unique.
pub fn read_corpus(reader: impl BufRead) -> Result<Vec<CorpusRecord>> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord = serde_json::from_str(&line).map_err(|e| Error::Corpus {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::Corpus {
                line: i + 1,
                message: format!("duplicate id `{}`", rec.id),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<CorpusRecord>> {
    read_corpus(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn write_corpus(mut writer: impl Write, records: &[CorpusRecord]) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

pub fn save_corpus(path: impl AsRef<Path>, records: &[CorpusRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_corpus(&mut f, records)?;
    f.flush()?;
    Ok(())
}

/// Graph construction settings for a corpus.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    pub node_cap: usize,
    pub relations: RelationSet,
    /// Directory that relative `ast_file` / `conllu_file` paths resolve against.
    pub base_dir: PathBuf,
    /// Whether subtoken nodes join the attention sequence.
    pub subtokens_in_sequence: bool,
}

impl Default for GraphBuilder {
    fn default() -> Self {
        GraphBuilder {
            node_cap: crate::code_graph::DEFAULT_NODE_CAP,
            relations: RelationSet::default(),
            base_dir: PathBuf::from("."),
            subtokens_in_sequence: false,
        }
    }
}

impl GraphBuilder {
    pub fn with_node_cap(node_cap: usize) -> Self {
        GraphBuilder {
            node_cap,
            ..Self::default()
        }
    }

    pub fn program_graph(&self, rec: &CorpusRecord) -> Result<ProgramGraph> {
        let ast = match &rec.ast_file {
            Some(p) => ingest_ast_file(self.base_dir.join(p))?,
            None => parse_minilang(&rec.code)?,
        };
        build_program_graph(&ast, self.node_cap)
    }

    pub fn summary_graph(&self, rec: &CorpusRecord) -> Result<SummaryGraph> {
        match &rec.conllu_file {
            Some(p) => {
                let text = std::fs::read_to_string(self.base_dir.join(p))?;
                build_summary_graph(&parse_conllu(&text)?, &self.relations, self.node_cap)
            }
            None => build_linear_summary_graph(&rec.docstring, self.node_cap),
        }
    }

    /// Summary graph of free query text via the linear fallback parse.
    pub fn query_graph(&self, text: &str) -> Result<SummaryGraph> {
        build_linear_summary_graph(text, self.node_cap)
    }

    pub fn code_input(&self, rec: &CorpusRecord, vocab: &Vocabulary) -> Result<EncoderInput> {
        EncoderInput::from_program_graph(&self.program_graph(rec)?, vocab, self.subtokens_in_sequence)
    }

    pub fn summary_input(&self, rec: &CorpusRecord, vocab: &Vocabulary) -> Result<EncoderInput> {
        EncoderInput::from_summary_graph(&self.summary_graph(rec)?, vocab, self.subtokens_in_sequence)
    }

    pub fn query_input(&self, text: &str, vocab: &Vocabulary) -> Result<EncoderInput> {
        EncoderInput::from_summary_graph(&self.query_graph(text)?, vocab, self.subtokens_in_sequence)
    }

    /// Builds one shared vocabulary over program and summary node tokens.
    /// Records whose graphs fail to build are skipped.
    pub fn build_vocab(&self, records: &[CorpusRecord], max_size: usize) -> Result<Vocabulary> {
        let mut streams: Vec<Vec<String>> = Vec::new();
        for rec in records {
            if let (Ok(code), Ok(summary)) = (self.program_graph(rec), self.summary_graph(rec)) {
                streams.push(code.nodes().iter().map(|n| n.token().to_string()).collect());
                streams.push(summary.nodes().iter().map(|n| n.label.clone()).collect());
            }
        }
        build_vocab(streams, max_size)
    }

    /// Encoder inputs for every record whose graphs build; failures are
    /// reported alongside.
    pub fn prepare(&self, records: &[CorpusRecord], vocab: &Vocabulary) -> (Vec<Pair>, Vec<Skipped>) {
        let mut pairs = Vec::new();
        let mut skipped = Vec::new();
        for rec in records {
            let built = self
                .code_input(rec, vocab)
                .and_then(|code| Ok((code, self.summary_input(rec, vocab)?)));
            match built {
                Ok((code, summary)) => pairs.push(Pair {
                    id: rec.id.clone(),
                    code,
                    summary,
                }),
                Err(e) => skipped.push(Skipped {
                    id: rec.id.clone(),
                    reason: e.to_string(),
                }),
            }
        }
        (pairs, skipped)
    }
}

/// A (program, summary) pair ready for the encoders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pair {
    pub id: String,
    pub code: EncoderInput,
    pub summary: EncoderInput,
}

/// A record left out because its graphs could not be built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skipped {
    pub id: String,
    pub reason: String,
}
