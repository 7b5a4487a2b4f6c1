//! Summary graphs: dependency edges between summary tokens plus NextToken and
//! SubToken edges.

mod conllu;

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

pub use conllu::{linear_parse, parse_conllu, tokenize, DepToken, ParsedSentence};

use crate::code_graph::split_identifier;
use crate::error::{Error, Result};

pub const NEXT_TOKEN: &str = "NextToken";
pub const SUB_TOKEN: &str = "SubToken";

const DEFAULT_RELATIONS: &str = include_str!("relations.txt");

/// Allowed dependency relation names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationSet {
    names: BTreeSet<String>,
}

impl Default for RelationSet {
    /// The 49 Stanford typed-dependency relations.
    fn default() -> Self {
        Self::parse(DEFAULT_RELATIONS)
    }
}

impl RelationSet {
    /// One relation name per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Self {
        RelationSet {
            names: text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.contains(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    /// Maps a raw DEPREL to a member of the set: lowercased, then with any
    /// `:subtype` removed, else `dep`. The flag reports a fallback to `dep`.
    pub fn normalize(&self, raw: &str) -> (String, bool) {
        let lower = raw.to_lowercase();
        if self.contains(&lower) {
            return (lower, false);
        }
        if let Some((base, _)) = lower.split_once(':') {
            if self.contains(base) {
                return (base.to_string(), false);
            }
        }
        ("dep".to_string(), true)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummaryNode {
    pub id: usize,
    /// Lowercased token text, or the subtoken piece.
    pub label: String,
    /// Sentence index for tokens; `None` for subtoken nodes.
    pub sentence: Option<usize>,
    /// Originating token of a subtoken node.
    pub origin: Option<usize>,
}

impl SummaryNode {
    pub fn is_subtoken(&self) -> bool {
        self.origin.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SummaryEdge {
    pub src: usize,
    pub dst: usize,
    /// Dependency relation, `NextToken` or `SubToken`.
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummaryGraph {
    nodes: Vec<SummaryNode>,
    edges: Vec<SummaryEdge>,
    token_count: usize,
    node_cap: usize,
    unknown_relations: usize,
}

impl SummaryGraph {
    pub fn nodes(&self) -> &[SummaryNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[SummaryEdge] {
        &self.edges
    }

    pub fn node_cap(&self) -> usize {
        self.node_cap
    }

    /// Surviving token (non-subtoken) ids in order.
    pub fn tokens(&self) -> Vec<usize> {
        (0..self.token_count.min(self.nodes.len())).collect()
    }

    /// Number of relations that were not in the relation set and were
    /// mapped to `dep`.
    pub fn unknown_relations(&self) -> usize {
        self.unknown_relations
    }

    pub fn edges_labelled<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a SummaryEdge> + 'a {
        self.edges.iter().filter(move |e| e.label == label)
    }

    /// Line dump: `NODE\tid\tToken\tsentence\tlabel` or
    /// `NODE\tid\tSubToken\torigin\tlabel`, then `E\tsrc\tdst\tlabel`.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for n in &self.nodes {
            match n.origin {
                Some(o) => s.push_str(&format!("NODE\t{}\tSubToken\t{o}\t{}\n", n.id, n.label)),
                None => s.push_str(&format!("NODE\t{}\tToken\t{}\t{}\n", n.id, n.sentence.unwrap_or(0), n.label)),
            }
        }
        for e in &self.edges {
            s.push_str(&format!("E\t{}\t{}\t{}\n", e.src, e.dst, e.label));
        }
        s
    }

    /// Edges that are neither NextToken nor SubToken.
    pub fn dependency_edges(&self) -> impl Iterator<Item = &SummaryEdge> + '_ {
        self.edges
            .iter()
            .filter(|e| e.label != NEXT_TOKEN && e.label != SUB_TOKEN)
    }
}

/// Builds the summary graph of one or more parsed sentences. Dependency
/// edges run from dependent to head; the root emits none. Tokens keep their
/// order across sentences for the NextToken chain, subtoken nodes follow
/// all tokens, and the node list is truncated to `node_cap`.
pub fn build_summary_graph(
    sentences: &[ParsedSentence],
    relations: &RelationSet,
    node_cap: usize,
) -> Result<SummaryGraph> {
    if node_cap < 1 {
        return Err(Error::InvalidArgument("node_cap must be at least 1".into()));
    }
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    let mut unknown = 0;
    let mut originals = Vec::new();
    for (si, sentence) in sentences.iter().enumerate() {
        let base = nodes.len();
        for tok in &sentence.tokens {
            let id = nodes.len();
            nodes.push(SummaryNode {
                id,
                label: tok.form.to_lowercase(),
                sentence: Some(si),
                origin: None,
            });
            originals.push(tok.form.clone());
        }
        for (i, tok) in sentence.tokens.iter().enumerate() {
            if tok.head == 0 {
                continue;
            }
            if tok.head > sentence.len() {
                return Err(Error::InvalidArgument(format!(
                    "sentence {si}: head {} out of range",
                    tok.head
                )));
            }
            let (label, fallback) = relations.normalize(&tok.deprel);
            unknown += usize::from(fallback);
            edges.push(SummaryEdge {
                src: base + i,
                dst: base + tok.head - 1,
                label,
            });
        }
    }
    let token_count = nodes.len();
    for i in 1..token_count {
        edges.push(SummaryEdge {
            src: i - 1,
            dst: i,
            label: NEXT_TOKEN.into(),
        });
    }
    for (t, form) in originals.iter().enumerate() {
        let mut seen = HashSet::new();
        for piece in split_identifier(form) {
            if !seen.insert(piece.clone()) {
                continue;
            }
            let id = nodes.len();
            nodes.push(SummaryNode {
                id,
                label: piece,
                sentence: None,
                origin: Some(t),
            });
            edges.push(SummaryEdge {
                src: id,
                dst: t,
                label: SUB_TOKEN.into(),
            });
        }
    }
    if nodes.len() > node_cap {
        nodes.truncate(node_cap);
        edges.retain(|e| e.src < node_cap && e.dst < node_cap);
    }
    let mut seen = HashSet::new();
    edges.retain(|e| seen.insert(e.clone()));
    Ok(SummaryGraph {
        nodes,
        edges,
        token_count,
        node_cap,
        unknown_relations: unknown,
    })
}

/// Summary graph of free text using [`linear_parse`].
pub fn build_linear_summary_graph(text: &str, node_cap: usize) -> Result<SummaryGraph> {
    build_summary_graph(&[linear_parse(text)], &RelationSet::default(), node_cap)
}
