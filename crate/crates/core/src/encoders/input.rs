use std::collections::{BTreeSet, VecDeque};

use crate::code_graph::ProgramGraph;
use crate::error::{Error, Result};
use crate::summary_graph::SummaryGraph;
use crate::vocab::Vocabulary;

/// Graph prepared for an encoder: vocabulary ids per node, untyped directed
/// edges and the node ids that form the attention sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderInput {
    pub node_tokens: Vec<usize>,
    /// Distinct `(src, dst)` pairs; edge types are collapsed because
    /// aggregation is untyped.
    pub edges: Vec<(usize, usize)>,
    pub sequence: Vec<usize>,
}

fn dedup_edges(edges: impl IntoIterator<Item = (usize, usize)>) -> Vec<(usize, usize)> {
    let set: BTreeSet<(usize, usize)> = edges.into_iter().collect();
    set.into_iter().collect()
}

impl EncoderInput {
    pub fn new(node_tokens: Vec<usize>, edges: Vec<(usize, usize)>, sequence: Vec<usize>) -> Result<Self> {
        let n = node_tokens.len();
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        if let Some(&(s, d)) = edges.iter().find(|&&(s, d)| s >= n || d >= n) {
            return Err(Error::UnknownNode(s.max(d)));
        }
        if let Some(&v) = sequence.iter().find(|&&v| v >= n) {
            return Err(Error::UnknownNode(v));
        }
        Ok(EncoderInput {
            node_tokens,
            edges: dedup_edges(edges),
            sequence,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.node_tokens.len()
    }

    /// Program graph nodes embedded by label (terminals, subtokens) or kind
    /// (non-terminals); the sequence is the terminals in token order, each
    /// followed by its subtoken nodes when `include_subtokens` is set.
    pub fn from_program_graph(g: &ProgramGraph, vocab: &Vocabulary, include_subtokens: bool) -> Result<Self> {
        let node_tokens = g.nodes().iter().map(|n| vocab.index(n.token())).collect();
        let edges = g.edges().iter().map(|e| (e.src, e.dst)).collect();
        let mut sequence = Vec::new();
        for t in g.terminals() {
            sequence.push(t);
            if include_subtokens {
                sequence.extend(g.nodes().iter().filter(|n| n.origin == Some(t)).map(|n| n.id));
            }
        }
        Self::new(node_tokens, edges, sequence)
    }

    /// Summary graph nodes embedded by lowercased token or subtoken; the
    /// sequence is the summary tokens in order.
    pub fn from_summary_graph(g: &SummaryGraph, vocab: &Vocabulary, include_subtokens: bool) -> Result<Self> {
        let node_tokens = g.nodes().iter().map(|n| vocab.index(&n.label)).collect();
        let edges = g.edges().iter().map(|e| (e.src, e.dst)).collect();
        let mut sequence = Vec::new();
        for t in g.tokens() {
            sequence.push(t);
            if include_subtokens {
                sequence.extend(g.nodes().iter().filter(|n| n.origin == Some(t)).map(|n| n.id));
            }
        }
        Self::new(node_tokens, edges, sequence)
    }
}

/// Nodes within undirected distance `k` of `v`, following edges both ways.
pub fn receptive_field(num_nodes: usize, edges: &[(usize, usize)], v: usize, k: usize) -> Result<BTreeSet<usize>> {
    if v >= num_nodes {
        return Err(Error::UnknownNode(v));
    }
    let mut adj = vec![Vec::new(); num_nodes];
    for &(s, d) in edges {
        if s >= num_nodes || d >= num_nodes {
            return Err(Error::UnknownNode(s.max(d)));
        }
        adj[s].push(d);
        adj[d].push(s);
    }
    let mut dist = vec![usize::MAX; num_nodes];
    dist[v] = 0;
    let mut queue = VecDeque::from([v]);
    while let Some(u) = queue.pop_front() {
        if dist[u] == k {
            continue;
        }
        for &w in &adj[u] {
            if dist[w] == usize::MAX {
                dist[w] = dist[u] + 1;
                queue.push_back(w);
            }
        }
    }
    Ok((0..num_nodes).filter(|&u| dist[u] <= k).collect())
}

/// Disjoint union of several inputs with global node numbering.
#[derive(Debug, Clone)]
pub(crate) struct Batch {
    pub node_tokens: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
    pub node_offsets: Vec<usize>,
    pub sequence: Vec<usize>,
    pub seq_offsets: Vec<usize>,
}

impl Batch {
    pub fn new(items: &[&EncoderInput], need_sequence: bool) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let mut b = Batch {
            node_tokens: Vec::new(),
            edges: Vec::new(),
            node_offsets: vec![0],
            sequence: Vec::new(),
            seq_offsets: vec![0],
        };
        for item in items {
            let base = b.node_tokens.len();
            if item.node_tokens.is_empty() {
                return Err(Error::EmptyGraph);
            }
            if need_sequence && item.sequence.is_empty() {
                return Err(Error::EmptySequence);
            }
            b.node_tokens.extend(&item.node_tokens);
            b.edges.extend(item.edges.iter().map(|&(s, d)| (s + base, d + base)));
            b.sequence.extend(item.sequence.iter().map(|&v| v + base));
            b.node_offsets.push(b.node_tokens.len());
            b.seq_offsets.push(b.sequence.len());
        }
        Ok(b)
    }

    pub fn num_nodes(&self) -> usize {
        self.node_tokens.len()
    }

    pub fn len(&self) -> usize {
        self.node_offsets.len() - 1
    }
}
