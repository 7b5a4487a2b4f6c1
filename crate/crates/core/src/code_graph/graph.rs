use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use super::ast::Ast;
use super::dataflow::{compute_dataflow_edges_with, LastUsePolicy};
use super::subtoken::split_identifier;
use crate::error::{Error, Result};

/// Default maximum node count of a program or summary graph.
pub const DEFAULT_NODE_CAP: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeType {
    AstEdge,
    NextToken,
    SubToken,
    LastUse,
    LastWrite,
    ComputedFrom,
}

impl EdgeType {
    pub const ALL: [EdgeType; 6] = [
        EdgeType::AstEdge,
        EdgeType::NextToken,
        EdgeType::SubToken,
        EdgeType::LastUse,
        EdgeType::LastWrite,
        EdgeType::ComputedFrom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EdgeType::AstEdge => "AstEdge",
            EdgeType::NextToken => "NextToken",
            EdgeType::SubToken => "SubToken",
            EdgeType::LastUse => "LastUse",
            EdgeType::LastWrite => "LastWrite",
            EdgeType::ComputedFrom => "ComputedFrom",
        }
    }

    pub fn is_dataflow(self) -> bool {
        matches!(
            self,
            EdgeType::LastUse | EdgeType::LastWrite | EdgeType::ComputedFrom
        )
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EdgeType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EdgeType::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown edge type `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub edge_type: EdgeType,
}

/// A node of a [`ProgramGraph`]: either an AST node or a subtoken split from
/// a terminal identifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgramNode {
    pub id: usize,
    /// AST kind, or `SubToken` for subtoken nodes.
    pub kind: String,
    pub label: String,
    pub is_terminal: bool,
    pub token_index: Option<usize>,
    /// Originating terminal of a subtoken node.
    pub origin: Option<usize>,
}

impl ProgramNode {
    pub fn is_subtoken(&self) -> bool {
        self.origin.is_some()
    }

    /// Vocabulary entry used to embed this node: its label when it has one,
    /// otherwise its kind.
    pub fn token(&self) -> &str {
        if self.label.is_empty() {
            &self.kind
        } else {
            &self.label
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphStats {
    pub nodes: usize,
    pub subtoken_nodes: usize,
    pub edges: BTreeMap<EdgeType, usize>,
}

impl GraphStats {
    pub fn total_edges(&self) -> usize {
        self.edges.values().sum()
    }

    pub fn count(&self, t: EdgeType) -> usize {
        self.edges.get(&t).copied().unwrap_or(0)
    }
}

/// Multi-edged directed graph over AST and subtoken nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgramGraph {
    nodes: Vec<ProgramNode>,
    edges: Vec<Edge>,
    node_cap: usize,
}

impl ProgramGraph {
    pub fn nodes(&self) -> &[ProgramNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_cap(&self) -> usize {
        self.node_cap
    }

    pub fn edges_of(&self, t: EdgeType) -> impl Iterator<Item = &Edge> + '_ {
        self.edges.iter().filter(move |e| e.edge_type == t)
    }

    /// Surviving terminal ids in ascending token order.
    pub fn terminals(&self) -> Vec<usize> {
        let mut t: Vec<(usize, usize)> = self
            .nodes
            .iter()
            .filter_map(|n| n.token_index.map(|ti| (ti, n.id)))
            .collect();
        t.sort_unstable();
        t.into_iter().map(|(_, id)| id).collect()
    }

    pub fn stats(&self) -> GraphStats {
        let mut edges: BTreeMap<EdgeType, usize> = EdgeType::ALL.iter().map(|&t| (t, 0)).collect();
        for e in &self.edges {
            *edges.entry(e.edge_type).or_default() += 1;
        }
        GraphStats {
            nodes: self.nodes.len(),
            subtoken_nodes: self.nodes.iter().filter(|n| n.is_subtoken()).count(),
            edges,
        }
    }

    /// Text dump: NODE lines in the AST ingestion layout, then `E` lines.
    /// Subtoken nodes list their originating terminal in the parent column.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let parent: BTreeMap<usize, usize> = self
            .edges_of(EdgeType::AstEdge)
            .map(|e| (e.dst, e.src))
            .collect();
        let dash = |v: Option<usize>| v.map_or("-".to_string(), |x| x.to_string());
        for n in &self.nodes {
            let par = if n.is_subtoken() {
                n.origin
            } else {
                parent.get(&n.id).copied()
            };
            let label = if n.label.is_empty() { "-" } else { &n.label };
            let _ = writeln!(
                out,
                "NODE\t{}\t{}\t{}\t{}\t{}\t{}",
                n.id,
                n.kind,
                dash(par),
                if n.is_terminal { "T" } else { "N" },
                dash(n.token_index),
                label
            );
        }
        for e in &self.edges {
            let _ = writeln!(out, "E\t{}\t{}\t{}", e.src, e.dst, e.edge_type);
        }
        out
    }

    fn push_edge(&mut self, src: usize, dst: usize, edge_type: EdgeType) {
        self.edges.push(Edge { src, dst, edge_type });
    }

    /// Drops dataflow edges touching nodes removed by truncation and appends
    /// the rest, skipping duplicates.
    fn merge(&mut self, extra: impl IntoIterator<Item = Edge>) {
        let n = self.nodes.len();
        let mut seen: std::collections::HashSet<Edge> = self.edges.iter().copied().collect();
        for e in extra {
            if e.src < n && e.dst < n && seen.insert(e) {
                self.edges.push(e);
            }
        }
    }
}

/// AST, NextToken and SubToken edges. Subtoken nodes take ids after the AST
/// nodes; the node list is then truncated to the first `node_cap` ids and
/// edges touching dropped nodes are removed.
pub fn add_syntactic_edges(ast: &Ast, node_cap: usize) -> Result<ProgramGraph> {
    if node_cap < 1 {
        return Err(Error::InvalidArgument("node_cap must be at least 1".into()));
    }
    let mut g = ProgramGraph {
        nodes: ast
            .nodes()
            .iter()
            .map(|n| ProgramNode {
                id: n.id,
                kind: n.kind.clone(),
                label: n.label.clone(),
                is_terminal: n.is_terminal,
                token_index: n.token_index,
                origin: None,
            })
            .collect(),
        edges: Vec::new(),
        node_cap,
    };
    for n in ast.nodes() {
        for &c in &n.children {
            g.push_edge(n.id, c, EdgeType::AstEdge);
        }
    }
    let terminals = ast.terminals();
    for w in terminals.windows(2) {
        g.push_edge(w[0], w[1], EdgeType::NextToken);
    }
    for &t in &terminals {
        let mut pieces = split_identifier(&ast.node(t).label);
        let mut seen = std::collections::HashSet::new();
        pieces.retain(|p| seen.insert(p.clone()));
        for piece in pieces {
            let id = g.nodes.len();
            g.nodes.push(ProgramNode {
                id,
                kind: "SubToken".into(),
                label: piece,
                is_terminal: false,
                token_index: None,
                origin: Some(t),
            });
            g.push_edge(id, t, EdgeType::SubToken);
        }
    }
    if g.nodes.len() > node_cap {
        g.nodes.truncate(node_cap);
        g.edges.retain(|e| e.src < node_cap && e.dst < node_cap);
    }
    Ok(g)
}

/// Full program graph: syntactic edges plus path-sensitive dataflow edges.
pub fn build_program_graph(ast: &Ast, node_cap: usize) -> Result<ProgramGraph> {
    build_program_graph_with(ast, node_cap, LastUsePolicy::default())
}

pub fn build_program_graph_with(
    ast: &Ast,
    node_cap: usize,
    policy: LastUsePolicy,
) -> Result<ProgramGraph> {
    let mut g = add_syntactic_edges(ast, node_cap)?;
    g.merge(compute_dataflow_edges_with(ast, policy));
    Ok(g)
}

/// Parses MiniLang source and builds its program graph.
pub fn build_program_graph_from_source(source: &str, node_cap: usize) -> Result<ProgramGraph> {
    build_program_graph(&super::parse_minilang(source)?, node_cap)
}
