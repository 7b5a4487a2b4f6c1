//! Path-sensitive LastUse / LastWrite / ComputedFrom analysis over an AST.
//!
//! Statements are walked in execution order. Each variable carries the set
//! of occurrences that may have been the most recent one (and the most
//! recent write) along some path; `if` joins by union and `while` bodies are
//! iterated until the state stops changing.

use std::collections::{BTreeMap, BTreeSet};

use super::ast::Ast;
use super::graph::{Edge, EdgeType};

/// Which earlier occurrences a LastUse edge may target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LastUsePolicy {
    /// Most recent occurrence of the variable, read or write.
    #[default]
    AnyOccurrence,
    /// Most recent read only.
    ReadsOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Read,
    Write,
}

/// A variable occurrence at a terminal `Identifier` node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarOccurrence {
    pub node: usize,
    pub name: String,
    pub role: Role,
    /// Source-order index of the innermost enclosing statement.
    pub statement: usize,
    /// Position within that statement; right-hand reads precede the write.
    pub order: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct VarState {
    last_occurrence: BTreeSet<usize>,
    last_read: BTreeSet<usize>,
    last_write: BTreeSet<usize>,
}

type State = BTreeMap<String, VarState>;

fn join(a: &State, b: &State) -> State {
    let mut out = a.clone();
    for (name, vb) in b {
        let va = out.entry(name.clone()).or_default();
        va.last_occurrence.extend(&vb.last_occurrence);
        va.last_read.extend(&vb.last_read);
        va.last_write.extend(&vb.last_write);
    }
    out
}

struct Analysis<'a> {
    ast: &'a Ast,
    policy: LastUsePolicy,
    edges: BTreeSet<(EdgeType, usize, usize)>,
    occurrences: Vec<VarOccurrence>,
    seen: BTreeSet<usize>,
    statement_rank: Vec<usize>,
    statement: usize,
    order: usize,
}

fn is_variable(ast: &Ast, id: usize) -> bool {
    let n = ast.node(id);
    n.is_terminal && n.kind == "Identifier"
}

fn is_statement(kind: &str) -> bool {
    matches!(kind, "Assign" | "If" | "While" | "Expr")
}

impl Analysis<'_> {
    fn occur(&mut self, id: usize, role: Role, state: &mut State) {
        let name = self.ast.node(id).label.clone();
        let var = state.entry(name.clone()).or_default();
        let uses = match self.policy {
            LastUsePolicy::AnyOccurrence => &var.last_occurrence,
            LastUsePolicy::ReadsOnly => &var.last_read,
        };
        for &t in uses {
            self.edges.insert((EdgeType::LastUse, id, t));
        }
        for &t in &var.last_write {
            self.edges.insert((EdgeType::LastWrite, id, t));
        }
        var.last_occurrence = BTreeSet::from([id]);
        match role {
            Role::Read => var.last_read = BTreeSet::from([id]),
            Role::Write => var.last_write = BTreeSet::from([id]),
        }
        if self.seen.insert(id) {
            self.occurrences.push(VarOccurrence {
                node: id,
                name,
                role,
                statement: self.statement,
                order: self.order,
            });
            self.order += 1;
        }
    }

    fn reads_in(&self, id: usize, out: &mut Vec<usize>) {
        if is_variable(self.ast, id) {
            out.push(id);
        }
        for &c in &self.ast.node(id).children {
            self.reads_in(c, out);
        }
    }

    fn begin_statement(&mut self, id: usize) {
        self.statement = self.statement_rank[id];
        self.order = 0;
    }

    fn visit(&mut self, id: usize, state: &mut State) {
        let node = self.ast.node(id);
        if is_statement(&node.kind) {
            self.begin_statement(id);
        }
        let children = node.children.clone();
        match node.kind.as_str() {
            "Assign" if !children.is_empty() && is_variable(self.ast, children[0]) => {
                let target = children[0];
                for &c in &children[1..] {
                    self.visit(c, state);
                }
                let mut rhs = Vec::new();
                for &c in &children[1..] {
                    self.reads_in(c, &mut rhs);
                }
                for r in rhs {
                    self.edges.insert((EdgeType::ComputedFrom, target, r));
                }
                self.occur(target, Role::Write, state);
            }
            "If" if children.len() >= 2 => {
                self.visit(children[0], state);
                let mut then_state = state.clone();
                self.visit(children[1], &mut then_state);
                let mut else_state = state.clone();
                for &c in &children[2..] {
                    self.visit(c, &mut else_state);
                }
                *state = join(&then_state, &else_state);
            }
            "While" if children.len() >= 2 => {
                let entry = state.clone();
                let mut back = State::new();
                loop {
                    let mut s = join(&entry, &back);
                    self.visit(children[0], &mut s);
                    let exit = s.clone();
                    for &c in &children[1..] {
                        self.visit(c, &mut s);
                    }
                    if s == back {
                        *state = exit;
                        break;
                    }
                    back = s;
                }
            }
            _ => {
                if is_variable(self.ast, id) {
                    self.occur(id, Role::Read, state);
                }
                for c in children {
                    self.visit(c, state);
                }
            }
        }
    }
}

fn analyse(ast: &Ast, policy: LastUsePolicy) -> Analysis<'_> {
    let mut a = Analysis {
        ast,
        policy,
        edges: BTreeSet::new(),
        occurrences: Vec::new(),
        seen: BTreeSet::new(),
        statement_rank: ast
            .nodes()
            .iter()
            .scan(0, |rank, n| {
                let r = *rank;
                if is_statement(&n.kind) {
                    *rank += 1;
                }
                Some(r)
            })
            .collect(),
        statement: 0,
        order: 0,
    };
    let mut state = State::new();
    a.visit(ast.root(), &mut state);
    a
}

/// LastUse, LastWrite and ComputedFrom edges, sorted by type, source and
/// destination.
pub fn compute_dataflow_edges(ast: &Ast) -> Vec<Edge> {
    compute_dataflow_edges_with(ast, LastUsePolicy::default())
}

pub fn compute_dataflow_edges_with(ast: &Ast, policy: LastUsePolicy) -> Vec<Edge> {
    analyse(ast, policy)
        .edges
        .into_iter()
        .map(|(edge_type, src, dst)| Edge { src, dst, edge_type })
        .collect()
}

/// Variable occurrences in first-visit execution order.
pub fn var_occurrences(ast: &Ast) -> Vec<VarOccurrence> {
    analyse(ast, LastUsePolicy::default()).occurrences
}
