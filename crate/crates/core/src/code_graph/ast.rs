use crate::error::{Error, Result};

/// One node of an abstract syntax tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AstNode {
    pub id: usize,
    /// Node-kind name such as `Assign`, `Call` or `Identifier`.
    pub kind: String,
    /// Source token for terminals; empty for non-terminals.
    pub label: String,
    pub children: Vec<usize>,
    pub is_terminal: bool,
    /// Source-order position among terminals.
    pub token_index: Option<usize>,
}

/// Validated tree of [`AstNode`]s with dense ids `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ast {
    nodes: Vec<AstNode>,
    root: usize,
    parents: Vec<Option<usize>>,
}

impl Ast {
    /// Checks the tree invariants: dense ids, a single root reaching every
    /// node exactly once, childless terminals, and terminal token indices
    /// forming a permutation of `0..T`.
    pub fn new(nodes: Vec<AstNode>) -> Result<Self> {
        let invalid = |message: String| Error::AstFormat { line: 0, message };
        if nodes.is_empty() {
            return Err(invalid("no root".into()));
        }
        let n = nodes.len();
        let mut parents = vec![None; n];
        for (i, node) in nodes.iter().enumerate() {
            if node.id != i {
                return Err(invalid(format!("node at position {i} has id {}", node.id)));
            }
            if node.is_terminal && !node.children.is_empty() {
                return Err(invalid(format!("terminal {i} has children")));
            }
            if node.is_terminal != node.token_index.is_some() {
                return Err(invalid(format!("node {i}: token index must be set exactly on terminals")));
            }
            for &c in &node.children {
                if c >= n {
                    return Err(invalid(format!("node {i} references missing child {c}")));
                }
                if parents[c].replace(i).is_some() {
                    return Err(invalid(format!("node {c} has two parents")));
                }
            }
        }
        let roots: Vec<usize> = (0..n).filter(|&i| parents[i].is_none()).collect();
        let root = match roots.as_slice() {
            [r] => *r,
            [] => return Err(invalid("no root".into())),
            _ => return Err(invalid(format!("multiple roots {roots:?}"))),
        };
        let mut seen = vec![false; n];
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            if std::mem::replace(&mut seen[v], true) {
                return Err(invalid("cycle in children".into()));
            }
            stack.extend(&nodes[v].children);
        }
        if let Some(orphan) = seen.iter().position(|s| !s) {
            return Err(invalid(format!("node {orphan} unreachable from root (cycle)")));
        }
        let mut indices: Vec<usize> = nodes.iter().filter_map(|nd| nd.token_index).collect();
        indices.sort_unstable();
        if indices.iter().enumerate().any(|(i, &t)| i != t) {
            return Err(invalid("terminal token indices are not a permutation of 0..T".into()));
        }
        Ok(Ast {
            nodes,
            root,
            parents,
        })
    }

    pub fn nodes(&self) -> &[AstNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &AstNode {
        &self.nodes[id]
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, id: usize) -> Option<usize> {
        self.parents[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Terminal ids in ascending token order.
    pub fn terminals(&self) -> Vec<usize> {
        let mut t: Vec<(usize, usize)> = self
            .nodes
            .iter()
            .filter_map(|n| n.token_index.map(|ti| (ti, n.id)))
            .collect();
        t.sort_unstable();
        t.into_iter().map(|(_, id)| id).collect()
    }

    /// Compact s-expression, e.g. `Assign(Identifier "x", IntLit "1")`.
    pub fn to_sexpr(&self) -> String {
        fn go(ast: &Ast, id: usize, out: &mut String) {
            let n = ast.node(id);
            out.push_str(&n.kind);
            if n.is_terminal {
                out.push_str(&format!(" {:?}", n.label));
            } else if !n.children.is_empty() {
                out.push('(');
                for (i, &c) in n.children.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    go(ast, c, out);
                }
                out.push(')');
            }
        }
        let mut s = String::new();
        go(self, self.root, &mut s);
        s
    }
}

/// Incremental builder that assigns pre-order ids and source-order token
/// indices.
#[derive(Debug, Default)]
pub(crate) struct AstBuilder {
    nodes: Vec<AstNode>,
    next_token: usize,
}

impl AstBuilder {
    pub fn open(&mut self, kind: &str) -> usize {
        let id = self.nodes.len();
        self.nodes.push(AstNode {
            id,
            kind: kind.to_string(),
            label: String::new(),
            children: Vec::new(),
            is_terminal: false,
            token_index: None,
        });
        id
    }

    pub fn terminal(&mut self, kind: &str, label: &str) -> usize {
        let id = self.nodes.len();
        self.nodes.push(AstNode {
            id,
            kind: kind.to_string(),
            label: label.to_string(),
            children: Vec::new(),
            is_terminal: true,
            token_index: Some(self.next_token),
        });
        self.next_token += 1;
        id
    }

    pub fn attach(&mut self, parent: usize, child: usize) {
        self.nodes[parent].children.push(child);
    }

    pub fn finish(self) -> Result<Ast> {
        Ast::new(self.nodes)
    }
}
