//! Reader for externally produced ASTs, one tab-separated record per line:
//!
//! ```text
//! NODE <id> <kind> <parent-id|-> <T|N> <token-index|-> <label|->
//! ```
//!
//! Lines starting with `#` are comments. `E` lines and `SubToken` nodes from
//! a graph dump are skipped, so a dump can be read back as its AST.

use std::path::Path;

use super::ast::{Ast, AstNode};
use crate::error::{Error, Result};

struct Record {
    line: usize,
    id: usize,
    kind: String,
    parent: Option<usize>,
    terminal: bool,
    token_index: Option<usize>,
    label: String,
}

fn malformed(line: usize, message: impl Into<String>) -> Error {
    Error::AstFormat {
        line,
        message: message.into(),
    }
}

fn optional_index(line: usize, field: &str, what: &str) -> Result<Option<usize>> {
    if field == "-" {
        return Ok(None);
    }
    field
        .parse()
        .map(Some)
        .map_err(|_| malformed(line, format!("invalid {what} `{field}`")))
}

fn parse_record(line: usize, text: &str) -> Result<Record> {
    let fields: Vec<&str> = if text.contains('\t') {
        text.splitn(7, '\t').collect()
    } else {
        text.splitn(7, ' ').collect()
    };
    if fields.len() != 7 {
        return Err(malformed(line, format!("expected 7 fields, found {}", fields.len())));
    }
    let id = fields[1]
        .parse()
        .map_err(|_| malformed(line, format!("invalid node id `{}`", fields[1])))?;
    let terminal = match fields[4] {
        "T" => true,
        "N" => false,
        other => return Err(malformed(line, format!("terminal flag must be T or N, found `{other}`"))),
    };
    if fields[2].is_empty() {
        return Err(malformed(line, "empty node kind"));
    }
    Ok(Record {
        line,
        id,
        kind: fields[2].to_string(),
        parent: optional_index(line, fields[3], "parent id")?,
        terminal,
        token_index: optional_index(line, fields[5], "token index")?,
        label: if fields[6] == "-" {
            String::new()
        } else {
            fields[6].to_string()
        },
    })
}

/// Parses NODE-format text into a validated AST.
pub fn ingest_ast_str(text: &str) -> Result<Ast> {
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim_end_matches('\r');
        if t.trim().is_empty() || t.starts_with('#') || t.starts_with("E\t") || t.starts_with("E ") {
            continue;
        }
        if !(t.starts_with("NODE\t") || t.starts_with("NODE ")) {
            return Err(malformed(line, "expected a NODE record"));
        }
        let r = parse_record(line, t)?;
        if r.kind != "SubToken" {
            records.push(r);
        }
    }
    if records.is_empty() {
        return Err(malformed(0, "no root"));
    }
    let n = records.len();
    let mut slots: Vec<Option<AstNode>> = vec![None; n];
    for r in &records {
        if r.id >= n {
            return Err(malformed(r.line, format!("node id {} is not dense in 0..{n}", r.id)));
        }
        if slots[r.id].is_some() {
            return Err(malformed(r.line, format!("duplicate node id {}", r.id)));
        }
        if r.terminal != r.token_index.is_some() {
            return Err(malformed(r.line, "token index must be given exactly for terminals"));
        }
        slots[r.id] = Some(AstNode {
            id: r.id,
            kind: r.kind.clone(),
            label: r.label.clone(),
            children: Vec::new(),
            is_terminal: r.terminal,
            token_index: r.token_index,
        });
    }
    let mut nodes: Vec<AstNode> = slots.into_iter().map(|s| s.expect("ids are dense")).collect();
    for r in &records {
        if let Some(p) = r.parent {
            if p >= n {
                return Err(malformed(r.line, format!("parent id {p} does not exist")));
            }
            if p == r.id {
                return Err(malformed(r.line, "node is its own parent"));
            }
            nodes[p].children.push(r.id);
        }
    }
    Ast::new(nodes)
}

/// Reads a NODE-format file.
pub fn ingest_ast_file(path: impl AsRef<Path>) -> Result<Ast> {
    ingest_ast_str(&std::fs::read_to_string(path)?)
}

/// Serializes an AST to the NODE format.
pub fn ast_to_node_format(ast: &Ast) -> String {
    let mut out = String::new();
    for n in ast.nodes() {
        let dash = |v: Option<usize>| v.map_or("-".to_string(), |x| x.to_string());
        out.push_str(&format!(
            "NODE\t{}\t{}\t{}\t{}\t{}\t{}\n",
            n.id,
            n.kind,
            dash(ast.parent(n.id)),
            if n.is_terminal { "T" } else { "N" },
            dash(n.token_index),
            if n.label.is_empty() { "-" } else { &n.label }
        ));
    }
    out
}
