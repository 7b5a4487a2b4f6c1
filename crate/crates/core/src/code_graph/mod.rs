//! Program graphs: AST nodes plus subtoken nodes joined by six edge types.

mod ast;
mod dataflow;
mod graph;
mod ingest;
mod minilang;
mod subtoken;

pub use ast::{Ast, AstNode};
pub use dataflow::{
    compute_dataflow_edges, compute_dataflow_edges_with, var_occurrences, LastUsePolicy, Role,
    VarOccurrence,
};
pub use graph::{
    add_syntactic_edges, build_program_graph, build_program_graph_from_source,
    build_program_graph_with, Edge, EdgeType, GraphStats, ProgramGraph, ProgramNode,
    DEFAULT_NODE_CAP,
};
pub use ingest::{ast_to_node_format, ingest_ast_file, ingest_ast_str};
pub use minilang::{operator_kind, parse_minilang};
pub use subtoken::split_identifier;
