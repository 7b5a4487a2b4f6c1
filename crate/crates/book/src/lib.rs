//! Every Rust listing in the guide under `book/src` runs as a doc-test of one
//! module per chapter, so the book cannot drift from the code.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/program-graphs.md")]
pub mod program_graphs {}
#[doc = include_str!("../../../book/src/summary-graphs.md")]
pub mod summary_graphs {}
#[doc = include_str!("../../../book/src/autodiff.md")]
pub mod autodiff {}
#[doc = include_str!("../../../book/src/encoders.md")]
pub mod encoders {}
#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}
#[doc = include_str!("../../../book/src/retrieval.md")]
pub mod retrieval {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
