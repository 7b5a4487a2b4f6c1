pub mod autodiff;
pub mod code_graph;
pub mod config;
pub mod encoders;
pub mod experiments;
mod error;
pub mod retrieval;
pub mod summary_graph;
pub mod training;
pub mod vocab;

pub use error::{Error, Result};
