//! Graph-attention collaborative filtering over a signed user–item graph whose
//! node features start from text embeddings of item metadata and user profiles.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod embedder;
pub mod evaluator;
pub mod graph;
mod http;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod profiler;
pub mod synthetic;
pub mod trainer;

pub use http::Retry;
