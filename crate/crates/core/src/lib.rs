//! Clinical timeline extraction: chunk notes, retrieve query-relevant
//! chunks, annotate events with hour offsets via an LLM, and turn the
//! results into temporal pair datasets and summary statistics.

pub mod annotation;
pub mod chunking;
pub mod config;
pub mod corpus;
pub mod error;
mod http;
pub mod parallel;
pub mod pipeline;
pub mod retrieval;
pub mod stats;
pub mod timeline;

pub use error::{Error, Result};
pub use pipeline::{Pipeline, StageName};
