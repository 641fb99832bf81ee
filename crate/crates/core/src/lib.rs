//! Embedding-similarity evaluation of generated answers and retrieval runs.
//!
//! Generated answers and retrieved passages are scored on one scale: cosine
//! similarity between their embeddings and judged-relevant (or top-retrieved)
//! passages from a retrieval benchmark.

pub mod benchmark_io;
pub mod embedding;
pub mod metrics;
pub mod protocols;
pub mod report;
pub mod synthetic;
