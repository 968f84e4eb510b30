//! Batch conversational QA harness.
//!
//! Groups of Yes/No questions are answered over long call transcripts in a
//! single prompt; the model returns one JSON object with a Judgment and a
//! supporting-utterance Navigation index per question. This crate loads
//! corpora, forms question groups, renders prompts, dispatches them to mock
//! or OpenAI-compatible backends, parses the structured responses with a
//! fixed failure taxonomy, scores against references, and exports
//! fine-tuning datasets and evaluation manifests.

pub mod corpus;
pub mod dataset_builder;
pub mod error;
pub mod fixture;
pub mod grouping;
pub mod llm_backend;
pub mod metrics;
pub mod parser;
pub mod prompt;
pub mod runner;

pub use error::{Error, Result};
