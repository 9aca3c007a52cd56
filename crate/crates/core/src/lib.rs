//! Probing harness for code-summarization models.
//!
//! The crate lexes Python snippets, rewrites them into semantics-hiding
//! variants, asks chat-style LLM endpoints for summaries, and scores those
//! summaries with BLEU-4, BERTScore and code/description token overlap.

pub mod pylex;
pub mod corpus;
pub mod transform;
pub mod subtok;
pub mod metrics;
pub mod llmgen;
pub mod analysis;
pub mod scoring;
