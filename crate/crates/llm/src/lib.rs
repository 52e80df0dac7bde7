//! Rumination for text generators: a few-shot prompt asks a generation
//! service for knowledge statements, which are prepended to the question
//! before each choice is scored.

mod cache;
mod client;
mod pipeline;
mod template;

pub use cache::CachedClient;
pub use client::{
    GenerationClient, GenerationOutput, GenerationRequest, GenerationResponse, HttpClient, RequestMode, StubClient,
    ENDPOINT_ENV, KEY_ENV,
};
pub use pipeline::{answer_with_knowledge, run_llm, ruminate_text, Knowledge, LlmAnswer, LlmDecision};
pub use template::FewShotTemplate;
pub use rumi_core::{Error, Result};
