//! msrag: multi-source retrieval question answering.
//!
//! A question is semantically segmented into sub-questions that drive web
//! search (merged and summarized into Information-Web), an LLM generates
//! Information-GPT from its own knowledge, and the bare question forms the
//! third path. One reader answer per channel is embedded and the candidate
//! with the highest cosine similarity to the reference wins. An evaluation
//! harness scores runs with EM / token-F1 / accuracy and renders the
//! method-by-dataset comparison tables.
//!
//! Everything runs offline with deterministic mock providers; HTTP providers
//! and a content-addressed response cache with strict replay cover live use.

pub mod canon;
pub mod channels;
pub mod decompose;
pub mod eval;
pub mod exec;
pub mod pipeline;
pub mod prompts;
pub mod providers;
pub mod select;
pub mod types;

pub use exec::CancelToken;
pub use pipeline::{Pipeline, ProviderSet};
pub use select::Selector;
pub use types::{
    AnswerKind, CandidateAnswer, Channel, EvidenceBundle, Mode, PipelineConfig, Question,
    SelectionResult, SubQuestionSet, SubQuestionSource, FALLBACK_SENTENCE,
};
