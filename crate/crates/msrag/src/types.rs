//! Domain types shared by every stage of the pipeline.
//!
//! All types here are plain values: immutable after construction, cheap to
//! clone, serializable, and safe to share between worker threads. No I/O and
//! no provider knowledge.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Literal used when a channel cannot produce evidence.
pub const FALLBACK_SENTENCE: &str = "The relevant information could not be retrieved.";

/// Validation failures for core value types.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CoreError {
    #[error("question text is empty")]
    EmptyQuestionText,
    #[error("question {0} has no gold answers")]
    NoGoldAnswers(String),
    #[error("question {0} has an empty gold answer")]
    EmptyGoldAnswer(String),
    #[error("boolean question {id} has gold answer {answer:?} not normalizable to yes/no")]
    NonBooleanGold { id: String, answer: String },
    #[error("sub-question set for {0} is empty")]
    EmptySubQuestions(String),
    #[error("sub-question set for {0} contains an empty item")]
    EmptySubQuestionItem(String),
    #[error("sub-question set for {parent} has duplicate item {item:?}")]
    DuplicateSubQuestion { parent: String, item: String },
    #[error("config error: {0}")]
    Config(String),
}

/// Whether a question expects a text span or a yes/no answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    Span,
    Boolean,
}

/// One QA item with its gold answer aliases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub gold_answers: Vec<String>,
    pub answer_kind: AnswerKind,
    pub dataset_tag: String,
}

/// Lenient yes/no normalization used for boolean gold answers.
pub fn normalize_boolean_gold(s: &str) -> Option<bool> {
    let cleaned: String = s
        .trim()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect::<String>()
        .to_lowercase();
    match cleaned.trim() {
        "yes" | "true" => Some(true),
        "no" | "false" => Some(false),
        _ => None,
    }
}

impl Question {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        gold_answers: Vec<String>,
        answer_kind: AnswerKind,
        dataset_tag: impl Into<String>,
    ) -> Result<Self, CoreError> {
        let id = id.into();
        let text = text.into();
        if text.trim().is_empty() {
            return Err(CoreError::EmptyQuestionText);
        }
        if gold_answers.is_empty() {
            return Err(CoreError::NoGoldAnswers(id));
        }
        for gold in &gold_answers {
            if gold.trim().is_empty() {
                return Err(CoreError::EmptyGoldAnswer(id));
            }
            if answer_kind == AnswerKind::Boolean && normalize_boolean_gold(gold).is_none() {
                return Err(CoreError::NonBooleanGold {
                    id,
                    answer: gold.clone(),
                });
            }
        }
        Ok(Self {
            id,
            text,
            gold_answers,
            answer_kind,
            dataset_tag: dataset_tag.into(),
        })
    }

    /// Gold value of a boolean question. `None` for span questions.
    pub fn gold_bool(&self) -> Option<bool> {
        if self.answer_kind != AnswerKind::Boolean {
            return None;
        }
        self.gold_answers
            .iter()
            .find_map(|g| normalize_boolean_gold(g))
    }
}

/// Where a sub-question set came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubQuestionSource {
    /// Parsed from a segmentation model response.
    Model,
    /// The original question, used verbatim when segmentation failed.
    Fallback,
}

/// Sub-questions produced by semantic segmentation of one question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubQuestionSet {
    pub parent_id: String,
    pub items: Vec<String>,
    pub source: SubQuestionSource,
}

impl SubQuestionSet {
    pub fn from_model(parent_id: impl Into<String>, items: Vec<String>) -> Result<Self, CoreError> {
        let parent_id = parent_id.into();
        if items.is_empty() {
            return Err(CoreError::EmptySubQuestions(parent_id));
        }
        let mut seen = BTreeSet::new();
        for item in &items {
            if item.trim().is_empty() {
                return Err(CoreError::EmptySubQuestionItem(parent_id));
            }
            if !seen.insert(item.trim().to_lowercase()) {
                return Err(CoreError::DuplicateSubQuestion {
                    parent: parent_id,
                    item: item.clone(),
                });
            }
        }
        Ok(Self {
            parent_id,
            items,
            source: SubQuestionSource::Model,
        })
    }

    /// Fallback set: the original question text, verbatim.
    pub fn fallback(question: &Question) -> Self {
        Self {
            parent_id: question.id.clone(),
            items: vec![question.text.clone()],
            source: SubQuestionSource::Fallback,
        }
    }
}

/// The three evidence paths. Declaration order is the canonical order used
/// for candidate lists and tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Web,
    Gpt,
    NoRetrieval,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Web, Channel::Gpt, Channel::NoRetrieval];

    pub fn label(&self) -> &'static str {
        match self {
            Channel::Web => "web",
            Channel::Gpt => "gpt",
            Channel::NoRetrieval => "no_retrieval",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Channel-tagged context text fed to the reader model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceBundle {
    pub channel: Channel,
    pub text: String,
    /// Contributing result URLs for Web, model id for Gpt, empty otherwise.
    pub provenance: Vec<String>,
    pub is_fallback: bool,
}

impl EvidenceBundle {
    /// The empty bundle used by the direct (no retrieval) path.
    pub fn no_retrieval() -> Self {
        Self {
            channel: Channel::NoRetrieval,
            text: String::new(),
            provenance: Vec::new(),
            is_fallback: false,
        }
    }

    pub fn web(text: impl Into<String>, provenance: Vec<String>) -> Self {
        let text = text.into();
        let is_fallback = text == FALLBACK_SENTENCE;
        Self {
            channel: Channel::Web,
            text,
            provenance,
            is_fallback,
        }
    }

    pub fn gpt(text: impl Into<String>, model_id: impl Into<String>) -> Self {
        let text = text.into();
        let is_fallback = text == FALLBACK_SENTENCE;
        Self {
            channel: Channel::Gpt,
            text,
            provenance: vec![model_id.into()],
            is_fallback,
        }
    }
}

/// One answer produced by feeding a channel's evidence (or nothing) plus the
/// question to the reader model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateAnswer {
    pub channel: Channel,
    pub text: String,
    /// Hex digest of the exact rendered reader prompt.
    pub prompt_digest: String,
}

/// Outcome of similarity-based answer selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Similarity score per candidate channel, each in [-1, 1].
    pub similarities: BTreeMap<Channel, f64>,
    pub selected_channel: Channel,
    pub selected_text: String,
    /// True when two or more candidates attain the maximum similarity.
    pub tie_broken: bool,
    /// Channels whose embedding had zero norm (scored 0).
    pub degenerate_flags: BTreeSet<Channel>,
}

/// Which channels run; one variant per row of the ablation comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Full,
    NoGpt,
    NoWeb,
    GptOnly,
    WebOnly,
    DirectOnly,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::DirectOnly,
        Mode::GptOnly,
        Mode::WebOnly,
        Mode::NoGpt,
        Mode::NoWeb,
        Mode::Full,
    ];

    /// The ablation sweep run by `msrag ablate`.
    pub const ABLATION: [Mode; 5] = [
        Mode::DirectOnly,
        Mode::GptOnly,
        Mode::NoGpt,
        Mode::NoWeb,
        Mode::Full,
    ];

    pub fn active_channels(&self) -> &'static [Channel] {
        match self {
            Mode::Full => &[Channel::Web, Channel::Gpt, Channel::NoRetrieval],
            Mode::NoGpt => &[Channel::Web, Channel::NoRetrieval],
            Mode::NoWeb => &[Channel::Gpt, Channel::NoRetrieval],
            Mode::GptOnly => &[Channel::Gpt],
            Mode::WebOnly => &[Channel::Web],
            Mode::DirectOnly => &[Channel::NoRetrieval],
        }
    }

    /// Single-channel modes skip similarity selection entirely.
    pub fn bypasses_selection(&self) -> bool {
        self.active_channels().len() == 1
    }

    /// Stable identifier used in paths and flags.
    pub fn label(&self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::NoGpt => "no-gpt",
            Mode::NoWeb => "no-web",
            Mode::GptOnly => "gpt-only",
            Mode::WebOnly => "web-only",
            Mode::DirectOnly => "direct-only",
        }
    }

    /// Row label used in comparison tables.
    pub fn display_name(&self) -> &'static str {
        match self {
            Mode::Full => "MSRAG",
            Mode::NoGpt => "w/o GPT",
            Mode::NoWeb => "w/o Web",
            Mode::GptOnly => "GPT-Retrieval",
            Mode::WebOnly => "Web-Retrieval",
            Mode::DirectOnly => "No-RAG",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "full" => Some(Mode::Full),
            "no-gpt" => Some(Mode::NoGpt),
            "no-web" => Some(Mode::NoWeb),
            "gpt-only" => Some(Mode::GptOnly),
            "web-only" => Some(Mode::WebOnly),
            "direct-only" => Some(Mode::DirectOnly),
            _ => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Bounded retry with exponential backoff for transient provider failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryConfig {
    /// Maximum retries after the first attempt (total attempts = retries + 1).
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryConfig {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay_ms: 200,
            max_delay_ms: 5_000,
        }
    }
}

/// Everything the pipeline needs to process one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub sub_question_count: usize,
    pub search_top_k: usize,
    pub runs: usize,
    /// Model performing segmentation, summarization and context generation.
    pub chat_model: String,
    /// Model producing the final candidate answers.
    pub reader_model: String,
    pub embed_model: String,
    pub chat_base_url: String,
    pub search_base_url: String,
    pub embed_base_url: String,
    /// Expected embedding dimension of the HTTP embedder.
    pub embed_dim: usize,
    pub cache_dir: Option<PathBuf>,
    pub replay_strict: bool,
    pub random_seed: u64,
    /// Word budget for evidence blocks fed to the reader.
    pub max_context_words: usize,
    pub max_answer_tokens: u32,
    pub retry: RetryConfig,
    /// Requests per second per provider; 0 disables rate limiting.
    pub rate_limit_qps: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Full,
            sub_question_count: 3,
            search_top_k: 5,
            runs: 3,
            chat_model: "gpt-3.5-turbo".to_string(),
            reader_model: "llama2-7b-chat".to_string(),
            embed_model: "bert-base-uncased".to_string(),
            chat_base_url: "http://localhost:8081/v1".to_string(),
            search_base_url: "http://localhost:8082/search".to_string(),
            embed_base_url: "http://localhost:8083/embed".to_string(),
            embed_dim: 768,
            cache_dir: None,
            replay_strict: false,
            random_seed: 42,
            max_context_words: 200,
            max_answer_tokens: 128,
            retry: RetryConfig::default(),
            rate_limit_qps: 0.0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.sub_question_count < 1 {
            return Err(CoreError::Config("sub_question_count must be >= 1".into()));
        }
        if self.runs < 1 {
            return Err(CoreError::Config("runs must be >= 1".into()));
        }
        if self.replay_strict {
            match &self.cache_dir {
                Some(dir) if dir.is_dir() => {}
                Some(dir) => {
                    return Err(CoreError::Config(format!(
                        "strict replay requires an existing cache directory, {} not found",
                        dir.display()
                    )));
                }
                None => {
                    return Err(CoreError::Config(
                        "strict replay requires cache_dir to be set".into(),
                    ));
                }
            }
        }
        if !self.rate_limit_qps.is_finite() || self.rate_limit_qps < 0.0 {
            return Err(CoreError::Config(
                "rate_limit_qps must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}
